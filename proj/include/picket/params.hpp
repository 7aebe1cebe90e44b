#pragma once

#include <map>
#include <random>
#include <string>

#include "picket/autodiff.hpp"

namespace picket {

/// Warmup-then-decay learning rate: 0.5 * d^-0.5 * min(s^-0.5, 300^-1.5 * s).
/// Peaks at step 300.
double lr_at_step(long step, int d_model);

/// Named trainable tensors plus per-parameter Adam state. The step counter is
/// shared across all parameters.
class ParamStore {
public:
    ParamStore() = default;

    Var create(const std::string& name, std::size_t rows, std::size_t cols, double init_std,
               std::mt19937_64& rng);
    Var create_zeros(const std::string& name, std::size_t rows, std::size_t cols);
    Var create_from(const std::string& name, Tensor t);

    Var get(const std::string& name) const;
    bool has(const std::string& name) const { return entries_.count(name) > 0; }

    void zero_grad();
    /// One Adam update with bias correction; zeroes gradients and bumps the
    /// shared step counter. Throws naming the parameter on a non-finite grad.
    void adam_step(double lr);

    long step() const { return step_; }
    void set_step(long s) { step_ = s; }
    std::size_t parameter_count() const;

    template <typename F>
    void for_each(F&& f) const {
        for (const auto& [name, e] : entries_) f(name, e.var);
    }

    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-9;

private:
    struct Entry {
        Var var;
        Tensor m, v;
    };
    std::map<std::string, Entry> entries_;
    long step_ = 0;
};

}  // namespace picket
