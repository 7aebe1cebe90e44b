#include "picket/params.hpp"

#include <cmath>
#include <stdexcept>

namespace picket {

double lr_at_step(long step, int d_model) {
    if (step < 1) throw std::invalid_argument("lr_at_step: step must be >= 1");
    double s = static_cast<double>(step);
    double warm = std::pow(300.0, -1.5) * s;
    double decay = 1.0 / std::sqrt(s);
    return 0.5 / std::sqrt(static_cast<double>(d_model)) * std::min(decay, warm);
}

Var ParamStore::create(const std::string& name, std::size_t rows, std::size_t cols,
                       double init_std, std::mt19937_64& rng) {
    Tensor t(rows, cols);
    std::normal_distribution<double> g(0.0, init_std);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = g(rng);
    return create_from(name, std::move(t));
}

Var ParamStore::create_zeros(const std::string& name, std::size_t rows, std::size_t cols) {
    return create_from(name, Tensor(rows, cols));
}

Var ParamStore::create_from(const std::string& name, Tensor t) {
    if (entries_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
    Entry e;
    e.var = leaf(std::move(t));
    e.m = Tensor(e.var->value.rows(), e.var->value.cols());
    e.v = Tensor(e.var->value.rows(), e.var->value.cols());
    auto [it, ok] = entries_.emplace(name, std::move(e));
    (void)ok;
    return it->second.var;
}

Var ParamStore::get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second.var;
}

void ParamStore::zero_grad() {
    for (auto& [name, e] : entries_) {
        e.var->ensure_grad();
        e.var->grad.fill(0.0);
    }
}

void ParamStore::adam_step(double lr) {
    ++step_;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
    for (auto& [name, e] : entries_) {
        e.var->ensure_grad();
        Tensor& g = e.var->grad;
        if (!g.all_finite()) throw std::runtime_error("non-finite gradient in parameter " + name);
        Tensor& w = e.var->value;
        for (std::size_t i = 0; i < w.size(); ++i) {
            e.m[i] = beta1 * e.m[i] + (1.0 - beta1) * g[i];
            e.v[i] = beta2 * e.v[i] + (1.0 - beta2) * g[i] * g[i];
            double mhat = e.m[i] / bc1;
            double vhat = e.v[i] / bc2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
        g.fill(0.0);
    }
}

std::size_t ParamStore::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, e] : entries_) n += e.var->value.size();
    return n;
}

}  // namespace picket
