#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace picket {

/// Dense row-major matrix of doubles. Vectors are (n,1) or (1,n); scalars (1,1).
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Tensor scalar(double v) {
        Tensor t(1, 1);
        t.data_[0] = v;
        return t;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& at(std::size_t i, std::size_t j) {
        assert(i < rows_ && j < cols_);
        return data_[i * cols_ + j];
    }
    double at(std::size_t i, std::size_t j) const {
        assert(i < rows_ && j < cols_);
        return data_[i * cols_ + j];
    }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* row(std::size_t i) { return data_.data() + i * cols_; }
    const double* row(std::size_t i) const { return data_.data() + i * cols_; }

    bool same_shape(const Tensor& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_;
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    void add_scaled(const Tensor& o, double c) {
        assert(same_shape(o));
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += c * o.data_[i];
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double item() const {
        if (size() != 1) throw std::logic_error("Tensor::item on non-scalar");
        return data_[0];
    }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

inline Tensor matmul_values(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul shape mismatch");
    Tensor out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* ar = a.row(i);
        double* orow = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            double av = ar[k];
            if (av == 0.0) continue;
            const double* br = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += av * br[j];
        }
    }
    return out;
}

}  // namespace picket
