#pragma once

#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "picket/tensor.hpp"

namespace picket {

struct Node;
using Var = std::shared_ptr<Node>;

/// One tape node of the define-by-run graph. The tape is rebuilt on every
/// forward pass; backward() walks it once in reverse topological order.
struct Node {
    Tensor value;
    Tensor grad;
    std::vector<Var> parents;
    std::function<void(Node&)> pull;  // distributes this->grad into parents
    bool needs_grad = false;

    explicit Node(Tensor v) : value(std::move(v)) {}

    void ensure_grad() {
        if (!grad.same_shape(value)) grad = Tensor(value.rows(), value.cols());
    }
};

Var constant(Tensor v);
Var leaf(Tensor v);  // trainable / differentiable input

/// Reverse-mode sweep from a scalar root. Seeds the root gradient with 1.
void backward(const Var& root);

// ---- elementwise / structural ops ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var add_row_broadcast(const Var& x, const Var& bias);  // bias is (1,d)
Var matmul(const Var& a, const Var& b);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var softmax_rows(const Var& a);
Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps = 1e-6);
Var dropout(const Var& x, double p, std::mt19937_64& rng, bool training);
Var concat_cols(const std::vector<Var>& xs);
Var concat_rows(const std::vector<Var>& xs);
Var transpose(const Var& x);
Var slice_cols(const Var& x, std::size_t begin, std::size_t count);
Var gather_rows(const Var& x, std::vector<std::size_t> idx);
Var tile_rows(const Var& x, std::size_t reps);
Var sum_all(const Var& x);
Var mean_all(const Var& x);
Var reshape(const Var& x, std::size_t rows, std::size_t cols);

/// Rowwise cosine similarity between matching rows of a and b -> (n,1).
Var cosine_rows(const Var& a, const Var& b);

/// Per-row cross-entropy of softmax(logits) against target column 0 -> (n,1).
Var cross_entropy_rows_target0(const Var& logits);

/// Per-row cross-entropy against explicit target columns -> (n,1).
Var cross_entropy_rows(const Var& logits, std::vector<int> targets);

/// Block-diagonal scaled dot-product attention: Q,K,V are (batch*t, d_head);
/// each consecutive block of t rows is one independent attention instance.
Var attention_blocks(const Var& q, const Var& k, const Var& v, std::size_t t);

/// One source row contribution to an assembled input row.
struct RowRef {
    std::size_t parent;  // index into the parents list passed to assemble_rows
    std::size_t row;     // row inside that parent tensor
    double weight;
};

/// Builds a matrix whose row i equals constants.row(i) plus the weighted
/// parent rows listed in refs[i]. Gradients scatter-add back into parents.
Var assemble_rows(Tensor constants, std::vector<std::vector<RowRef>> refs,
                  std::vector<Var> parents);

}  // namespace picket
