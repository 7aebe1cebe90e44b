#include "picket/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace picket {

Var constant(Tensor v) { return std::make_shared<Node>(std::move(v)); }

Var leaf(Tensor v) {
    auto n = std::make_shared<Node>(std::move(v));
    n->needs_grad = true;
    return n;
}

namespace {

Var make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> pull) {
    auto n = std::make_shared<Node>(std::move(value));
    bool any = false;
    for (const auto& p : parents) any = any || p->needs_grad;
    n->needs_grad = any;
    if (any) {
        n->parents = std::move(parents);
        n->pull = std::move(pull);
    }
    return n;
}

void topo(Node* n, std::unordered_set<Node*>& seen, std::vector<Node*>& order) {
    // iterative DFS; graphs get deep with unrolled training steps
    struct Frame {
        Node* node;
        std::size_t next = 0;
    };
    std::vector<Frame> stack{{n}};
    seen.insert(n);
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.node->parents.size()) {
            Node* p = f.node->parents[f.next++].get();
            if (p->needs_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }
}

}  // namespace

void backward(const Var& root) {
    if (root->value.size() != 1) throw std::invalid_argument("backward: root must be scalar");
    if (!root->needs_grad) return;
    std::unordered_set<Node*> seen;
    std::vector<Node*> order;
    topo(root.get(), seen, order);
    for (Node* n : order) n->ensure_grad();
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->pull) {
            for (auto& p : n->parents) p->ensure_grad();
            n->pull(*n);
        }
    }
}

Var add(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw std::invalid_argument("add shape mismatch");
    Tensor out = a->value;
    out.add_scaled(b->value, 1.0);
    return make(std::move(out), {a, b}, [](Node& n) {
        if (n.parents[0]->needs_grad) n.parents[0]->grad.add_scaled(n.grad, 1.0);
        if (n.parents[1]->needs_grad) n.parents[1]->grad.add_scaled(n.grad, 1.0);
    });
}

Var sub(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw std::invalid_argument("sub shape mismatch");
    Tensor out = a->value;
    out.add_scaled(b->value, -1.0);
    return make(std::move(out), {a, b}, [](Node& n) {
        if (n.parents[0]->needs_grad) n.parents[0]->grad.add_scaled(n.grad, 1.0);
        if (n.parents[1]->needs_grad) n.parents[1]->grad.add_scaled(n.grad, -1.0);
    });
}

Var mul(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw std::invalid_argument("mul shape mismatch");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
    return make(std::move(out), {a, b}, [](Node& n) {
        Node& a = *n.parents[0];
        Node& b = *n.parents[1];
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            if (a.needs_grad) a.grad[i] += n.grad[i] * b.value[i];
            if (b.needs_grad) b.grad[i] += n.grad[i] * a.value[i];
        }
    });
}

Var scale(const Var& a, double c) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
    return make(std::move(out), {a}, [c](Node& n) {
        n.parents[0]->grad.add_scaled(n.grad, c);
    });
}

Var add_row_broadcast(const Var& x, const Var& bias) {
    if (bias->value.rows() != 1 || bias->value.cols() != x->value.cols())
        throw std::invalid_argument("add_row_broadcast shape mismatch");
    Tensor out = x->value;
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out.at(i, j) += bias->value[j];
    return make(std::move(out), {x, bias}, [](Node& n) {
        Node& x = *n.parents[0];
        Node& b = *n.parents[1];
        if (x.needs_grad) x.grad.add_scaled(n.grad, 1.0);
        if (b.needs_grad)
            for (std::size_t i = 0; i < n.grad.rows(); ++i)
                for (std::size_t j = 0; j < n.grad.cols(); ++j) b.grad[j] += n.grad.at(i, j);
    });
}

Var matmul(const Var& a, const Var& b) {
    Tensor out = matmul_values(a->value, b->value);
    return make(std::move(out), {a, b}, [](Node& n) {
        Node& a = *n.parents[0];
        Node& b = *n.parents[1];
        // dA = dOut * B^T ; dB = A^T * dOut
        if (a.needs_grad) {
            for (std::size_t i = 0; i < a.value.rows(); ++i)
                for (std::size_t k = 0; k < a.value.cols(); ++k) {
                    double s = 0.0;
                    const double* gr = n.grad.row(i);
                    const double* br = b.value.row(k);
                    for (std::size_t j = 0; j < b.value.cols(); ++j) s += gr[j] * br[j];
                    a.grad.at(i, k) += s;
                }
        }
        if (b.needs_grad) {
            for (std::size_t i = 0; i < a.value.rows(); ++i) {
                const double* ar = a.value.row(i);
                const double* gr = n.grad.row(i);
                for (std::size_t k = 0; k < a.value.cols(); ++k) {
                    double av = ar[k];
                    if (av == 0.0) continue;
                    double* bg = b.grad.row(k);
                    for (std::size_t j = 0; j < b.value.cols(); ++j) bg[j] += av * gr[j];
                }
            }
        }
    });
}

Var relu(const Var& a) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    return make(std::move(out), {a}, [](Node& n) {
        Node& a = *n.parents[0];
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            if (a.value[i] > 0.0) a.grad[i] += n.grad[i];
    });
}

Var sigmoid(const Var& a) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
    return make(std::move(out), {a}, [](Node& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            n.parents[0]->grad[i] += n.grad[i] * n.value[i] * (1.0 - n.value[i]);
    });
}

Var softmax_rows(const Var& a) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        double* r = out.row(i);
        double mx = r[0];
        for (std::size_t j = 1; j < out.cols(); ++j) mx = std::max(mx, r[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < out.cols(); ++j) {
            r[j] = std::exp(r[j] - mx);
            sum += r[j];
        }
        for (std::size_t j = 0; j < out.cols(); ++j) r[j] /= sum;
    }
    return make(std::move(out), {a}, [](Node& n) {
        for (std::size_t i = 0; i < n.value.rows(); ++i) {
            const double* y = n.value.row(i);
            const double* g = n.grad.row(i);
            double dot = 0.0;
            for (std::size_t j = 0; j < n.value.cols(); ++j) dot += y[j] * g[j];
            double* pg = n.parents[0]->grad.row(i);
            for (std::size_t j = 0; j < n.value.cols(); ++j) pg[j] += y[j] * (g[j] - dot);
        }
    });
}

Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps) {
    const Tensor& xv = x->value;
    std::size_t d = xv.cols();
    if (gain->value.cols() != d || bias->value.cols() != d)
        throw std::invalid_argument("layer_norm shape mismatch");
    Tensor out(xv.rows(), d);
    auto stats = std::make_shared<Tensor>(xv.rows(), 2);  // mean, inv-std per row
    for (std::size_t i = 0; i < xv.rows(); ++i) {
        const double* r = xv.row(i);
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += r[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (r[j] - mean) * (r[j] - mean);
        var /= static_cast<double>(d);
        double inv = 1.0 / std::sqrt(var + eps);
        stats->at(i, 0) = mean;
        stats->at(i, 1) = inv;
        for (std::size_t j = 0; j < d; ++j)
            out.at(i, j) = (r[j] - mean) * inv * gain->value[j] + bias->value[j];
    }
    return make(std::move(out), {x, gain, bias}, [stats, eps](Node& n) {
        Node& x = *n.parents[0];
        Node& g = *n.parents[1];
        Node& b = *n.parents[2];
        std::size_t d = x.value.cols();
        for (std::size_t i = 0; i < x.value.rows(); ++i) {
            double mean = stats->at(i, 0), inv = stats->at(i, 1);
            const double* xr = x.value.row(i);
            const double* gr = n.grad.row(i);
            // dxhat_j = grad_j * gain_j ; standard layer-norm backward
            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                double xhat = (xr[j] - mean) * inv;
                double dxhat = gr[j] * g.value[j];
                sum_dxhat += dxhat;
                sum_dxhat_xhat += dxhat * xhat;
                if (g.needs_grad) g.grad[j] += gr[j] * xhat;
                if (b.needs_grad) b.grad[j] += gr[j];
            }
            if (x.needs_grad) {
                double* xg = x.grad.row(i);
                double nd = static_cast<double>(d);
                for (std::size_t j = 0; j < d; ++j) {
                    double xhat = (xr[j] - mean) * inv;
                    double dxhat = gr[j] * g.value[j];
                    xg[j] += inv * (dxhat - sum_dxhat / nd - xhat * sum_dxhat_xhat / nd);
                }
            }
        }
    });
}

Var dropout(const Var& x, double p, std::mt19937_64& rng, bool training) {
    if (!training || p <= 0.0) return x;
    if (p >= 1.0) throw std::invalid_argument("dropout p must be < 1");
    auto mask = std::make_shared<std::vector<double>>(x->value.size());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double keep_scale = 1.0 / (1.0 - p);
    Tensor out = x->value;
    for (std::size_t i = 0; i < out.size(); ++i) {
        double m = u(rng) < p ? 0.0 : keep_scale;
        (*mask)[i] = m;
        out[i] *= m;
    }
    return make(std::move(out), {x}, [mask](Node& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            n.parents[0]->grad[i] += n.grad[i] * (*mask)[i];
    });
}

Var concat_cols(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_cols: empty");
    std::size_t rows = xs[0]->value.rows(), cols = 0;
    for (const auto& x : xs) {
        if (x->value.rows() != rows) throw std::invalid_argument("concat_cols row mismatch");
        cols += x->value.cols();
    }
    Tensor out(rows, cols);
    std::size_t off = 0;
    for (const auto& x : xs) {
        for (std::size_t i = 0; i < rows; ++i)
            std::copy(x->value.row(i), x->value.row(i) + x->value.cols(), out.row(i) + off);
        off += x->value.cols();
    }
    return make(std::move(out), xs, [](Node& n) {
        std::size_t off = 0;
        for (auto& p : n.parents) {
            if (p->needs_grad)
                for (std::size_t i = 0; i < p->value.rows(); ++i)
                    for (std::size_t j = 0; j < p->value.cols(); ++j)
                        p->grad.at(i, j) += n.grad.at(i, off + j);
            off += p->value.cols();
        }
    });
}

Var concat_rows(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_rows: empty");
    std::size_t cols = xs[0]->value.cols(), rows = 0;
    for (const auto& x : xs) {
        if (x->value.cols() != cols) throw std::invalid_argument("concat_rows col mismatch");
        rows += x->value.rows();
    }
    Tensor out(rows, cols);
    std::size_t off = 0;
    for (const auto& x : xs) {
        std::copy(x->value.data(), x->value.data() + x->value.size(), out.row(off));
        off += x->value.rows();
    }
    return make(std::move(out), xs, [](Node& n) {
        std::size_t off = 0;
        for (auto& p : n.parents) {
            if (p->needs_grad)
                for (std::size_t i = 0; i < p->value.size(); ++i)
                    p->grad[i] += n.grad.row(off)[i];
            off += p->value.rows();
        }
    });
}

Var transpose(const Var& x) {
    Tensor out(x->value.cols(), x->value.rows());
    for (std::size_t i = 0; i < x->value.rows(); ++i)
        for (std::size_t j = 0; j < x->value.cols(); ++j) out.at(j, i) = x->value.at(i, j);
    return make(std::move(out), {x}, [](Node& n) {
        Node& p = *n.parents[0];
        for (std::size_t i = 0; i < p.value.rows(); ++i)
            for (std::size_t j = 0; j < p.value.cols(); ++j) p.grad.at(i, j) += n.grad.at(j, i);
    });
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t count) {
    if (begin + count > x->value.cols()) throw std::invalid_argument("slice_cols out of range");
    Tensor out(x->value.rows(), count);
    for (std::size_t i = 0; i < out.rows(); ++i)
        std::copy(x->value.row(i) + begin, x->value.row(i) + begin + count, out.row(i));
    return make(std::move(out), {x}, [begin, count](Node& n) {
        for (std::size_t i = 0; i < n.grad.rows(); ++i)
            for (std::size_t j = 0; j < count; ++j)
                n.parents[0]->grad.at(i, begin + j) += n.grad.at(i, j);
    });
}

Var gather_rows(const Var& x, std::vector<std::size_t> idx) {
    Tensor out(idx.size(), x->value.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= x->value.rows()) throw std::invalid_argument("gather_rows out of range");
        std::copy(x->value.row(idx[i]), x->value.row(idx[i]) + x->value.cols(), out.row(i));
    }
    auto ids = std::make_shared<std::vector<std::size_t>>(std::move(idx));
    return make(std::move(out), {x}, [ids](Node& n) {
        for (std::size_t i = 0; i < ids->size(); ++i) {
            double* pg = n.parents[0]->grad.row((*ids)[i]);
            const double* g = n.grad.row(i);
            for (std::size_t j = 0; j < n.grad.cols(); ++j) pg[j] += g[j];
        }
    });
}

Var tile_rows(const Var& x, std::size_t reps) {
    Tensor out(x->value.rows() * reps, x->value.cols());
    for (std::size_t r = 0; r < reps; ++r)
        for (std::size_t i = 0; i < x->value.rows(); ++i)
            std::copy(x->value.row(i), x->value.row(i) + x->value.cols(),
                      out.row(r * x->value.rows() + i));
    return make(std::move(out), {x}, [](Node& n) {
        std::size_t base = n.parents[0]->value.rows();
        for (std::size_t i = 0; i < n.grad.rows(); ++i) {
            double* pg = n.parents[0]->grad.row(i % base);
            const double* g = n.grad.row(i);
            for (std::size_t j = 0; j < n.grad.cols(); ++j) pg[j] += g[j];
        }
    });
}

Var sum_all(const Var& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x->value.size(); ++i) s += x->value[i];
    return make(Tensor::scalar(s), {x}, [](Node& n) {
        double g = n.grad[0];
        for (std::size_t i = 0; i < n.parents[0]->grad.size(); ++i) n.parents[0]->grad[i] += g;
    });
}

Var mean_all(const Var& x) {
    return scale(sum_all(x), 1.0 / static_cast<double>(x->value.size()));
}

Var reshape(const Var& x, std::size_t rows, std::size_t cols) {
    if (rows * cols != x->value.size()) throw std::invalid_argument("reshape size mismatch");
    Tensor out(rows, cols);
    std::copy(x->value.data(), x->value.data() + x->value.size(), out.data());
    return make(std::move(out), {x}, [](Node& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) n.parents[0]->grad[i] += n.grad[i];
    });
}

Var cosine_rows(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw std::invalid_argument("cosine_rows shape mismatch");
    std::size_t n = a->value.rows(), d = a->value.cols();
    Tensor out(n, 1);
    const double eps = 1e-12;
    for (std::size_t i = 0; i < n; ++i) {
        const double* ar = a->value.row(i);
        const double* br = b->value.row(i);
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            dot += ar[j] * br[j];
            na += ar[j] * ar[j];
            nb += br[j] * br[j];
        }
        out.at(i, 0) = dot / (std::sqrt(na * nb) + eps);
    }
    return make(std::move(out), {a, b}, [eps](Node& n) {
        Node& a = *n.parents[0];
        Node& b = *n.parents[1];
        std::size_t d = a.value.cols();
        for (std::size_t i = 0; i < a.value.rows(); ++i) {
            const double* ar = a.value.row(i);
            const double* br = b.value.row(i);
            double dot = 0.0, na = 0.0, nb = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                dot += ar[j] * br[j];
                na += ar[j] * ar[j];
                nb += br[j] * br[j];
            }
            double norm = std::sqrt(na * nb) + eps;
            double g = n.grad.at(i, 0);
            for (std::size_t j = 0; j < d; ++j) {
                if (a.needs_grad)
                    a.grad.row(i)[j] += g * (br[j] / norm - dot * ar[j] / (norm * (na + eps)));
                if (b.needs_grad)
                    b.grad.row(i)[j] += g * (ar[j] / norm - dot * br[j] / (norm * (nb + eps)));
            }
        }
    });
}

Var cross_entropy_rows_target0(const Var& logits) {
    std::size_t n = logits->value.rows(), k = logits->value.cols();
    Tensor out(n, 1);
    auto probs = std::make_shared<Tensor>(n, k);
    for (std::size_t i = 0; i < n; ++i) {
        const double* r = logits->value.row(i);
        double mx = r[0];
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, r[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            probs->at(i, j) = std::exp(r[j] - mx);
            sum += probs->at(i, j);
        }
        for (std::size_t j = 0; j < k; ++j) probs->at(i, j) /= sum;
        out.at(i, 0) = -std::log(std::max(probs->at(i, 0), 1e-300));
    }
    return make(std::move(out), {logits}, [probs](Node& n) {
        std::size_t k = probs->cols();
        for (std::size_t i = 0; i < probs->rows(); ++i) {
            double g = n.grad.at(i, 0);
            double* pg = n.parents[0]->grad.row(i);
            for (std::size_t j = 0; j < k; ++j)
                pg[j] += g * (probs->at(i, j) - (j == 0 ? 1.0 : 0.0));
        }
    });
}

Var cross_entropy_rows(const Var& logits, std::vector<int> targets) {
    std::size_t n = logits->value.rows(), k = logits->value.cols();
    if (targets.size() != n) throw std::invalid_argument("cross_entropy_rows target size");
    Tensor out(n, 1);
    auto probs = std::make_shared<Tensor>(n, k);
    auto tgt = std::make_shared<std::vector<int>>(std::move(targets));
    for (std::size_t i = 0; i < n; ++i) {
        const double* r = logits->value.row(i);
        double mx = r[0];
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, r[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            probs->at(i, j) = std::exp(r[j] - mx);
            sum += probs->at(i, j);
        }
        for (std::size_t j = 0; j < k; ++j) probs->at(i, j) /= sum;
        auto t = static_cast<std::size_t>((*tgt)[i]);
        out.at(i, 0) = -std::log(std::max(probs->at(i, t), 1e-300));
    }
    return make(std::move(out), {logits}, [probs, tgt](Node& n) {
        std::size_t k = probs->cols();
        for (std::size_t i = 0; i < probs->rows(); ++i) {
            double g = n.grad.at(i, 0);
            double* pg = n.parents[0]->grad.row(i);
            auto t = static_cast<std::size_t>((*tgt)[i]);
            for (std::size_t j = 0; j < k; ++j)
                pg[j] += g * (probs->at(i, j) - (j == t ? 1.0 : 0.0));
        }
    });
}

Var attention_blocks(const Var& q, const Var& k, const Var& v, std::size_t t) {
    std::size_t rows = q->value.rows(), dh = q->value.cols();
    if (rows % t != 0 || !q->value.same_shape(k->value) || !q->value.same_shape(v->value))
        throw std::invalid_argument("attention_blocks shape mismatch");
    std::size_t nblocks = rows / t;
    double alpha = 1.0 / std::sqrt(static_cast<double>(dh));
    auto weights = std::make_shared<Tensor>(rows, t);  // softmax weights per query row
    Tensor out(rows, dh);
    for (std::size_t b = 0; b < nblocks; ++b) {
        std::size_t base = b * t;
        for (std::size_t i = 0; i < t; ++i) {
            const double* qr = q->value.row(base + i);
            double* wr = weights->row(base + i);
            double mx = -1e300;
            for (std::size_t j = 0; j < t; ++j) {
                const double* kr = k->value.row(base + j);
                double s = 0.0;
                for (std::size_t c = 0; c < dh; ++c) s += qr[c] * kr[c];
                wr[j] = s * alpha;
                mx = std::max(mx, wr[j]);
            }
            double sum = 0.0;
            for (std::size_t j = 0; j < t; ++j) {
                wr[j] = std::exp(wr[j] - mx);
                sum += wr[j];
            }
            double* orow = out.row(base + i);
            for (std::size_t j = 0; j < t; ++j) {
                wr[j] /= sum;
                const double* vr = v->value.row(base + j);
                for (std::size_t c = 0; c < dh; ++c) orow[c] += wr[j] * vr[c];
            }
        }
    }
    return make(std::move(out), {q, k, v}, [weights, t, alpha](Node& n) {
        Node& q = *n.parents[0];
        Node& k = *n.parents[1];
        Node& v = *n.parents[2];
        std::size_t dh = q.value.cols();
        std::size_t nblocks = q.value.rows() / t;
        std::vector<double> dw(t);
        for (std::size_t b = 0; b < nblocks; ++b) {
            std::size_t base = b * t;
            for (std::size_t i = 0; i < t; ++i) {
                const double* g = n.grad.row(base + i);
                const double* wr = weights->row(base + i);
                // dV and dW
                double dot = 0.0;
                for (std::size_t j = 0; j < t; ++j) {
                    const double* vr = v.value.row(base + j);
                    double s = 0.0;
                    for (std::size_t c = 0; c < dh; ++c) s += g[c] * vr[c];
                    dw[j] = s;
                    dot += s * wr[j];
                    if (v.needs_grad) {
                        double* vg = v.grad.row(base + j);
                        for (std::size_t c = 0; c < dh; ++c) vg[c] += wr[j] * g[c];
                    }
                }
                // softmax backward then scores -> Q,K
                const double* qr = q.value.row(base + i);
                double* qg = q.needs_grad ? q.grad.row(base + i) : nullptr;
                for (std::size_t j = 0; j < t; ++j) {
                    double ds = wr[j] * (dw[j] - dot) * alpha;
                    if (ds == 0.0) continue;
                    const double* kr = k.value.row(base + j);
                    if (qg)
                        for (std::size_t c = 0; c < dh; ++c) qg[c] += ds * kr[c];
                    if (k.needs_grad) {
                        double* kg = k.grad.row(base + j);
                        for (std::size_t c = 0; c < dh; ++c) kg[c] += ds * qr[c];
                    }
                }
            }
        }
    });
}

Var assemble_rows(Tensor constants, std::vector<std::vector<RowRef>> refs,
                  std::vector<Var> parents) {
    if (refs.size() != constants.rows()) throw std::invalid_argument("assemble_rows size mismatch");
    Tensor out = std::move(constants);
    for (std::size_t i = 0; i < refs.size(); ++i) {
        double* orow = out.row(i);
        for (const RowRef& r : refs[i]) {
            const Tensor& src = parents.at(r.parent)->value;
            const double* sr = src.row(r.row);
            for (std::size_t j = 0; j < out.cols(); ++j) orow[j] += r.weight * sr[j];
        }
    }
    auto rf = std::make_shared<std::vector<std::vector<RowRef>>>(std::move(refs));
    return make(std::move(out), std::move(parents), [rf](Node& n) {
        for (std::size_t i = 0; i < rf->size(); ++i) {
            const double* g = n.grad.row(i);
            for (const RowRef& r : (*rf)[i]) {
                Node& p = *n.parents[r.parent];
                if (!p.needs_grad) continue;
                double* pg = p.grad.row(r.row);
                for (std::size_t j = 0; j < n.grad.cols(); ++j) pg[j] += r.weight * g[j];
            }
        }
    });
}

}  // namespace picket
