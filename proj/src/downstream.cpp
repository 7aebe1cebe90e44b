#include "picket/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "picket/autodiff.hpp"
#include "picket/params.hpp"

namespace picket {

using nlohmann::json;

std::string to_string(DownstreamFamily f) {
    switch (f) {
        case DownstreamFamily::LR: return "lr";
        case DownstreamFamily::LinearSVM: return "svm";
        case DownstreamFamily::MLP: return "nn";
    }
    return "lr";
}

DownstreamFamily downstream_family_from_string(const std::string& s) {
    if (s == "lr") return DownstreamFamily::LR;
    if (s == "svm") return DownstreamFamily::LinearSVM;
    if (s == "nn" || s == "mlp") return DownstreamFamily::MLP;
    throw std::invalid_argument("unknown downstream family: " + s);
}

DownstreamSpec DownstreamSpec::poisoning_mlp() {
    DownstreamSpec spec;
    spec.family = DownstreamFamily::MLP;
    spec.hidden = {10};
    return spec;
}

// ---- encoder ----

DownstreamEncoder DownstreamEncoder::fit(const Dataset& ds, std::uint64_t seed, int text_dim) {
    DownstreamEncoder enc;
    enc.schema_ = ds.schema;
    enc.text_dim_ = text_dim;
    enc.offset_.resize(ds.t());
    enc.impute_mean_.assign(ds.t(), 0.0);
    enc.token_.resize(ds.t());

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(text_dim)));

    std::size_t off = 0;
    for (std::size_t a = 0; a < ds.t(); ++a) {
        enc.offset_[a] = off;
        const AttributeSpec& spec = ds.schema[a];
        switch (spec.kind) {
            case AttrKind::Numeric: {
                double sum = 0.0;
                std::size_t cnt = 0;
                for (const auto& row : ds.rows)
                    if (!row[a].missing) {
                        sum += row[a].num;
                        ++cnt;
                    }
                enc.impute_mean_[a] = cnt ? sum / static_cast<double>(cnt) : 0.0;
                off += 1;
                break;
            }
            case AttrKind::Categorical:
                off += spec.domain.size() + 1;  // trailing missing column
                break;
            case AttrKind::Text: {
                enc.token_[a].resize(spec.vocab.size() * static_cast<std::size_t>(text_dim));
                for (double& v : enc.token_[a]) v = gauss(rng);
                off += static_cast<std::size_t>(text_dim);
                break;
            }
        }
    }
    enc.dim_ = off;
    return enc;
}

std::vector<double> DownstreamEncoder::encode(const std::vector<Cell>& row) const {
    if (row.size() != schema_.size()) throw std::invalid_argument("encoder: tuple width mismatch");
    std::vector<double> x(dim_, 0.0);
    for (std::size_t a = 0; a < schema_.size(); ++a) {
        const AttributeSpec& spec = schema_[a];
        const Cell& c = row[a];
        std::size_t off = offset_[a];
        switch (spec.kind) {
            case AttrKind::Numeric:
                x[off] = c.missing ? impute_mean_[a] : c.num;
                break;
            case AttrKind::Categorical: {
                int id = c.missing ? -1 : spec.domain_id(c.text);
                x[off + (id >= 0 ? static_cast<std::size_t>(id) : spec.domain.size())] = 1.0;
                break;
            }
            case AttrKind::Text: {
                if (c.missing) break;
                auto d = static_cast<std::size_t>(text_dim_);
                double total = 0.0;
                for (const std::string& tok : tokenize_text(c.text)) {
                    auto it = spec.vocab_index.find(tok);
                    if (it == spec.vocab_index.end()) continue;
                    auto k = static_cast<std::size_t>(it->second);
                    double p = static_cast<double>(spec.vocab[k].second) /
                               static_cast<double>(std::max<long>(spec.vocab_total, 1));
                    double w = sif_weight(p);
                    total += w;
                    for (std::size_t j = 0; j < d; ++j) x[off + j] += w * token_[a][k * d + j];
                }
                if (total > 0.0)
                    for (std::size_t j = 0; j < d; ++j) x[off + j] /= total;
                break;
            }
        }
    }
    return x;
}

Tensor DownstreamEncoder::encode_all(const Dataset& ds) const {
    Tensor out(ds.n(), dim_);
    for (std::size_t i = 0; i < ds.n(); ++i) {
        std::vector<double> x = encode(ds.rows[i]);
        std::copy(x.begin(), x.end(), out.row(i));
    }
    return out;
}

bool DownstreamEncoder::all_numeric() const {
    for (const auto& s : schema_)
        if (s.kind != AttrKind::Numeric) return false;
    return !schema_.empty();
}

namespace {

json tensor_to_json(const Tensor& t) {
    json j;
    j["rows"] = t.rows();
    j["cols"] = t.cols();
    j["data"] = std::vector<double>(t.data(), t.data() + t.size());
    return j;
}

Tensor tensor_from_json(const json& j) {
    Tensor t(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    auto data = j.at("data").get<std::vector<double>>();
    if (data.size() != t.size()) throw std::invalid_argument("tensor payload size mismatch");
    std::copy(data.begin(), data.end(), t.data());
    return t;
}

}  // namespace

std::string DownstreamEncoder::to_json() const {
    json j;
    j["schema"] = json::parse(schema_to_json(schema_));
    j["offset"] = offset_;
    j["impute_mean"] = impute_mean_;
    j["token"] = token_;
    j["text_dim"] = text_dim_;
    j["dim"] = dim_;
    return j.dump();
}

DownstreamEncoder DownstreamEncoder::from_json(const std::string& text) {
    json j = json::parse(text);
    DownstreamEncoder enc;
    enc.schema_ = schema_from_json(j.at("schema").dump());
    enc.offset_ = j.at("offset").get<std::vector<std::size_t>>();
    enc.impute_mean_ = j.at("impute_mean").get<std::vector<double>>();
    enc.token_ = j.at("token").get<std::vector<std::vector<double>>>();
    enc.text_dim_ = j.at("text_dim").get<int>();
    enc.dim_ = j.at("dim").get<std::size_t>();
    return enc;
}

// ---- logistic regression core ----

namespace {

/// Mean cross-entropy with an L2 penalty ||w||^2 / (2 c n); fills gradients.
double logistic_loss_grad(const Tensor& x, const std::vector<int>& y, int classes, double c,
                          const Tensor& w, const Tensor& b, Tensor& gw, Tensor& gb) {
    std::size_t n = x.rows(), d = x.cols();
    auto kc = static_cast<std::size_t>(classes);
    gw.fill(0.0);
    gb.fill(0.0);
    double loss = 0.0;
    std::vector<double> s(kc);
    for (std::size_t i = 0; i < n; ++i) {
        const double* xi = x.row(i);
        double mx = -1e300;
        for (std::size_t k = 0; k < kc; ++k) {
            double v = b.at(0, k);
            const double* wk = w.row(k);
            for (std::size_t j = 0; j < d; ++j) v += wk[j] * xi[j];
            s[k] = v;
            mx = std::max(mx, v);
        }
        double sum = 0.0;
        for (std::size_t k = 0; k < kc; ++k) {
            s[k] = std::exp(s[k] - mx);
            sum += s[k];
        }
        auto t = static_cast<std::size_t>(y[i]);
        loss -= std::log(std::max(s[t] / sum, 1e-300));
        for (std::size_t k = 0; k < kc; ++k) {
            double g = s[k] / sum - (k == t ? 1.0 : 0.0);
            gb.at(0, k) += g;
            double* gwk = gw.row(k);
            for (std::size_t j = 0; j < d; ++j) gwk[j] += g * xi[j];
        }
    }
    double inv_n = 1.0 / static_cast<double>(n);
    double reg = 1.0 / (c * static_cast<double>(n));
    double penalty = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) penalty += w[i] * w[i];
    loss = loss * inv_n + 0.5 * reg * penalty;
    for (std::size_t i = 0; i < gw.size(); ++i) gw[i] = gw[i] * inv_n + reg * w[i];
    for (std::size_t k = 0; k < kc; ++k) gb.at(0, k) *= inv_n;
    return loss;
}

double grad_norm(const Tensor& gw, const Tensor& gb) {
    double s = 0.0;
    for (std::size_t i = 0; i < gw.size(); ++i) s += gw[i] * gw[i];
    for (std::size_t i = 0; i < gb.size(); ++i) s += gb[i] * gb[i];
    return std::sqrt(s);
}

}  // namespace

LogisticFit fit_logistic(const Tensor& x, const std::vector<int>& y, int classes, double c,
                         int max_epochs, double tolerance) {
    if (x.rows() == 0 || x.rows() != y.size()) throw std::invalid_argument("fit_logistic input");
    if (classes < 2) throw std::invalid_argument("fit_logistic needs at least two classes");

    auto kc = static_cast<std::size_t>(classes);
    LogisticFit fit;
    fit.w = Tensor(kc, x.cols());
    fit.b = Tensor(1, kc);
    Tensor gw(kc, x.cols()), gb(1, kc);
    Tensor prev_gw, prev_gb;
    double alpha = 0.5;

    for (int it = 0; it < max_epochs; ++it) {
        fit.final_loss = logistic_loss_grad(x, y, classes, c, fit.w, fit.b, gw, gb);
        double gn = grad_norm(gw, gb);
        if (gn <= tolerance) break;
        if (it > 0) {
            // Barzilai-Borwein step from the last (dw, dg) pair; dw was
            // -alpha * prev_g, so dw.dg and dg.dg come from the stored grads.
            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < gw.size(); ++i) {
                double dg = gw[i] - prev_gw[i];
                num += -alpha * prev_gw[i] * dg;
                den += dg * dg;
            }
            for (std::size_t i = 0; i < gb.size(); ++i) {
                double dg = gb[i] - prev_gb[i];
                num += -alpha * prev_gb[i] * dg;
                den += dg * dg;
            }
            if (den > 0.0 && num > 0.0) alpha = std::clamp(num / den, 1e-8, 1e4);
        }
        prev_gw = gw;
        prev_gb = gb;
        fit.w.add_scaled(gw, -alpha);
        fit.b.add_scaled(gb, -alpha);
    }
    return fit;
}

// ---- model fitting ----

namespace {

int infer_classes(const Dataset& train) {
    if (!train.labeled()) throw std::invalid_argument("downstream fit needs labels");
    int classes = train.num_classes();
    for (int y : train.labels) classes = std::max(classes, y + 1);
    std::vector<bool> seen(static_cast<std::size_t>(classes), false);
    for (int y : train.labels) seen[static_cast<std::size_t>(y)] = true;
    int distinct = 0;
    for (bool b : seen) distinct += b ? 1 : 0;
    if (distinct < 2) throw std::invalid_argument("downstream fit needs at least two classes");
    return classes;
}

}  // namespace

DownstreamModel DownstreamModel::fit(const DownstreamSpec& spec, const Dataset& train,
                                     std::uint64_t seed) {
    return fit_encoded(spec, DownstreamEncoder::fit(train, seed), train, seed);
}

DownstreamModel DownstreamModel::fit_encoded(const DownstreamSpec& spec,
                                             const DownstreamEncoder& enc, const Dataset& train,
                                             std::uint64_t seed) {
    DownstreamModel m;
    m.spec_ = spec;
    m.encoder_ = enc;
    m.classes_ = infer_classes(train);
    Tensor x = enc.encode_all(train);

    switch (spec.family) {
        case DownstreamFamily::LR: {
            LogisticFit fit = fit_logistic(x, train.labels, m.classes_, spec.regularization,
                                           spec.max_epochs, spec.gradient_tolerance);
            m.weights_ = {fit.w};
            m.biases_ = {fit.b};
            break;
        }
        case DownstreamFamily::LinearSVM: {
            auto kc = static_cast<std::size_t>(m.classes_);
            Tensor w(kc, x.cols()), b(1, kc);
            Tensor gw(kc, x.cols()), gb(1, kc);
            double reg = 1.0 / (spec.regularization * static_cast<double>(x.rows()));
            int iters = std::min(spec.max_epochs, 2000);
            Tensor best_w = w, best_b = b;
            double best_loss = 1e300;
            for (int it = 0; it < iters; ++it) {
                gw.fill(0.0);
                gb.fill(0.0);
                double loss = 0.0;
                for (std::size_t i = 0; i < x.rows(); ++i) {
                    const double* xi = x.row(i);
                    for (std::size_t k = 0; k < kc; ++k) {
                        double t = static_cast<int>(k) == train.labels[i] ? 1.0 : -1.0;
                        double s = b.at(0, k);
                        const double* wk = w.row(k);
                        for (std::size_t j = 0; j < x.cols(); ++j) s += wk[j] * xi[j];
                        double margin = t * s;
                        if (margin < 1.0) {
                            loss += 1.0 - margin;
                            gb.at(0, k) -= t;
                            double* gwk = gw.row(k);
                            for (std::size_t j = 0; j < x.cols(); ++j) gwk[j] -= t * xi[j];
                        }
                    }
                }
                double inv_n = 1.0 / static_cast<double>(x.rows());
                double penalty = 0.0;
                for (std::size_t i = 0; i < w.size(); ++i) penalty += w[i] * w[i];
                loss = loss * inv_n + 0.5 * reg * penalty;
                if (loss < best_loss) {
                    best_loss = loss;
                    best_w = w;
                    best_b = b;
                }
                double lr = 0.1 / std::sqrt(static_cast<double>(it + 1));
                for (std::size_t i = 0; i < w.size(); ++i)
                    w[i] -= lr * (gw[i] * inv_n + reg * w[i]);
                for (std::size_t i = 0; i < b.size(); ++i) b[i] -= lr * gb[i] * inv_n;
            }
            m.weights_ = {best_w};
            m.biases_ = {best_b};
            break;
        }
        case DownstreamFamily::MLP: {
            ParamStore params;
            std::mt19937_64 rng(seed);
            std::vector<std::size_t> sizes;
            sizes.push_back(x.cols());
            for (int h : spec.hidden) sizes.push_back(static_cast<std::size_t>(h));
            sizes.push_back(static_cast<std::size_t>(m.classes_));

            std::vector<Var> ws, bs;
            for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
                double init_std = std::sqrt(2.0 / static_cast<double>(sizes[l]));
                ws.push_back(params.create("W" + std::to_string(l), sizes[l], sizes[l + 1],
                                           init_std, rng));
                bs.push_back(params.create_zeros("b" + std::to_string(l), 1, sizes[l + 1]));
            }
            Var input = constant(x);
            for (int epoch = 0; epoch < spec.mlp_epochs; ++epoch) {
                params.zero_grad();
                Var h = input;
                for (std::size_t l = 0; l < ws.size(); ++l) {
                    h = add_row_broadcast(matmul(h, ws[l]), bs[l]);
                    if (l + 1 < ws.size()) h = relu(h);
                }
                Var loss = mean_all(cross_entropy_rows(h, train.labels));
                backward(loss);
                params.adam_step(spec.mlp_learning_rate);
            }
            for (std::size_t l = 0; l < ws.size(); ++l) {
                // stored transposed relative to the linear families: (in, out)
                m.weights_.push_back(ws[l]->value);
                m.biases_.push_back(bs[l]->value);
            }
            break;
        }
    }
    return m;
}

// ---- inference ----

std::vector<double> DownstreamModel::scores(const std::vector<double>& x) const {
    if (classes_ == 0) throw std::logic_error("model not fitted");
    auto kc = static_cast<std::size_t>(classes_);
    if (spec_.family == DownstreamFamily::MLP) {
        std::vector<double> h = x;
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            const Tensor& w = weights_[l];
            if (h.size() != w.rows()) throw std::invalid_argument("feature dimension mismatch");
            std::vector<double> next(w.cols());
            for (std::size_t j = 0; j < w.cols(); ++j) {
                double v = biases_[l].at(0, j);
                for (std::size_t i = 0; i < w.rows(); ++i) v += h[i] * w.at(i, j);
                next[j] = l + 1 < weights_.size() ? std::max(v, 0.0) : v;
            }
            h = std::move(next);
        }
        return h;
    }
    const Tensor& w = weights_[0];
    if (x.size() != w.cols()) throw std::invalid_argument("feature dimension mismatch");
    std::vector<double> s(kc);
    for (std::size_t k = 0; k < kc; ++k) {
        double v = biases_[0].at(0, k);
        const double* wk = w.row(k);
        for (std::size_t j = 0; j < x.size(); ++j) v += wk[j] * x[j];
        s[k] = v;
    }
    return s;
}

int DownstreamModel::predict_features(const std::vector<double>& x) const {
    std::vector<double> s = scores(x);
    std::size_t best = 0;
    for (std::size_t k = 1; k < s.size(); ++k)
        if (s[k] > s[best]) best = k;
    return static_cast<int>(best);
}

int DownstreamModel::predict(const std::vector<Cell>& row) const {
    return predict_features(encoder_.encode(row));
}

std::vector<double> DownstreamModel::input_gradient(const std::vector<double>& x, int y) const {
    auto kc = static_cast<std::size_t>(classes_);
    std::vector<double> g(x.size(), 0.0);
    switch (spec_.family) {
        case DownstreamFamily::LR: {
            std::vector<double> s = scores(x);
            double mx = *std::max_element(s.begin(), s.end());
            double sum = 0.0;
            for (double& v : s) {
                v = std::exp(v - mx);
                sum += v;
            }
            for (std::size_t k = 0; k < kc; ++k) {
                double p = s[k] / sum - (static_cast<int>(k) == y ? 1.0 : 0.0);
                const double* wk = weights_[0].row(k);
                for (std::size_t j = 0; j < x.size(); ++j) g[j] += p * wk[j];
            }
            break;
        }
        case DownstreamFamily::LinearSVM: {
            std::vector<double> s = scores(x);
            for (std::size_t k = 0; k < kc; ++k) {
                double t = static_cast<int>(k) == y ? 1.0 : -1.0;
                if (t * s[k] >= 1.0) continue;
                const double* wk = weights_[0].row(k);
                for (std::size_t j = 0; j < x.size(); ++j) g[j] -= t * wk[j];
            }
            break;
        }
        case DownstreamFamily::MLP: {
            Tensor xt(1, x.size());
            std::copy(x.begin(), x.end(), xt.data());
            Var input = leaf(std::move(xt));
            Var h = input;
            for (std::size_t l = 0; l < weights_.size(); ++l) {
                h = add_row_broadcast(matmul(h, constant(weights_[l])), constant(biases_[l]));
                if (l + 1 < weights_.size()) h = relu(h);
            }
            backward(sum_all(cross_entropy_rows(h, {y})));
            for (std::size_t j = 0; j < x.size(); ++j) g[j] = input->grad.at(0, j);
            break;
        }
    }
    return g;
}

double DownstreamModel::accuracy(const Dataset& test) const {
    if (test.n() == 0) throw std::invalid_argument("accuracy on empty test set");
    if (!test.labeled()) throw std::invalid_argument("accuracy needs labels");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.n(); ++i)
        if (predict(test.rows[i]) == test.labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(test.n());
}

// ---- serialization ----

std::string DownstreamModel::to_json() const {
    json j;
    j["family"] = to_string(spec_.family);
    j["regularization"] = spec_.regularization;
    j["hidden"] = spec_.hidden;
    j["classes"] = classes_;
    json ws = json::array(), bs = json::array();
    for (const auto& w : weights_) ws.push_back(tensor_to_json(w));
    for (const auto& b : biases_) bs.push_back(tensor_to_json(b));
    j["weights"] = ws;
    j["biases"] = bs;
    j["encoder"] = json::parse(encoder_.to_json());
    return j.dump();
}

DownstreamModel DownstreamModel::from_json(const std::string& text) {
    json j = json::parse(text);
    DownstreamModel m;
    m.spec_.family = downstream_family_from_string(j.at("family").get<std::string>());
    m.spec_.regularization = j.at("regularization").get<double>();
    m.spec_.hidden = j.at("hidden").get<std::vector<int>>();
    m.classes_ = j.at("classes").get<int>();
    for (const auto& e : j.at("weights")) m.weights_.push_back(tensor_from_json(e));
    for (const auto& e : j.at("biases")) m.biases_.push_back(tensor_from_json(e));
    m.encoder_ = DownstreamEncoder::from_json(j.at("encoder").dump());
    return m;
}

}  // namespace picket
