#include "picket/attack.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "picket/autodiff.hpp"

namespace picket {

std::string to_string(AttackKind k) {
    switch (k) {
        case AttackKind::FGSM: return "fgsm";
        case AttackKind::PGD: return "pgd";
        case AttackKind::TruncatedPoison: return "poison";
    }
    return "pgd";
}

AttackKind attack_kind_from_string(const std::string& s) {
    if (s == "fgsm") return AttackKind::FGSM;
    if (s == "pgd") return AttackKind::PGD;
    if (s == "poison") return AttackKind::TruncatedPoison;
    throw std::invalid_argument("unknown attack kind: " + s);
}

namespace {

double sign0(double v) { return v > 0.0 ? 1.0 : v < 0.0 ? -1.0 : 0.0; }

}  // namespace

std::vector<double> fgsm(const DownstreamModel& model, const std::vector<double>& x, int y,
                         double epsilon) {
    std::vector<double> g = model.input_gradient(x, y);
    std::vector<double> out = x;
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += epsilon * sign0(g[j]);
    return out;
}

std::vector<double> pgd(const DownstreamModel& model, const std::vector<double>& x, int y,
                        const AttackSpec& spec) {
    std::vector<double> cur = x;
    for (int it = 0; it < spec.iterations; ++it) {
        std::vector<double> g = model.input_gradient(cur, y);
        for (std::size_t j = 0; j < cur.size(); ++j) {
            double v = cur[j] + spec.step * sign0(g[j]);
            cur[j] = std::clamp(v, x[j] - spec.epsilon, x[j] + spec.epsilon);
        }
    }
    return cur;
}

std::vector<Cell> attack_row(const DownstreamModel& model, const std::vector<Cell>& row, int y,
                             const AttackSpec& spec) {
    if (!model.encoder().all_numeric())
        throw std::invalid_argument("gradient attacks need an all-numeric schema");
    std::vector<double> x = model.encoder().encode(row);
    std::vector<double> adv = spec.kind == AttackKind::FGSM ? fgsm(model, x, y, spec.epsilon)
                                                            : pgd(model, x, y, spec);
    std::vector<Cell> out(row.size());
    for (std::size_t a = 0; a < row.size(); ++a) out[a] = Cell::numeric(adv[a]);
    return out;
}

Dataset truncated_poison(const Dataset& train, const Dataset& validation,
                         const PoisonSpec& spec) {
    for (const auto& s : train.schema)
        if (s.kind != AttrKind::Numeric)
            throw std::invalid_argument("truncated_poison needs an all-numeric schema");
    if (!train.labeled() || !validation.labeled())
        throw std::invalid_argument("truncated_poison needs labels");
    if (2 * spec.budget >= train.n())
        throw std::invalid_argument("poison budget must stay below half the training set");

    Dataset out;
    out.schema = train.schema;
    out.label_names = train.label_names;
    out.label_column = train.label_column;
    if (spec.budget == 0) return out;

    std::size_t n = train.n(), d = train.t();
    int classes = train.num_classes();
    for (int y : train.labels) classes = std::max(classes, y + 1);
    auto kc = static_cast<std::size_t>(classes);

    Tensor xt(n, d);
    std::vector<double> lo(d, 1e300), hi(d, -1e300);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            double v = train.rows[i][j].num;
            xt.at(i, j) = v;
            lo[j] = std::min(lo[j], v);
            hi[j] = std::max(hi[j], v);
        }

    std::mt19937_64 rng(spec.seed);
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(spec.budget);

    Tensor poison(spec.budget, d);
    std::vector<int> labels(n + spec.budget);
    for (std::size_t i = 0; i < n; ++i) labels[i] = train.labels[i];
    for (std::size_t p = 0; p < spec.budget; ++p) {
        std::copy(xt.row(idx[p]), xt.row(idx[p]) + d, poison.row(p));
        labels[n + p] = (train.labels[idx[p]] + 1) % classes;
    }

    std::size_t total = n + spec.budget;
    Tensor onehot(total, kc);
    for (std::size_t i = 0; i < total; ++i) onehot.at(i, static_cast<std::size_t>(labels[i])) = 1.0;

    Tensor xv(validation.n(), d);
    for (std::size_t i = 0; i < validation.n(); ++i)
        for (std::size_t j = 0; j < d; ++j) xv.at(i, j) = validation.rows[i][j].num;

    // Trainee state carried across ascent rounds (warm start).
    Tensor w_state(d, kc), b_state(1, kc);
    double reg = 1.0 / static_cast<double>(total);
    Tensor ones_row(1, total, 1.0);

    for (int round = 0; round < spec.outer_steps; ++round) {
        Var p_var = leaf(poison);
        Var z = concat_rows({constant(xt), p_var});
        Var y_const = constant(onehot);
        Var w = constant(w_state), b = constant(b_state);
        for (int k = 0; k < spec.inner_steps; ++k) {
            Var logits = add_row_broadcast(matmul(z, w), b);
            Var delta = scale(sub(softmax_rows(logits), y_const),
                              1.0 / static_cast<double>(total));
            Var gw = add(matmul(transpose(z), delta), scale(w, reg));
            Var gb = matmul(constant(ones_row), delta);
            w = sub(w, scale(gw, spec.inner_lr));
            b = sub(b, scale(gb, spec.inner_lr));
        }
        std::vector<int> yv = validation.labels;
        Var val_loss = mean_all(
            cross_entropy_rows(add_row_broadcast(matmul(constant(xv), w), b), std::move(yv)));
        backward(val_loss);

        for (std::size_t p = 0; p < spec.budget; ++p)
            for (std::size_t j = 0; j < d; ++j) {
                double v = poison.at(p, j) + spec.ascent_lr * sign0(p_var->grad.at(p, j));
                poison.at(p, j) = std::clamp(v, lo[j], hi[j]);
            }
        w_state = w->value;
        b_state = b->value;
    }

    out.rows.resize(spec.budget);
    out.labels.resize(spec.budget);
    for (std::size_t p = 0; p < spec.budget; ++p) {
        out.rows[p].resize(d);
        for (std::size_t j = 0; j < d; ++j) out.rows[p][j] = Cell::numeric(poison.at(p, j));
        out.labels[p] = labels[n + p];
    }
    return out;
}

}  // namespace picket
