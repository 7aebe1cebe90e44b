#include "picket/victim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "picket/attack.hpp"
#include "picket/noise.hpp"

namespace picket {

std::vector<MixtureCandidate> artificial_mixture(const Dataset& clean,
                                                 const DownstreamModel& model,
                                                 std::size_t attempts, std::uint64_t seed) {
    if (!clean.labeled()) throw std::invalid_argument("artificial_mixture needs labels");

    std::vector<std::size_t> correct;
    for (std::size_t i = 0; i < clean.n(); ++i)
        if (model.predict(clean.rows[i]) == clean.labels[i]) correct.push_back(i);
    if (correct.empty()) throw std::runtime_error("no correctly classified clean rows");

    struct Level {
        const char* tag;
        double beta, sigma;
    };
    static const Level levels[] = {
        {"random-0.4-4", 0.4, 4.0},
        {"random-0.25-2", 0.25, 2.0},
        {"random-0.15-1.5", 0.15, 1.5},
        {"dense-1.0-0.25", 1.0, 0.25},
    };
    bool numeric = model.encoder().all_numeric();
    std::size_t kinds = numeric ? 5 : 4;

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, correct.size() - 1);

    std::vector<MixtureCandidate> out;
    out.reserve(attempts);
    for (std::size_t a = 0; a < attempts; ++a) {
        std::size_t src = correct[pick(rng)];
        MixtureCandidate cand;
        cand.source = src;
        cand.label = clean.labels[src];
        cand.row = clean.rows[src];
        std::size_t kind = a % kinds;
        if (kind < 4) {
            NoiseSpec spec;
            spec.kind = NoiseKind::Random;
            spec.beta = levels[kind].beta;
            spec.sigma1 = levels[kind].sigma;
            cand.generator = levels[kind].tag;
            corrupt_row(cand.row, clean, spec, rng());
        } else {
            cand.generator = "fgsm-0.1";
            cand.row = attack_row(model, cand.row, cand.label, AttackSpec::fgsm_augment());
        }
        cand.prediction = model.predict(cand.row);
        cand.victim = cand.prediction != cand.label;
        out.push_back(std::move(cand));
    }
    return out;
}

std::vector<DetectorSet> build_detector_sets(const Dataset& clean, const DownstreamModel& model,
                                             const PicketNet& net, std::uint64_t eval_seed,
                                             std::uint64_t seed, std::size_t max_per_class) {
    int classes = model.classes();
    std::vector<std::vector<std::size_t>> correct_by_class(static_cast<std::size_t>(classes));
    for (std::size_t i = 0; i < clean.n(); ++i) {
        int p = model.predict(clean.rows[i]);
        if (p == clean.labels[i]) correct_by_class[static_cast<std::size_t>(p)].push_back(i);
    }

    auto featurize = [&](const std::vector<Cell>& row) {
        std::vector<double> x = model.encoder().encode(row);
        std::vector<double> losses = net.loss_vector(row, eval_seed);
        x.insert(x.end(), losses.begin(), losses.end());
        return x;
    };

    // Candidates are routed by the model's prediction on the corrupted tuple:
    // the guard later picks the detector of the predicted class, so the
    // detector for class y must see victims that arrive in class y, not the
    // ones that leave it. Non-victims keep their (correct) prediction.
    std::mt19937_64 rng(seed);
    std::vector<std::vector<std::vector<Cell>>> vs(static_cast<std::size_t>(classes));
    std::vector<std::vector<std::vector<Cell>>> ns(static_cast<std::size_t>(classes));
    std::vector<std::size_t> cap(static_cast<std::size_t>(classes));
    for (int y = 0; y < classes; ++y) {
        auto& pool = correct_by_class[static_cast<std::size_t>(y)];
        if (pool.empty())
            throw std::runtime_error("class " + std::to_string(y) +
                                     " has no correctly classified clean rows");
        cap[static_cast<std::size_t>(y)] = std::min(max_per_class, 2 * pool.size());
    }

    auto filled = [&] {
        for (int y = 0; y < classes; ++y) {
            std::size_t c = cap[static_cast<std::size_t>(y)];
            if (vs[static_cast<std::size_t>(y)].size() < c ||
                ns[static_cast<std::size_t>(y)].size() < c / 2)
                return false;
        }
        return true;
    };

    std::size_t total_cap = 0;
    for (std::size_t c : cap) total_cap += c;
    std::size_t budget = 40 * total_cap + 200;
    std::uint64_t sub_seed = rng();
    std::size_t spent = 0;
    while (spent < budget && !filled()) {
        std::size_t chunk = std::min<std::size_t>(budget - spent, 4 * total_cap + 8);
        auto cands = artificial_mixture(clean, model, chunk, sub_seed++);
        spent += chunk;
        for (auto& c : cands) {
            auto p = static_cast<std::size_t>(c.prediction);
            if (c.victim && vs[p].size() < cap[p])
                vs[p].push_back(std::move(c.row));
            else if (!c.victim && ns[p].size() < cap[p] / 2)
                ns[p].push_back(std::move(c.row));
        }
    }

    std::vector<DetectorSet> sets;
    for (int yi = 0; yi < classes; ++yi) {
        auto y = static_cast<std::size_t>(yi);
        auto& pool = correct_by_class[y];
        std::size_t m = std::min({pool.size(), ns[y].size(), vs[y].size() / 2});
        if (m == 0)
            throw std::runtime_error("mixture produced no usable pools for class " +
                                     std::to_string(yi));
        std::shuffle(pool.begin(), pool.end(), rng);

        DetectorSet set;
        set.cls = yi;
        set.loss_dim = net.t();
        set.clean_count = m;
        set.ns_count = m;
        set.vs_count = 2 * m;
        for (std::size_t i = 0; i < m; ++i) {
            set.features.push_back(featurize(clean.rows[pool[i]]));
            set.victim.push_back(0);
        }
        for (std::size_t i = 0; i < m; ++i) {
            set.features.push_back(featurize(ns[y][i]));
            set.victim.push_back(0);
        }
        for (std::size_t i = 0; i < 2 * m; ++i) {
            set.features.push_back(featurize(vs[y][i]));
            set.victim.push_back(1);
        }
        sets.push_back(std::move(set));
    }
    return sets;
}

double VictimDetector::probability(const std::vector<double>& features) const {
    if (features.size() != w.cols()) throw std::invalid_argument("detector feature dimension");
    double s0 = b.at(0, 0), s1 = b.at(0, 1);
    for (std::size_t j = 0; j < features.size(); ++j) {
        s0 += w.at(0, j) * features[j];
        s1 += w.at(1, j) * features[j];
    }
    return 1.0 / (1.0 + std::exp(s0 - s1));
}

const VictimDetector& VictimDetectors::for_class(int cls) const {
    for (const auto& d : per_class)
        if (d.cls == cls) return d;
    throw std::out_of_range("no detector for class " + std::to_string(cls));
}

double VictimDetectors::aggregated_score(const std::vector<double>& losses) const {
    if (losses.size() != loss_median.size())
        throw std::invalid_argument("loss vector length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < losses.size(); ++i)
        s += losses[i] / std::max(loss_median[i], 1e-12);
    return s;
}

VictimDetectors fit_detectors(const std::vector<DetectorSet>& sets, double regularization) {
    if (sets.empty()) throw std::invalid_argument("fit_detectors: no sets");
    VictimDetectors out;
    out.feature_dim = sets[0].features.at(0).size();

    auto fit_one = [&](const std::vector<std::vector<double>>& rows, const std::vector<int>& y,
                       int cls) {
        Tensor x(rows.size(), rows[0].size());
        for (std::size_t i = 0; i < rows.size(); ++i)
            std::copy(rows[i].begin(), rows[i].end(), x.row(i));
        bool pos = false, neg = false;
        for (int v : y) (v ? pos : neg) = true;
        if (!pos || !neg) throw std::runtime_error("detector set has a single label");
        LogisticFit fit = fit_logistic(x, y, 2, regularization, 5000, 1e-6);
        VictimDetector d;
        d.cls = cls;
        d.w = fit.w;
        d.b = fit.b;
        return d;
    };

    std::vector<std::vector<double>> pooled;
    std::vector<int> pooled_y;
    for (const auto& set : sets) {
        out.per_class.push_back(fit_one(set.features, set.victim, set.cls));
        pooled.insert(pooled.end(), set.features.begin(), set.features.end());
        pooled_y.insert(pooled_y.end(), set.victim.begin(), set.victim.end());
    }
    out.unified = fit_one(pooled, pooled_y, -1);

    // Score-based ablation: median-normalized aggregated loss as the single
    // feature of a pooled logistic model.
    std::size_t t = sets[0].loss_dim;
    if (t == 0 || t > out.feature_dim) throw std::invalid_argument("bad loss block width");
    std::size_t enc_dim = out.feature_dim - t;
    out.loss_median.resize(t);
    for (std::size_t a = 0; a < t; ++a) {
        std::vector<double> col;
        col.reserve(pooled.size());
        for (const auto& f : pooled) col.push_back(f[enc_dim + a]);
        std::nth_element(col.begin(), col.begin() + col.size() / 2, col.end());
        double hi = col[col.size() / 2];
        if (col.size() % 2 == 0) {
            std::nth_element(col.begin(), col.begin() + col.size() / 2 - 1, col.end());
            hi = 0.5 * (hi + col[col.size() / 2 - 1]);
        }
        out.loss_median[a] = hi;
    }
    std::vector<std::vector<double>> scores;
    scores.reserve(pooled.size());
    for (const auto& f : pooled)
        scores.push_back({out.aggregated_score({f.begin() + static_cast<std::ptrdiff_t>(enc_dim),
                                                f.end()})});
    out.score_based = fit_one(scores, pooled_y, -1);
    return out;
}

std::vector<double> detector_features(const GuardBundle& bundle, const std::vector<Cell>& row,
                                      std::vector<double>* losses_out) {
    std::vector<double> x = bundle.model.encoder().encode(row);
    std::vector<double> losses = bundle.net->loss_vector(row, bundle.eval_seed);
    if (losses_out) *losses_out = losses;
    x.insert(x.end(), losses.begin(), losses.end());
    return x;
}

GuardDecision guard(const GuardBundle& bundle, const std::vector<Cell>& row) {
    GuardDecision out;
    std::vector<double> x = detector_features(bundle, row, &out.losses);
    out.prediction = bundle.model.predict(row);
    switch (bundle.variant) {
        case DetectorVariant::PerClass:
            out.score = bundle.detectors.for_class(out.prediction).probability(x);
            break;
        case DetectorVariant::Unified:
            out.score = bundle.detectors.unified.probability(x);
            break;
        case DetectorVariant::ScoreBased: {
            std::vector<double> s{bundle.detectors.aggregated_score(out.losses)};
            out.score = bundle.detectors.score_based.probability(s);
            break;
        }
    }
    out.flagged = out.score > bundle.threshold;
    return out;
}

}  // namespace picket
