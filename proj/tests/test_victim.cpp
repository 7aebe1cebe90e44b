#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>
#include <set>

#include "picket/metrics.hpp"
#include "picket/noise.hpp"
#include "picket/victim.hpp"

using namespace picket;

namespace {

struct Fixture {
    Dataset clean;
    DownstreamModel model;
    std::shared_ptr<PicketNet> net;
};

Fixture make_fixture() {
    Fixture f;
    f.clean = synth_labeled_task(3, 2, 80, 51);
    f.model = DownstreamModel::fit(DownstreamSpec{}, f.clean, 5);
    PicketNetConfig cfg = PicketNetConfig::numeric_small();
    cfg.warm_epochs = 2;
    cfg.record_epochs = 1;
    f.net = std::make_shared<PicketNet>(f.clean, cfg, 5);
    f.net->train_epochs(f.clean, 2);
    return f;
}

}  // namespace

TEST_CASE("artificial mixture draws from correct rows and cycles generators") {
    Fixture f = make_fixture();
    auto cands = artificial_mixture(f.clean, f.model, 50, 3);
    REQUIRE(cands.size() == 50);

    std::set<std::string> tags;
    for (const auto& c : cands) {
        CHECK(f.model.predict(f.clean.rows[c.source]) == f.clean.labels[c.source]);
        CHECK(c.label == f.clean.labels[c.source]);
        CHECK(c.victim == (f.model.predict(c.row) != c.label));
        tags.insert(c.generator);
    }
    // numeric schema: four noise levels plus the FGSM augmentation
    CHECK(tags.size() == 5);
    CHECK(tags.count("fgsm-0.1") == 1);
    CHECK(tags.count("dense-1.0-0.25") == 1);

    // deterministic in the seed
    auto again = artificial_mixture(f.clean, f.model, 50, 3);
    for (std::size_t i = 0; i < cands.size(); ++i) {
        CHECK(again[i].source == cands[i].source);
        CHECK(again[i].victim == cands[i].victim);
    }

    Dataset unlabeled = synth_gaussian_linear(3, 2, 10, 1);
    CHECK_THROWS_AS(artificial_mixture(unlabeled, f.model, 5, 1), std::invalid_argument);
}

TEST_CASE("detector sets keep the one to one to two pool ratio") {
    Fixture f = make_fixture();
    auto sets = build_detector_sets(f.clean, f.model, *f.net, 9, 13, 20);
    REQUIRE(sets.size() == 2);
    for (const auto& set : sets) {
        std::size_t m = set.clean_count;
        CHECK(m > 0);
        CHECK(set.ns_count == m);
        CHECK(set.vs_count == 2 * m);
        REQUIRE(set.features.size() == 4 * m);
        REQUIRE(set.victim.size() == 4 * m);
        CHECK(set.loss_dim == f.net->t());

        // features are the downstream encoding plus the loss vector
        std::size_t dim = f.model.encoder().dim() + f.net->t();
        for (const auto& x : set.features) CHECK(x.size() == dim);

        // layout: clean rows, then near-boundary survivors, then victims
        for (std::size_t i = 0; i < 2 * m; ++i) CHECK(set.victim[i] == 0);
        for (std::size_t i = 2 * m; i < 4 * m; ++i) CHECK(set.victim[i] == 1);
    }
    CHECK(sets[0].cls == 0);
    CHECK(sets[1].cls == 1);
}

TEST_CASE("fitted detectors separate their own training pools") {
    Fixture f = make_fixture();
    auto sets = build_detector_sets(f.clean, f.model, *f.net, 9, 13, 20);
    VictimDetectors det = fit_detectors(sets);
    CHECK(det.feature_dim == f.model.encoder().dim() + f.net->t());
    REQUIRE(det.loss_median.size() == f.net->t());

    for (const auto& set : sets) {
        const VictimDetector& d = det.for_class(set.cls);
        CHECK(d.cls == set.cls);
        std::vector<double> score;
        std::vector<int> truth;
        for (std::size_t i = 0; i < set.features.size(); ++i) {
            double p = d.probability(set.features[i]);
            CHECK(p >= 0.0);
            CHECK(p <= 1.0);
            score.push_back(p);
            truth.push_back(set.victim[i]);
        }
        std::vector<int> pred;
        for (double p : score) pred.push_back(p > 0.5 ? 1 : 0);
        CHECK(f1_score(pred, truth) > 0.5);
        CHECK(auroc(score, truth) > 0.6);
    }

    CHECK(det.unified.cls == -1);
    CHECK(det.unified.w.rows() == 2);
    CHECK(det.unified.w.cols() == det.feature_dim);
    CHECK(det.score_based.w.cols() == 1);
    CHECK_THROWS_AS(det.for_class(7), std::out_of_range);
    CHECK_THROWS_AS(fit_detectors({}), std::invalid_argument);
}

TEST_CASE("aggregated score normalizes by the pooled medians") {
    VictimDetectors det;
    det.loss_median = {2.0, 0.5, 0.0};
    double s = det.aggregated_score({4.0, 1.0, 0.0});
    CHECK(s == doctest::Approx(2.0 + 2.0 + 0.0));
    CHECK_THROWS_AS(det.aggregated_score({1.0}), std::invalid_argument);
}

TEST_CASE("detector probability is the two class softmax") {
    VictimDetector d;
    d.w = Tensor(2, 2);
    d.b = Tensor(1, 2);
    d.w.at(0, 0) = 1.0;
    d.w.at(1, 0) = -1.0;
    CHECK(d.probability({0.0, 0.0}) == doctest::Approx(0.5));
    CHECK(d.probability({1.0, 5.0}) == doctest::Approx(1.0 / (1.0 + std::exp(2.0))));
    CHECK(d.probability({-3.0, 0.0}) > 0.99);
    CHECK_THROWS_AS(d.probability({1.0}), std::invalid_argument);
}

TEST_CASE("guard routes by predicted class and flags strictly above threshold") {
    Fixture f = make_fixture();
    auto sets = build_detector_sets(f.clean, f.model, *f.net, 9, 13, 20);

    GuardBundle bundle;
    bundle.net = f.net;
    bundle.model = f.model;
    bundle.detectors = fit_detectors(sets);
    bundle.eval_seed = 9;

    const auto& row = f.clean.rows[0];
    std::vector<double> losses;
    std::vector<double> x = detector_features(bundle, row, &losses);
    CHECK(x.size() == bundle.detectors.feature_dim);
    CHECK(losses.size() == f.net->t());
    CHECK(std::equal(losses.begin(), losses.end(), x.end() - static_cast<std::ptrdiff_t>(losses.size())));

    GuardDecision dec = guard(bundle, row);
    CHECK(dec.prediction == f.model.predict(row));
    CHECK(dec.losses == losses);
    CHECK(dec.score ==
          doctest::Approx(bundle.detectors.for_class(dec.prediction).probability(x)));
    CHECK(dec.flagged == (dec.score > 0.5));

    // at an exact threshold match nothing is flagged
    bundle.threshold = dec.score;
    CHECK_FALSE(guard(bundle, row).flagged);

    bundle.variant = DetectorVariant::Unified;
    GuardDecision uni = guard(bundle, row);
    CHECK(uni.score == doctest::Approx(bundle.detectors.unified.probability(x)));

    bundle.variant = DetectorVariant::ScoreBased;
    GuardDecision sb = guard(bundle, row);
    std::vector<double> agg{bundle.detectors.aggregated_score(losses)};
    CHECK(sb.score == doctest::Approx(bundle.detectors.score_based.probability(agg)));
}

TEST_CASE("guard decisions are deterministic") {
    Fixture f = make_fixture();
    auto sets = build_detector_sets(f.clean, f.model, *f.net, 9, 13, 20);
    GuardBundle bundle;
    bundle.net = f.net;
    bundle.model = f.model;
    bundle.detectors = fit_detectors(sets);
    bundle.eval_seed = 9;
    GuardDecision a = guard(bundle, f.clean.rows[5]);
    GuardDecision b = guard(bundle, f.clean.rows[5]);
    CHECK(a.score == b.score);
    CHECK(a.losses == b.losses);
    CHECK(a.prediction == b.prediction);
}
