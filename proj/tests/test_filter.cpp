#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "picket/filter.hpp"

using namespace picket;

namespace {

std::vector<OutlierScore> make_scores(const std::vector<double>& values) {
    std::vector<OutlierScore> scores(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        scores[i].row = i;
        scores[i].aggregated = values[i];
    }
    return scores;
}

Dataset numeric_dataset(const std::vector<std::vector<double>>& cols) {
    Dataset ds;
    for (std::size_t c = 0; c < cols.size(); ++c) {
        AttributeSpec spec;
        spec.name = "x" + std::to_string(c);
        spec.kind = AttrKind::Numeric;
        ds.schema.push_back(spec);
    }
    ds.rows.resize(cols[0].size());
    for (std::size_t r = 0; r < cols[0].size(); ++r)
        for (std::size_t c = 0; c < cols.size(); ++c)
            ds.rows[r].push_back(Cell::numeric(cols[c][r]));
    return ds;
}

}  // namespace

TEST_CASE("median handles odd, even and empty inputs") {
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.5);
    CHECK(median({7.0}) == 7.0);
    CHECK_THROWS_AS(median({}), std::invalid_argument);
}

TEST_CASE("aggregated scores normalize each attribute by its median") {
    LossRecord rec;
    rec.reset(4, 2, 2);
    // attribute 0 epoch averages per row: 1, 2, 3, 4 (median 2.5)
    for (std::size_t r = 0; r < 4; ++r) {
        rec.at(r, 0, 0) = static_cast<double>(r);
        rec.at(r, 0, 1) = static_cast<double>(r + 2);
    }
    // attribute 1 epoch averages per row: 10, 10, 10, 50 (median 10)
    for (std::size_t r = 0; r < 4; ++r) {
        double v = (r == 3) ? 50.0 : 10.0;
        rec.at(r, 1, 0) = v;
        rec.at(r, 1, 1) = v;
    }
    auto scores = aggregate_losses(rec);
    REQUIRE(scores.size() == 4);
    CHECK(scores[3].per_attribute[0] == doctest::Approx(4.0 / 2.5));
    CHECK(scores[3].per_attribute[1] == doctest::Approx(5.0));
    CHECK(scores[3].aggregated == doctest::Approx(4.0 / 2.5 + 5.0));
    CHECK(scores[0].aggregated == doctest::Approx(1.0 / 2.5 + 1.0));

    // an all-zero attribute is guarded against division by zero
    LossRecord zero;
    zero.reset(3, 1, 1);
    auto safe = aggregate_losses(zero);
    for (const auto& s : safe) CHECK(std::isfinite(s.aggregated));

    LossRecord empty;
    CHECK_THROWS_AS(aggregate_losses(empty), std::invalid_argument);
}

TEST_CASE("fpr thresholds split the budget between both tails") {
    std::vector<double> v(101);
    for (int i = 0; i <= 100; ++i) v[static_cast<std::size_t>(i)] = static_cast<double>(i);
    auto scores = make_scores(v);
    ThresholdPair t = thresholds_by_fpr(scores, 0.1);
    CHECK(t.low == doctest::Approx(5.0));
    CHECK(t.high == doctest::Approx(95.0));
    CHECK(t.method == ThresholdMethod::FprOnValidation);

    Dataset ds = numeric_dataset({v});
    FilterResult res = filter_by_thresholds(ds, scores, t);
    CHECK(res.removed_index.size() == 12);  // 0..5 and 95..100 inclusive
    CHECK(res.kept.n() == 89);
    for (std::size_t i : res.kept_index) CHECK((v[i] > 5.0 && v[i] < 95.0));

    CHECK_THROWS_AS(thresholds_by_fpr(scores, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(thresholds_by_fpr(scores, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(thresholds_by_fpr({}, 0.1), std::invalid_argument);
}

TEST_CASE("degenerate validation scores still give an open interval") {
    auto scores = make_scores(std::vector<double>(20, 3.0));
    ThresholdPair t = thresholds_by_fpr(scores, 0.2);
    CHECK(t.low < t.high);
}

TEST_CASE("histogram thresholds cut a trailing low-density tail") {
    std::vector<double> v;
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 0.9);
    for (int i = 0; i < 97; ++i) v.push_back(u(rng));
    v.push_back(9.5);
    v.push_back(9.6);
    v.push_back(9.7);
    auto scores = make_scores(v);
    HistogramThresholdOptions opt;
    opt.bins = 10;
    ThresholdPair t = thresholds_by_histogram(scores, opt);
    CHECK(t.low < *std::min_element(v.begin(), v.end()));
    CHECK(t.high < 9.5);
    CHECK(t.high > 0.9);

    Dataset ds = numeric_dataset({v});
    FilterResult res = filter_by_thresholds(ds, scores, t);
    CHECK(res.removed_index.size() == 3);
    for (std::size_t i : res.removed_index) CHECK(v[i] > 9.0);
}

TEST_CASE("histogram thresholds cut a leading spike before the mode") {
    std::vector<double> v;
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> bulk(5.0, 5.99);
    for (int i = 0; i < 20; ++i) v.push_back(0.5);
    for (int i = 0; i < 100; ++i) v.push_back(bulk(rng));
    v.push_back(9.99);
    auto scores = make_scores(v);
    HistogramThresholdOptions opt;
    opt.bins = 10;
    ThresholdPair t = thresholds_by_histogram(scores, opt);
    CHECK(t.low > 0.5);
    CHECK(t.low < 5.0);

    Dataset ds = numeric_dataset({v});
    FilterResult res = filter_by_thresholds(ds, scores, t);
    for (std::size_t i : res.kept_index) CHECK(v[i] >= 5.0);
    CHECK(res.kept.n() == 100);
}

TEST_CASE("histogram thresholds keep everything for a unimodal sample") {
    std::vector<double> v;
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int i = 0; i < 500; ++i) v.push_back(g(rng));
    auto scores = make_scores(v);
    ThresholdPair t = thresholds_by_histogram(scores);
    Dataset ds = numeric_dataset({v});
    FilterResult res = filter_by_thresholds(ds, scores, t);
    // a contiguous bell keeps the overwhelming majority of rows
    CHECK(res.kept.n() >= 490);

    auto flat = make_scores(std::vector<double>(500, 1.0));
    ThresholdPair ft = thresholds_by_histogram(flat);
    CHECK(ft.low < 1.0);
    CHECK(ft.high > 1.0);

    CHECK_THROWS_AS(thresholds_by_histogram(make_scores({1.0, 2.0})), std::invalid_argument);
}

TEST_CASE("top fraction removes the ceil of the requested share") {
    std::vector<double> v{5.0, 1.0, 9.0, 3.0, 7.0, 2.0, 8.0, 4.0, 6.0, 0.0};
    auto scores = make_scores(v);
    Dataset ds = numeric_dataset({v});

    FilterResult res = filter_top_fraction(ds, scores, 0.25);
    CHECK(res.removed_index.size() == 3);  // ceil(0.25 * 10)
    for (std::size_t i : res.removed_index) CHECK(v[i] >= 7.0);
    for (std::size_t i : res.kept_index) CHECK(v[i] < 7.0);

    CHECK(filter_top_fraction(ds, scores, 0.0).kept.n() == 10);
    CHECK_THROWS_AS(filter_top_fraction(ds, scores, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(filter_top_fraction(ds, make_scores({1.0}), 0.1), std::invalid_argument);
}

TEST_CASE("association matrix mixes pearson and cramers v") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> x0, x1, x2;
    for (int i = 0; i < 200; ++i) {
        double a = g(rng), b = g(rng);
        x0.push_back(a);
        x1.push_back(-3.0 * a + 1.0);
        x2.push_back(b);
    }
    Dataset ds = numeric_dataset({x0, x1, x2});
    Tensor m = association_matrix(ds);
    CHECK(m.at(0, 0) == 1.0);
    CHECK(m.at(0, 1) == doctest::Approx(1.0));
    CHECK(m.at(1, 0) == m.at(0, 1));
    CHECK(m.at(0, 2) < 0.3);

    // two categorical columns in lockstep have Cramer's V of 1
    std::string csv = "a,b\n";
    for (int i = 0; i < 30; ++i) csv += (i % 2 ? "x,p\n" : "y,q\n");
    Dataset cats = dataset_from_csv_text(
        csv,
        R"({"columns":[{"name":"a","kind":"categorical"},{"name":"b","kind":"categorical"}]})");
    Tensor cm = association_matrix(cats);
    CHECK(cm.at(0, 1) == doctest::Approx(1.0));
}

TEST_CASE("attribute grouping keeps correlated blocks together") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> a, a2, b, b2;
    for (int i = 0; i < 300; ++i) {
        double x = g(rng), y = g(rng);
        a.push_back(x);
        a2.push_back(2.0 * x + 0.01 * g(rng));
        b.push_back(y);
        b2.push_back(-y + 0.01 * g(rng));
    }
    Dataset ds = numeric_dataset({a, b, a2, b2});
    auto groups = group_attributes(ds, 2);
    REQUIRE(groups.size() == 2);
    std::sort(groups.begin(), groups.end());
    CHECK(groups[0] == std::vector<std::size_t>{0, 2});
    CHECK(groups[1] == std::vector<std::size_t>{1, 3});

    // a narrow table collapses into a single identity group
    Dataset narrow = numeric_dataset({a, b});
    auto single = group_attributes(narrow, 4);
    REQUIRE(single.size() == 1);
    CHECK(single[0] == std::vector<std::size_t>{0, 1});

    CHECK_THROWS_AS(group_attributes(ds, 1), std::invalid_argument);
}
