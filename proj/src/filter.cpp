#include "picket/filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace picket {

double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median of empty list");
    std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    double lo = *std::max_element(v.begin(), v.begin() + mid);
    return 0.5 * (lo + hi);
}

std::vector<OutlierScore> aggregate_losses(const LossRecord& rec) {
    if (rec.n == 0 || rec.epochs == 0) throw std::invalid_argument("empty loss record");
    const double kMedianGuard = 1e-12;
    std::vector<std::vector<double>> avg(rec.t, std::vector<double>(rec.n));
    std::vector<double> med(rec.t);
    for (std::size_t a = 0; a < rec.t; ++a) {
        for (std::size_t r = 0; r < rec.n; ++r) avg[a][r] = rec.average(r, a);
        med[a] = std::max(median(avg[a]), kMedianGuard);
    }
    std::vector<OutlierScore> scores(rec.n);
    for (std::size_t r = 0; r < rec.n; ++r) {
        scores[r].row = r;
        scores[r].per_attribute.resize(rec.t);
        double sum = 0.0;
        for (std::size_t a = 0; a < rec.t; ++a) {
            double v = avg[a][r] / med[a];
            scores[r].per_attribute[a] = v;
            sum += v;
        }
        scores[r].aggregated = sum;
    }
    return scores;
}

namespace {

double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    double pos = q * static_cast<double>(v.size() - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    std::size_t hi = std::min(lo + 1, v.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return v[lo] * (1.0 - frac) + v[hi] * frac;
}

std::vector<double> aggregated_values(const std::vector<OutlierScore>& scores) {
    std::vector<double> v;
    v.reserve(scores.size());
    for (const auto& s : scores) v.push_back(s.aggregated);
    return v;
}

}  // namespace

ThresholdPair thresholds_by_fpr(const std::vector<OutlierScore>& clean_validation, double fpr) {
    if (fpr <= 0.0 || fpr >= 1.0) throw std::invalid_argument("fpr must be in (0,1)");
    if (clean_validation.empty()) throw std::invalid_argument("empty validation scores");
    auto v = aggregated_values(clean_validation);
    ThresholdPair t;
    t.method = ThresholdMethod::FprOnValidation;
    t.low = quantile(v, fpr / 2.0);        // budget split equally two-sided
    t.high = quantile(v, 1.0 - fpr / 2.0);
    if (t.low >= t.high) {
        double mid = t.low;
        t.low = mid - 1e-12;
        t.high = mid + 1e-12;
    }
    return t;
}

ThresholdPair thresholds_by_histogram(const std::vector<OutlierScore>& scores,
                                      const HistogramThresholdOptions& opt) {
    if (opt.bins < 2) throw std::invalid_argument("need at least 2 bins");
    if (scores.size() < 10 * static_cast<std::size_t>(opt.bins))
        throw std::invalid_argument("too few scores for histogram thresholds");
    auto v = aggregated_values(scores);
    double lo = *std::min_element(v.begin(), v.end());
    double hi = *std::max_element(v.begin(), v.end());
    ThresholdPair t;
    t.method = ThresholdMethod::Histogram;
    if (hi <= lo) {  // degenerate: all scores equal
        t.low = lo - 1.0;
        t.high = hi + 1.0;
        return t;
    }
    std::size_t bins = static_cast<std::size_t>(opt.bins);
    double width = (hi - lo) / static_cast<double>(bins);
    std::vector<std::size_t> count(bins, 0);
    for (double x : v) {
        std::size_t b = std::min(bins - 1, static_cast<std::size_t>((x - lo) / width));
        count[b]++;
    }
    std::size_t modal = 0;
    for (std::size_t b = 1; b < bins; ++b)
        if (count[b] > count[modal]) modal = b;
    double modal_count = static_cast<double>(count[modal]);

    double margin = 1e-9 * (hi - lo);
    t.low = lo - margin;
    t.high = hi + margin;

    // Leading spike: a real peak before a near-empty gap bin left of the mode.
    for (std::size_t g = 1; g < modal; ++g) {
        if (static_cast<double>(count[g]) >= opt.spike_separation * modal_count) continue;
        std::size_t peak = *std::max_element(count.begin(), count.begin() + g);
        if (static_cast<double>(peak) >= opt.spike_separation * modal_count &&
            peak > count[g]) {
            t.low = lo + width * static_cast<double>(g + 1);
            break;
        }
    }

    // Trailing low-density tail: start of the final run of sparse bins.
    std::size_t tail_start = bins;
    for (std::size_t b = bins; b-- > modal + 1;) {
        if (static_cast<double>(count[b]) < opt.tail_threshold * modal_count)
            tail_start = b;
        else
            break;
    }
    if (tail_start < bins) t.high = lo + width * static_cast<double>(tail_start);
    if (t.low >= t.high) {  // fall back to the full span
        t.low = lo - margin;
        t.high = hi + margin;
    }
    return t;
}

namespace {

FilterResult build_result(const Dataset& ds, const std::vector<bool>& removed) {
    FilterResult res;
    for (std::size_t i = 0; i < removed.size(); ++i)
        (removed[i] ? res.removed_index : res.kept_index).push_back(i);
    res.kept = subset_rows(ds, res.kept_index);
    return res;
}

}  // namespace

FilterResult filter_by_thresholds(const Dataset& ds, const std::vector<OutlierScore>& scores,
                                  const ThresholdPair& thresholds) {
    if (scores.size() != ds.n()) throw std::invalid_argument("scores/dataset size mismatch");
    if (!(thresholds.low < thresholds.high))
        throw std::invalid_argument("thresholds: low must be below high");
    std::vector<bool> removed(ds.n(), false);
    for (const auto& s : scores)
        removed[s.row] = s.aggregated <= thresholds.low || s.aggregated >= thresholds.high;
    return build_result(ds, removed);
}

FilterResult filter_top_fraction(const Dataset& ds, const std::vector<OutlierScore>& scores,
                                 double fraction) {
    if (scores.size() != ds.n()) throw std::invalid_argument("scores/dataset size mismatch");
    if (fraction < 0.0 || fraction >= 0.5)
        throw std::invalid_argument("top fraction must be in [0, 0.5)");
    std::size_t k = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(ds.n()) - 1e-12));
    std::vector<std::size_t> order(ds.n());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a].aggregated > scores[b].aggregated;
    });
    std::vector<bool> removed(ds.n(), false);
    for (std::size_t i = 0; i < k; ++i) removed[scores[order[i]].row] = true;
    return build_result(ds, removed);
}

namespace {

double pearson_abs(const Dataset& ds, std::size_t a, std::size_t b) {
    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    std::size_t n = 0;
    for (const auto& row : ds.rows) {
        if (row[a].missing || row[b].missing) continue;
        double x = row[a].num, y = row[b].num;
        sa += x;
        sb += y;
        saa += x * x;
        sbb += y * y;
        sab += x * y;
        ++n;
    }
    if (n < 2) return 0.0;
    double nd = static_cast<double>(n);
    double cov = sab / nd - (sa / nd) * (sb / nd);
    double va = saa / nd - (sa / nd) * (sa / nd);
    double vb = sbb / nd - (sb / nd) * (sb / nd);
    if (va <= 0.0 || vb <= 0.0) return 0.0;
    return std::abs(cov / std::sqrt(va * vb));
}

// Discretizes cells for the contingency table: categorical/text by domain id,
// numeric by quintile bin.
std::vector<int> discretize(const Dataset& ds, std::size_t c, int* levels) {
    std::vector<int> out(ds.n(), -1);
    const auto& spec = ds.schema[c];
    if (spec.kind != AttrKind::Numeric) {
        for (std::size_t r = 0; r < ds.n(); ++r)
            if (!ds.rows[r][c].missing) out[r] = spec.domain_id(ds.rows[r][c].text);
        *levels = static_cast<int>(spec.domain.size());
        return out;
    }
    std::vector<double> vals;
    for (const auto& row : ds.rows)
        if (!row[c].missing) vals.push_back(row[c].num);
    if (vals.empty()) {
        *levels = 1;
        return out;
    }
    std::sort(vals.begin(), vals.end());
    const int kBins = 5;
    std::vector<double> edges;
    for (int q = 1; q < kBins; ++q)
        edges.push_back(vals[vals.size() * static_cast<std::size_t>(q) / kBins]);
    for (std::size_t r = 0; r < ds.n(); ++r) {
        if (ds.rows[r][c].missing) continue;
        int b = 0;
        while (b < kBins - 1 && ds.rows[r][c].num > edges[static_cast<std::size_t>(b)]) ++b;
        out[r] = b;
    }
    *levels = kBins;
    return out;
}

double cramers_v(const Dataset& ds, std::size_t a, std::size_t b) {
    int la = 0, lb = 0;
    auto xa = discretize(ds, a, &la);
    auto xb = discretize(ds, b, &lb);
    if (la < 2 || lb < 2) return 0.0;
    std::vector<double> table(static_cast<std::size_t>(la * lb), 0.0);
    std::vector<double> ra(static_cast<std::size_t>(la), 0.0), rb(static_cast<std::size_t>(lb), 0.0);
    double n = 0;
    for (std::size_t r = 0; r < ds.n(); ++r) {
        if (xa[r] < 0 || xb[r] < 0) continue;
        table[static_cast<std::size_t>(xa[r] * lb + xb[r])] += 1.0;
        ra[static_cast<std::size_t>(xa[r])] += 1.0;
        rb[static_cast<std::size_t>(xb[r])] += 1.0;
        n += 1.0;
    }
    if (n < 2) return 0.0;
    double chi2 = 0.0;
    for (int i = 0; i < la; ++i)
        for (int j = 0; j < lb; ++j) {
            double expected = ra[static_cast<std::size_t>(i)] * rb[static_cast<std::size_t>(j)] / n;
            if (expected <= 0.0) continue;
            double d = table[static_cast<std::size_t>(i * lb + j)] - expected;
            chi2 += d * d / expected;
        }
    double denom = n * static_cast<double>(std::min(la, lb) - 1);
    return denom > 0.0 ? std::sqrt(chi2 / denom) : 0.0;
}

}  // namespace

Tensor association_matrix(const Dataset& ds) {
    std::size_t t = ds.t();
    Tensor m(t, t);
    for (std::size_t a = 0; a < t; ++a) {
        m.at(a, a) = 1.0;
        for (std::size_t b = a + 1; b < t; ++b) {
            double v = (ds.schema[a].kind == AttrKind::Numeric &&
                        ds.schema[b].kind == AttrKind::Numeric)
                           ? pearson_abs(ds, a, b)
                           : cramers_v(ds, a, b);
            m.at(a, b) = v;
            m.at(b, a) = v;
        }
    }
    return m;
}

std::vector<std::vector<std::size_t>> group_attributes(const Dataset& ds, std::size_t max_group) {
    if (max_group < 2) throw std::invalid_argument("max_group must be >= 2");
    std::size_t t = ds.t();
    std::vector<std::vector<std::size_t>> groups;
    if (t <= max_group) {
        groups.emplace_back(t);
        std::iota(groups[0].begin(), groups[0].end(), 0);
        return groups;
    }
    Tensor assoc = association_matrix(ds);
    for (std::size_t a = 0; a < t; ++a) groups.push_back({a});
    // Greedy complete-linkage-style agglomeration on max pairwise association.
    while (true) {
        double best = -1.0;
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < groups.size(); ++i)
            for (std::size_t j = i + 1; j < groups.size(); ++j) {
                if (groups[i].size() + groups[j].size() > max_group) continue;
                double link = 0.0;
                for (std::size_t a : groups[i])
                    for (std::size_t b : groups[j]) link = std::max(link, assoc.at(a, b));
                if (link > best) {
                    best = link;
                    bi = i;
                    bj = j;
                }
            }
        if (best < 0.0) break;
        groups[bi].insert(groups[bi].end(), groups[bj].begin(), groups[bj].end());
        groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(bj));
    }
    for (auto& g : groups) std::sort(g.begin(), g.end());
    return groups;
}

}  // namespace picket
