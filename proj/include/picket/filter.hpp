#pragma once

#include <set>
#include <string>
#include <vector>

#include "picket/data.hpp"
#include "picket/picketnet.hpp"

namespace picket {

struct OutlierScore {
    std::size_t row = 0;
    double aggregated = 0.0;
    std::vector<double> per_attribute;  // median-normalized
};

enum class ThresholdMethod { Fixed, FprOnValidation, Histogram, TopFraction };

struct ThresholdPair {
    double low = 0.0;
    double high = 0.0;
    ThresholdMethod method = ThresholdMethod::Fixed;
};

struct HistogramThresholdOptions {
    int bins = 40;
    double spike_separation = 0.10;  // gap bin relative to modal bin
    double tail_threshold = 0.05;    // trailing bins relative to modal bin
};

/// Per-attribute epoch averages divided by the per-attribute median over all
/// rows, summed across attributes.
std::vector<OutlierScore> aggregate_losses(const LossRecord& rec);

ThresholdPair thresholds_by_fpr(const std::vector<OutlierScore>& clean_validation, double fpr);
ThresholdPair thresholds_by_histogram(const std::vector<OutlierScore>& scores,
                                      const HistogramThresholdOptions& opt = {});

struct FilterResult {
    Dataset kept;
    std::vector<std::size_t> kept_index;
    std::vector<std::size_t> removed_index;
};

FilterResult filter_by_thresholds(const Dataset& ds, const std::vector<OutlierScore>& scores,
                                  const ThresholdPair& thresholds);
FilterResult filter_top_fraction(const Dataset& ds, const std::vector<OutlierScore>& scores,
                                 double fraction);

/// Attribute grouping for wide tables: pairwise association (Pearson for
/// numeric-numeric, Cramer's V otherwise), then greedy agglomeration of the
/// strongest pairs into groups of at most max_group attributes.
std::vector<std::vector<std::size_t>> group_attributes(const Dataset& ds, std::size_t max_group);
Tensor association_matrix(const Dataset& ds);

double median(std::vector<double> v);

}  // namespace picket
