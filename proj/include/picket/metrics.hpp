#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "picket/data.hpp"

namespace picket {

/// Rank-based AUROC (Mann-Whitney) with average ranks for ties.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

/// F1 on the positive class; 0 when there are no true positives.
double f1_score(const std::vector<int>& predictions, const std::vector<int>& labels,
                int positive = 1);

/// Opportunity gamma_G = kept clean rows / clean rows for one group.
/// Returns gamma_minority - gamma_majority.
double opportunity_difference(const std::vector<std::size_t>& kept_rows,
                              const std::vector<std::uint8_t>& row_corrupted,
                              const std::vector<int>& group_of_row);  // 0 = majority, 1 = minority

/// Sorts values of one attribute by frequency and fills the majority group
/// until it covers more than `coverage` of the rows; the rest is minority.
/// Returns per-row group assignment (0 majority, 1 minority).
std::vector<int> majority_minority_split(const Dataset& ds, std::size_t attr,
                                         double coverage = 0.8);

}  // namespace picket
