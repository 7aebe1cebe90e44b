#include "picket/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>

namespace picket {

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auroc: size mismatch");
    std::size_t npos = 0, nneg = 0;
    for (int y : labels) (y ? npos : nneg)++;
    if (npos == 0 || nneg == 0) throw std::invalid_argument("auroc: needs both labels");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));  // 1-based
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]]) rank_sum_pos += avg_rank;
        i = j;
    }
    double u = rank_sum_pos - static_cast<double>(npos) * (static_cast<double>(npos) + 1.0) / 2.0;
    return u / (static_cast<double>(npos) * static_cast<double>(nneg));
}

double f1_score(const std::vector<int>& predictions, const std::vector<int>& labels,
                int positive) {
    if (predictions.size() != labels.size()) throw std::invalid_argument("f1: size mismatch");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        bool p = predictions[i] == positive, y = labels[i] == positive;
        if (p && y) ++tp;
        else if (p) ++fp;
        else if (y) ++fn;
    }
    if (tp == 0) return 0.0;
    double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    return 2.0 * precision * recall / (precision + recall);
}

double opportunity_difference(const std::vector<std::size_t>& kept_rows,
                              const std::vector<std::uint8_t>& row_corrupted,
                              const std::vector<int>& group_of_row) {
    if (row_corrupted.size() != group_of_row.size())
        throw std::invalid_argument("opportunity_difference: size mismatch");
    std::vector<bool> kept(row_corrupted.size(), false);
    for (std::size_t i : kept_rows) kept.at(i) = true;
    double clean[2] = {0, 0}, kept_clean[2] = {0, 0};
    for (std::size_t i = 0; i < row_corrupted.size(); ++i) {
        if (row_corrupted[i]) continue;
        int g = group_of_row[i];
        clean[g] += 1.0;
        if (kept[i]) kept_clean[g] += 1.0;
    }
    if (clean[0] == 0.0 || clean[1] == 0.0)
        throw std::invalid_argument("opportunity_difference: empty clean group");
    return kept_clean[1] / clean[1] - kept_clean[0] / clean[0];
}

std::vector<int> majority_minority_split(const Dataset& ds, std::size_t attr, double coverage) {
    if (attr >= ds.t()) throw std::out_of_range("attribute index out of range");
    std::map<std::string, std::size_t> freq;
    for (const auto& row : ds.rows) {
        const Cell& c = row[attr];
        std::string key = c.missing ? std::string("\x01missing")
                          : ds.schema[attr].kind == AttrKind::Numeric
                              ? std::to_string(c.num)
                              : c.text;
        freq[key]++;
    }
    std::vector<std::pair<std::string, std::size_t>> by_freq(freq.begin(), freq.end());
    std::stable_sort(by_freq.begin(), by_freq.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::size_t covered = 0;
    std::size_t need = static_cast<std::size_t>(coverage * static_cast<double>(ds.n()));
    std::map<std::string, int> group;
    for (const auto& [val, cnt] : by_freq) {
        group[val] = covered > need ? 1 : 0;
        covered += cnt;
    }
    std::vector<int> out(ds.n());
    for (std::size_t i = 0; i < ds.n(); ++i) {
        const Cell& c = ds.rows[i][attr];
        std::string key = c.missing ? std::string("\x01missing")
                          : ds.schema[attr].kind == AttrKind::Numeric
                              ? std::to_string(c.num)
                              : c.text;
        out[i] = group[key];
    }
    return out;
}

}  // namespace picket
