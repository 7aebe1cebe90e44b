#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "picket/data.hpp"
#include "picket/downstream.hpp"
#include "picket/picketnet.hpp"

namespace picket {

/// One corrupted candidate for detector training. `victim` is set when the
/// downstream model flips on the corrupted tuple.
struct MixtureCandidate {
    std::vector<Cell> row;
    std::size_t source = 0;
    int label = 0;
    int prediction = 0;
    std::string generator;
    bool victim = false;
};

/// Candidates from the artificial noise mixture: three random levels
/// (0.4, 4), (0.25, 2), (0.15, 1.5), a dense low level (1.0, 0.25), and FGSM
/// at eps 0.1 when the schema is numeric. Sources are drawn with replacement
/// from the correctly classified rows.
std::vector<MixtureCandidate> artificial_mixture(const Dataset& clean,
                                                 const DownstreamModel& model,
                                                 std::size_t attempts, std::uint64_t seed);

/// Labeled per-class training set: features are the downstream encoding
/// extended with the reconstruction-loss vector; target 1 marks victims.
struct DetectorSet {
    int cls = 0;
    std::vector<std::vector<double>> features;
    std::vector<int> victim;
    std::size_t clean_count = 0, ns_count = 0, vs_count = 0;
    std::size_t loss_dim = 0;  // trailing reconstruction-loss block width
};

std::vector<DetectorSet> build_detector_sets(const Dataset& clean, const DownstreamModel& model,
                                             const PicketNet& net, std::uint64_t eval_seed,
                                             std::uint64_t seed, std::size_t max_per_class = 400);

struct VictimDetector {
    int cls = -1;  // -1 for the unified variant
    Tensor w;      // (2, dim)
    Tensor b;      // (1, 2)

    double probability(const std::vector<double>& features) const;
};

struct VictimDetectors {
    std::vector<VictimDetector> per_class;
    VictimDetector unified;
    VictimDetector score_based;          // 1-d logistic on the aggregated loss
    std::vector<double> loss_median;     // per attribute, from the training pools
    std::size_t feature_dim = 0;         // encoder dim + T

    const VictimDetector& for_class(int cls) const;
    double aggregated_score(const std::vector<double>& losses) const;
};

VictimDetectors fit_detectors(const std::vector<DetectorSet>& sets, double regularization = 1.0);

enum class DetectorVariant { PerClass, Unified, ScoreBased };

struct GuardBundle {
    std::shared_ptr<PicketNet> net;
    DownstreamModel model;
    VictimDetectors detectors;
    std::uint64_t eval_seed = 1;
    double threshold = 0.5;
    DetectorVariant variant = DetectorVariant::PerClass;
};

struct GuardDecision {
    int prediction = 0;
    bool flagged = false;
    double score = 0.0;
    std::vector<double> losses;
};

/// Online step: downstream prediction, loss vector, detector probability.
/// Flagged only above the threshold (strict inequality).
GuardDecision guard(const GuardBundle& bundle, const std::vector<Cell>& row);

std::vector<double> detector_features(const GuardBundle& bundle, const std::vector<Cell>& row,
                                      std::vector<double>* losses_out = nullptr);

}  // namespace picket
