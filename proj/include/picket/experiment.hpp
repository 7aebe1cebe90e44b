#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "picket/attack.hpp"
#include "picket/downstream.hpp"
#include "picket/noise.hpp"
#include "picket/picketnet.hpp"
#include "picket/victim.hpp"

namespace picket {

struct ExperimentSpec {
    // Data: either a CSV + schema pair or the synthetic generator.
    std::string csv_path, schema_path;
    bool synthetic = true;
    std::size_t synth_t = 10, synth_r = 5, synth_n = 2000;

    NoiseSpec noise = NoiseSpec::preset(NoiseLevel::Medium);

    // Victim experiments: test-time corruption, gradient attack optional.
    bool attack_queries = false;
    AttackSpec attack;

    // Downstream experiments.
    PoisonSpec poison;
    double poison_fraction = 0.2;  // of the training split
    DownstreamFamily family = DownstreamFamily::LR;
    double train_fraction = 0.7;
    double filter_fraction = 0.2;

    PicketNetConfig net = PicketNetConfig::numeric_small();
    std::size_t max_queries = 300;  // victim stream cap per seed

    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};

    std::string to_json() const;
    static ExperimentSpec from_json(const std::string& text);
};

struct Report {
    std::string experiment;
    std::string config;  // spec echo
    std::vector<std::uint64_t> seeds;
    std::vector<std::map<std::string, double>> per_seed;
    std::map<std::string, double> mean;
    std::map<std::string, double> stderr_;
    double runtime_seconds = 0.0;  // excluded from the canonical dump

    void finalize();  // fills mean / standard error from per_seed

    /// Canonical JSON; deterministic for a fixed spec and seeds. Runtime is
    /// only included on request so reports stay byte-stable across runs.
    std::string to_json(bool with_runtime = false) const;
    std::string per_seed_csv() const;
    void write(const std::string& out_dir) const;
};

Report run_outlier_experiment(const ExperimentSpec& spec);
Report run_downstream_experiment(const ExperimentSpec& spec);
Report run_victim_experiment(const ExperimentSpec& spec);

/// Loads the spec's dataset (CSV pair or synthetic draw for `seed`).
Dataset experiment_dataset(const ExperimentSpec& spec, std::uint64_t seed, bool labeled);

}  // namespace picket
