#include "picket/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "picket/filter.hpp"
#include "picket/metrics.hpp"

namespace picket {

using nlohmann::json;

std::string ExperimentSpec::to_json() const {
    json j;
    j["csv_path"] = csv_path;
    j["schema_path"] = schema_path;
    j["synthetic"] = synthetic;
    j["synth_t"] = synth_t;
    j["synth_r"] = synth_r;
    j["synth_n"] = synth_n;
    j["noise"] = {{"kind", to_string(noise.kind)},
                  {"beta", noise.beta},
                  {"sigma1", noise.sigma1},
                  {"sigma2", noise.sigma2},
                  {"row_fraction", noise.row_fraction}};
    j["attack_queries"] = attack_queries;
    j["attack"] = {{"kind", to_string(attack.kind)},
                   {"epsilon", attack.epsilon},
                   {"step", attack.step},
                   {"iterations", attack.iterations}};
    j["poison_fraction"] = poison_fraction;
    j["family"] = to_string(family);
    j["train_fraction"] = train_fraction;
    j["filter_fraction"] = filter_fraction;
    j["net"] = json::parse(net.to_json());
    j["max_queries"] = max_queries;
    j["seeds"] = seeds;
    return j.dump();
}

ExperimentSpec ExperimentSpec::from_json(const std::string& text) {
    json j = json::parse(text);
    ExperimentSpec s;
    if (j.contains("csv_path")) s.csv_path = j["csv_path"].get<std::string>();
    if (j.contains("schema_path")) s.schema_path = j["schema_path"].get<std::string>();
    if (j.contains("synthetic")) s.synthetic = j["synthetic"].get<bool>();
    if (j.contains("synth_t")) s.synth_t = j["synth_t"].get<std::size_t>();
    if (j.contains("synth_r")) s.synth_r = j["synth_r"].get<std::size_t>();
    if (j.contains("synth_n")) s.synth_n = j["synth_n"].get<std::size_t>();
    if (j.contains("noise")) {
        const json& n = j["noise"];
        if (n.contains("level"))
            s.noise = NoiseSpec::preset(noise_level_from_string(n["level"].get<std::string>()));
        if (n.contains("kind")) s.noise.kind = noise_kind_from_string(n["kind"].get<std::string>());
        if (n.contains("beta")) s.noise.beta = n["beta"].get<double>();
        if (n.contains("sigma1")) s.noise.sigma1 = n["sigma1"].get<double>();
        if (n.contains("sigma2")) s.noise.sigma2 = n["sigma2"].get<double>();
        if (n.contains("row_fraction")) s.noise.row_fraction = n["row_fraction"].get<double>();
    }
    if (j.contains("attack_queries")) s.attack_queries = j["attack_queries"].get<bool>();
    if (j.contains("attack")) {
        const json& a = j["attack"];
        if (a.contains("kind")) s.attack.kind = attack_kind_from_string(a["kind"].get<std::string>());
        if (a.contains("epsilon")) s.attack.epsilon = a["epsilon"].get<double>();
        if (a.contains("step")) s.attack.step = a["step"].get<double>();
        if (a.contains("iterations")) s.attack.iterations = a["iterations"].get<int>();
    }
    if (j.contains("poison_fraction")) s.poison_fraction = j["poison_fraction"].get<double>();
    if (j.contains("family")) s.family = downstream_family_from_string(j["family"].get<std::string>());
    if (j.contains("train_fraction")) s.train_fraction = j["train_fraction"].get<double>();
    if (j.contains("filter_fraction")) s.filter_fraction = j["filter_fraction"].get<double>();
    if (j.contains("net")) s.net = PicketNetConfig::from_json(j["net"].dump());
    if (j.contains("max_queries")) s.max_queries = j["max_queries"].get<std::size_t>();
    if (j.contains("seeds")) s.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (s.seeds.empty()) throw std::invalid_argument("experiment needs at least one seed");
    for (std::size_t i = 0; i < s.seeds.size(); ++i)
        for (std::size_t k = i + 1; k < s.seeds.size(); ++k)
            if (s.seeds[i] == s.seeds[k]) throw std::invalid_argument("seeds must be distinct");
    return s;
}

void Report::finalize() {
    mean.clear();
    stderr_.clear();
    if (per_seed.empty()) return;
    for (const auto& [name, v] : per_seed[0]) {
        (void)v;
        double m = 0.0;
        for (const auto& entry : per_seed) m += entry.at(name);
        m /= static_cast<double>(per_seed.size());
        double var = 0.0;
        for (const auto& entry : per_seed) {
            double d = entry.at(name) - m;
            var += d * d;
        }
        mean[name] = m;
        stderr_[name] = per_seed.size() > 1
                            ? std::sqrt(var / static_cast<double>(per_seed.size() - 1)) /
                                  std::sqrt(static_cast<double>(per_seed.size()))
                            : 0.0;
    }
}

std::string Report::to_json(bool with_runtime) const {
    json j;
    j["experiment"] = experiment;
    j["config"] = json::parse(config);
    j["seeds"] = seeds;
    json rows = json::array();
    for (const auto& entry : per_seed) {
        json r;
        for (const auto& [name, v] : entry) r[name] = v;
        rows.push_back(std::move(r));
    }
    j["per_seed"] = rows;
    j["mean"] = mean;
    j["stderr"] = stderr_;
    if (with_runtime) j["runtime_seconds"] = runtime_seconds;
    return j.dump(2);
}

std::string Report::per_seed_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "seed";
    if (!per_seed.empty())
        for (const auto& [name, v] : per_seed[0]) {
            (void)v;
            out << "," << name;
        }
    out << "\n";
    for (std::size_t i = 0; i < per_seed.size(); ++i) {
        out << seeds[i];
        for (const auto& [name, v] : per_seed[i]) {
            (void)name;
            out << "," << v;
        }
        out << "\n";
    }
    return out.str();
}

void Report::write(const std::string& out_dir) const {
    std::filesystem::create_directories(out_dir);
    std::ofstream jf(out_dir + "/report.json");
    jf << to_json() << "\n";
    std::ofstream cf(out_dir + "/per_seed.csv");
    cf << per_seed_csv();
    if (!jf || !cf) throw std::runtime_error("cannot write report to " + out_dir);
}

Dataset experiment_dataset(const ExperimentSpec& spec, std::uint64_t seed, bool labeled) {
    if (!spec.synthetic) {
        Dataset ds = load_csv(spec.csv_path, spec.schema_path);
        build_text_vocab(ds);
        return ds;
    }
    return labeled ? synth_labeled_task(spec.synth_t, spec.synth_r, spec.synth_n, seed)
                   : synth_gaussian_linear(spec.synth_t, spec.synth_r, spec.synth_n, seed);
}

namespace {

struct Stopwatch {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

double outlier_auroc(const Dataset& corrupted, const PicketNetConfig& cfg, std::uint64_t seed) {
    PicketNet net(corrupted, cfg, seed);
    LossRecord rec = net.train(corrupted);
    std::vector<OutlierScore> scores = aggregate_losses(rec);
    std::vector<double> s(scores.size());
    std::vector<int> y(scores.size());
    for (const auto& sc : scores) {
        s[sc.row] = sc.aggregated;
        y[sc.row] = corrupted.ledger.rows[sc.row] ? 1 : 0;
    }
    return auroc(s, y);
}

}  // namespace

Report run_outlier_experiment(const ExperimentSpec& spec) {
    Stopwatch watch;
    Report report;
    report.experiment = "outlier";
    report.config = spec.to_json();
    report.seeds = spec.seeds;
    for (std::uint64_t seed : spec.seeds) {
        Dataset ds = experiment_dataset(spec, seed, false);
        NoiseSpec noise = spec.noise;
        noise.seed = seed;
        CorruptResult cor = corrupt(ds, noise);
        report.per_seed.push_back({{"auroc", outlier_auroc(cor.data, spec.net, seed)}});
    }
    report.finalize();
    report.runtime_seconds = watch.seconds();
    return report;
}

Report run_downstream_experiment(const ExperimentSpec& spec) {
    Stopwatch watch;
    Report report;
    report.experiment = "downstream";
    report.config = spec.to_json();
    report.seeds = spec.seeds;

    DownstreamSpec family;
    family.family = spec.family;
    if (spec.family == DownstreamFamily::MLP) family = DownstreamSpec::poisoning_mlp();

    for (std::uint64_t seed : spec.seeds) {
        Dataset ds = experiment_dataset(spec, seed, true);
        auto [train_all, test] = split_train_test(ds, spec.train_fraction, seed);
        auto [train, validation] = split_train_test(train_all, 0.8, seed ^ 0x9e3779b9);

        PoisonSpec pspec = spec.poison;
        pspec.budget = static_cast<std::size_t>(
            std::floor(spec.poison_fraction * static_cast<double>(train.n())));
        pspec.seed = seed;
        Dataset poison = truncated_poison(train, validation, pspec);
        Dataset poisoned = concat_rows(train, poison);

        std::map<std::string, double> metrics;
        metrics["cl"] = DownstreamModel::fit(family, train, seed).accuracy(test);
        metrics["nf"] = DownstreamModel::fit(family, poisoned, seed).accuracy(test);

        PicketNet net(poisoned, spec.net, seed);
        LossRecord rec = net.train(poisoned);
        double fraction =
            static_cast<double>(pspec.budget) / static_cast<double>(poisoned.n());
        FilterResult filtered =
            filter_top_fraction(poisoned, aggregate_losses(rec), fraction);
        metrics["picket"] = DownstreamModel::fit(family, filtered.kept, seed).accuracy(test);
        report.per_seed.push_back(std::move(metrics));
    }
    report.finalize();
    report.runtime_seconds = watch.seconds();
    return report;
}

namespace {

struct QueryOutcome {
    int true_class;
    bool is_victim;
    bool flagged;
};

double victim_f1(const std::vector<QueryOutcome>& outcomes) {
    std::vector<int> pred, truth;
    for (const auto& o : outcomes) {
        pred.push_back(o.flagged ? 1 : 0);
        truth.push_back(o.is_victim ? 1 : 0);
    }
    return f1_score(pred, truth);
}

double victim_macro_f1(const std::vector<QueryOutcome>& outcomes, int classes) {
    double sum = 0.0;
    for (int c = 0; c < classes; ++c) {
        std::vector<QueryOutcome> sub;
        for (const auto& o : outcomes)
            if (o.true_class == c) sub.push_back(o);
        sum += sub.empty() ? 0.0 : victim_f1(sub);
    }
    return sum / static_cast<double>(classes);
}

}  // namespace

Report run_victim_experiment(const ExperimentSpec& spec) {
    Stopwatch watch;
    Report report;
    report.experiment = "victim";
    report.config = spec.to_json();
    report.seeds = spec.seeds;

    DownstreamSpec family;
    family.family = spec.family;

    for (std::uint64_t seed : spec.seeds) {
        Dataset ds = experiment_dataset(spec, seed, true);
        auto [train, test] = split_train_test(ds, spec.train_fraction, seed);

        auto net = std::make_shared<PicketNet>(train, spec.net, seed);
        net->train(train);
        DownstreamModel model = DownstreamModel::fit(family, train, seed);

        GuardBundle bundle;
        bundle.net = net;
        bundle.model = model;
        bundle.eval_seed = seed;
        auto sets = build_detector_sets(train, model, *net, bundle.eval_seed, seed);
        bundle.detectors = fit_detectors(sets);

        // Query stream: each correctly classified test row contributes its
        // clean version and one corrupted version.
        std::vector<std::pair<std::vector<Cell>, int>> queries;  // (row, true class)
        std::vector<std::uint8_t> corrupted_flag;
        std::mt19937_64 rng(seed ^ 0xabcdef12345ULL);
        NoiseSpec noise = spec.noise;
        for (std::size_t i = 0; i < test.n(); ++i) {
            int y = test.labels[i];
            if (model.predict(test.rows[i]) != y) continue;
            queries.emplace_back(test.rows[i], y);
            corrupted_flag.push_back(0);
            std::vector<Cell> bad = test.rows[i];
            if (spec.attack_queries)
                bad = attack_row(model, bad, y, spec.attack);
            else
                corrupt_row(bad, test, noise, rng());
            queries.emplace_back(std::move(bad), y);
            corrupted_flag.push_back(1);
        }

        // Balanced evaluation pool: every victim plus an equal number of
        // correctly classified queries (clean and noisy-but-correct alternate
        // through the pair order), capped at max_queries in total.
        std::vector<std::size_t> vict, corr;
        for (std::size_t q = 0; q < queries.size(); ++q) {
            bool victim =
                corrupted_flag[q] && model.predict(queries[q].first) != queries[q].second;
            (victim ? vict : corr).push_back(q);
        }
        std::size_t half =
            std::min({vict.size(), corr.size(), std::max<std::size_t>(spec.max_queries / 2, 1)});
        std::vector<std::size_t> eval(vict.begin(),
                                      vict.begin() + static_cast<std::ptrdiff_t>(half));
        eval.insert(eval.end(), corr.begin(), corr.begin() + static_cast<std::ptrdiff_t>(half));

        std::map<std::string, double> metrics;
        const struct {
            const char* tag;
            DetectorVariant variant;
        } variants[] = {{"per_class", DetectorVariant::PerClass},
                        {"unified", DetectorVariant::Unified},
                        {"score_based", DetectorVariant::ScoreBased}};
        for (const auto& v : variants) {
            bundle.variant = v.variant;
            std::vector<QueryOutcome> outcomes;
            for (std::size_t q : eval) {
                GuardDecision d = guard(bundle, queries[q].first);
                bool victim = corrupted_flag[q] && d.prediction != queries[q].second;
                outcomes.push_back({queries[q].second, victim, d.flagged});
            }
            metrics[std::string("f1_") + v.tag] = victim_f1(outcomes);
            metrics[std::string("macro_f1_") + v.tag] =
                victim_macro_f1(outcomes, model.classes());
        }
        report.per_seed.push_back(std::move(metrics));
    }
    report.finalize();
    report.runtime_seconds = watch.seconds();
    return report;
}

}  // namespace picket
