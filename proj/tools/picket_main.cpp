#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "picket/checkpoint.hpp"
#include "picket/experiment.hpp"
#include "picket/filter.hpp"
#include "picket/metrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace picket;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot read " + path);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

void write_file(const std::string& path, const std::string& text) {
    if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
    std::ofstream out(path);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + path);
}

Dataset load_pair(const std::string& csv, const std::string& schema) {
    Dataset ds = load_csv(csv, schema);
    build_text_vocab(ds);
    return ds;
}

std::string schema_sidecar(const Dataset& ds) {
    json j;
    json cols = json::array();
    for (const auto& s : ds.schema)
        cols.push_back({{"name", s.name}, {"kind", to_string(s.kind)}, {"label", false}});
    if (!ds.label_column.empty())
        cols.push_back({{"name", ds.label_column}, {"kind", "categorical"}, {"label", true}});
    j["columns"] = cols;
    return j.dump(2);
}

std::vector<OutlierScore> load_scores(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot read " + path);
    std::vector<OutlierScore> scores;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string a, b;
        std::getline(row, a, ',');
        std::getline(row, b, ',');
        OutlierScore s;
        s.row = std::stoul(a);
        s.aggregated = std::stod(b);
        scores.push_back(s);
    }
    return scores;
}

std::string scores_csv(const std::vector<OutlierScore>& scores) {
    std::ostringstream out;
    out.precision(17);
    out << "row,score\n";
    for (const auto& s : scores) out << s.row << "," << s.aggregated << "\n";
    return out.str();
}

Cell cell_from_json(const json& v, const AttributeSpec& spec) {
    if (v.is_null()) return Cell::none();
    if (spec.kind == AttrKind::Numeric) {
        if (v.is_number()) return Cell::numeric(v.get<double>());
        if (v.is_string() && v.get<std::string>().empty()) return Cell::none();
        return Cell::numeric(std::stod(v.get<std::string>()));
    }
    std::string s = v.is_string() ? v.get<std::string>() : v.dump();
    return s.empty() ? Cell::none() : Cell::str(s);
}

int run(int argc, char** argv) {
    CLI::App app{"Guarding tabular machine learning pipelines against corrupted data"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    std::string config_path, out_path;
    app.add_option("--seed", seed, "global random seed")->capture_default_str();
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--out", out_path, "output file or directory");

    std::string csv_path, schema_path;
    auto add_data = [&](CLI::App* cmd) {
        cmd->add_option("--csv", csv_path, "input CSV")->required();
        cmd->add_option("--schema", schema_path, "schema sidecar JSON")->required();
    };

    // synth
    auto* synth = app.add_subcommand("synth", "draw a synthetic numeric dataset");
    std::size_t synth_t = 10, synth_r = 5, synth_n = 2000;
    bool labeled = false;
    synth->add_option("--t", synth_t, "attributes");
    synth->add_option("--r", synth_r, "latent dimension");
    synth->add_option("--n", synth_n, "rows");
    synth->add_flag("--labeled", labeled, "attach a binary label");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "validate a CSV and emit canonical outputs");
    add_data(ingest);

    // corrupt
    auto* corrupt_cmd = app.add_subcommand("corrupt", "apply a noise model");
    add_data(corrupt_cmd);
    std::string noise_kind = "random", noise_level;
    NoiseSpec noise;
    corrupt_cmd->add_option("--kind", noise_kind, "random|systematic|realistic");
    corrupt_cmd->add_option("--level", noise_level, "low|med|high preset");
    corrupt_cmd->add_option("--beta", noise.beta, "cell fraction per corrupted row");
    corrupt_cmd->add_option("--sigma1", noise.sigma1, "random numeric scale");
    corrupt_cmd->add_option("--sigma2", noise.sigma2, "systematic numeric shift");
    corrupt_cmd->add_option("--row-fraction", noise.row_fraction, "fraction of corrupted rows");

    // train
    auto* train = app.add_subcommand("train", "train the reconstruction network");
    add_data(train);

    // filter
    auto* filter = app.add_subcommand("filter", "remove suspicious training rows");
    add_data(filter);
    std::string scores_path, thresholds_arg, validation_path;
    double fpr = -1.0, top_fraction = -1.0;
    bool histogram = false;
    filter->add_option("--scores", scores_path, "outlier score CSV from train")->required();
    filter->add_option("--thresholds", thresholds_arg, "fixed lo,hi pair");
    filter->add_option("--fpr", fpr, "false positive rate on a clean validation set");
    filter->add_option("--validation", validation_path, "clean validation score CSV");
    filter->add_flag("--histogram", histogram, "histogram threshold heuristic");
    filter->add_option("--top-fraction", top_fraction, "remove this fraction of highest scores");

    // fit-downstream
    auto* fitcmd = app.add_subcommand("fit-downstream", "train a downstream classifier");
    add_data(fitcmd);
    std::string family_arg = "lr";
    fitcmd->add_option("--family", family_arg, "lr|svm|nn");

    // attack
    auto* attack_cmd = app.add_subcommand("attack", "generate adversarial or poison rows");
    add_data(attack_cmd);
    std::string attack_kind = "pgd", model_path, validation_csv;
    AttackSpec aspec;
    std::size_t budget = 0;
    attack_cmd->add_option("--kind", attack_kind, "fgsm|pgd|poison");
    attack_cmd->add_option("--model", model_path, "downstream model checkpoint");
    attack_cmd->add_option("--epsilon", aspec.epsilon, "infinity-norm bound");
    attack_cmd->add_option("--step", aspec.step, "step size");
    attack_cmd->add_option("--iterations", aspec.iterations, "iterations");
    attack_cmd->add_option("--validation", validation_csv, "validation CSV for poisoning");
    attack_cmd->add_option("--budget", budget, "poison row count");

    // detect-train
    auto* detect = app.add_subcommand("detect-train", "build the guard bundle");
    add_data(detect);
    std::string net_path, down_path;
    detect->add_option("--net", net_path, "reconstruction network checkpoint")->required();
    detect->add_option("--model", down_path, "downstream model checkpoint")->required();

    // guard
    auto* guard_cmd = app.add_subcommand("guard", "online guard loop over JSONL on stdin");
    std::string bundle_path;
    double threshold = 0.5;
    guard_cmd->add_option("--bundle", bundle_path, "guard bundle checkpoint")->required();
    guard_cmd->add_option("--threshold", threshold, "flag threshold")->capture_default_str();

    // eval
    auto* eval = app.add_subcommand("eval", "run an experiment and write a report");
    std::string experiment = "outlier";
    eval->add_option("--experiment", experiment, "outlier|downstream|victim");

    // lets the global --seed / --config / --out appear after the subcommand
    for (CLI::App* sub : app.get_subcommands([](const CLI::App*) { return true; }))
        sub->fallthrough();

    CLI11_PARSE(app, argc, argv);

    auto out_or = [&](const std::string& fallback) {
        return out_path.empty() ? fallback : out_path;
    };

    if (*synth) {
        Dataset ds = labeled ? synth_labeled_task(synth_t, synth_r, synth_n, seed)
                             : synth_gaussian_linear(synth_t, synth_r, synth_n, seed);
        std::string dir = out_or("synth_out");
        fs::create_directories(dir);
        save_csv(ds, dir + "/data.csv");
        write_file(dir + "/schema.json", schema_sidecar(ds));
        std::cout << "wrote " << ds.n() << " rows to " << dir << "\n";
        return 0;
    }
    if (*ingest) {
        Dataset ds = load_pair(csv_path, schema_path);
        ds.check();
        std::string dir = out_or("ingest_out");
        fs::create_directories(dir);
        save_csv(ds, dir + "/data.csv");
        write_file(dir + "/schema.json", schema_sidecar(ds));
        json summary{{"rows", ds.n()}, {"attributes", ds.t()}, {"labeled", ds.labeled()}};
        write_file(dir + "/summary.json", summary.dump(2));
        std::cout << summary.dump() << "\n";
        return 0;
    }
    if (*corrupt_cmd) {
        Dataset ds = load_pair(csv_path, schema_path);
        NoiseSpec spec = noise;
        if (!noise_level.empty())
            spec = NoiseSpec::preset(noise_level_from_string(noise_level),
                                     noise_kind_from_string(noise_kind));
        spec.kind = noise_kind_from_string(noise_kind);
        if (corrupt_cmd->count("--beta")) spec.beta = noise.beta;
        if (corrupt_cmd->count("--sigma1")) spec.sigma1 = noise.sigma1;
        if (corrupt_cmd->count("--sigma2")) spec.sigma2 = noise.sigma2;
        if (corrupt_cmd->count("--row-fraction")) spec.row_fraction = noise.row_fraction;
        spec.seed = seed;
        CorruptResult result = picket::corrupt(ds, spec);
        std::string dir = out_or("corrupt_out");
        fs::create_directories(dir);
        save_csv(result.data, dir + "/data.csv");
        save_ledger(result.data.ledger, dir + "/ledger.csv");
        std::cout << "corrupted dataset written to " << dir << "\n";
        return 0;
    }
    if (*train) {
        Dataset ds = load_pair(csv_path, schema_path);
        PicketNetConfig cfg = config_path.empty() ? PicketNetConfig::numeric_preset()
                                                  : PicketNetConfig::from_json(read_file(config_path));
        PicketNet net(ds, cfg, seed);
        LossRecord rec = net.train(ds);
        std::string dir = out_or("train_out");
        fs::create_directories(dir);
        save_picketnet(net, dir + "/net.pckt");
        write_file(dir + "/scores.csv", scores_csv(aggregate_losses(rec)));
        std::cout << "trained network and scores written to " << dir << "\n";
        return 0;
    }
    if (*filter) {
        Dataset ds = load_pair(csv_path, schema_path);
        std::vector<OutlierScore> scores = load_scores(scores_path);
        FilterResult result;
        ThresholdPair pair;
        if (top_fraction >= 0.0) {
            result = filter_top_fraction(ds, scores, top_fraction);
            pair.method = ThresholdMethod::TopFraction;
        } else {
            if (!thresholds_arg.empty()) {
                auto comma = thresholds_arg.find(',');
                if (comma == std::string::npos)
                    throw std::invalid_argument("--thresholds expects lo,hi");
                pair.low = std::stod(thresholds_arg.substr(0, comma));
                pair.high = std::stod(thresholds_arg.substr(comma + 1));
                pair.method = ThresholdMethod::Fixed;
            } else if (fpr >= 0.0) {
                if (validation_path.empty())
                    throw std::invalid_argument("--fpr needs --validation scores");
                pair = thresholds_by_fpr(load_scores(validation_path), fpr);
            } else if (histogram) {
                pair = thresholds_by_histogram(scores);
            } else {
                throw std::invalid_argument(
                    "choose --thresholds, --fpr, --histogram or --top-fraction");
            }
            result = filter_by_thresholds(ds, scores, pair);
        }
        std::string dir = out_or("filter_out");
        fs::create_directories(dir);
        save_csv(result.kept, dir + "/kept.csv");
        std::ostringstream kept, removed;
        for (std::size_t i : result.kept_index) kept << i << "\n";
        for (std::size_t i : result.removed_index) removed << i << "\n";
        write_file(dir + "/kept_index.csv", kept.str());
        write_file(dir + "/removed_index.csv", removed.str());
        json summary{{"kept", result.kept_index.size()},
                     {"removed", result.removed_index.size()},
                     {"low", pair.low},
                     {"high", pair.high}};
        write_file(dir + "/summary.json", summary.dump(2));
        std::cout << summary.dump() << "\n";
        return 0;
    }
    if (*fitcmd) {
        Dataset ds = load_pair(csv_path, schema_path);
        DownstreamSpec spec;
        spec.family = downstream_family_from_string(family_arg);
        DownstreamModel model = DownstreamModel::fit(spec, ds, seed);
        std::string path = out_or("model.pckt");
        save_downstream(model, path);
        std::cout << "model written to " << path << " (training accuracy "
                  << model.accuracy(ds) << ")\n";
        return 0;
    }
    if (*attack_cmd) {
        Dataset ds = load_pair(csv_path, schema_path);
        aspec.kind = attack_kind_from_string(attack_kind);
        std::string dir = out_or("attack_out");
        fs::create_directories(dir);
        if (aspec.kind == AttackKind::TruncatedPoison) {
            if (validation_csv.empty())
                throw std::invalid_argument("poisoning needs --validation");
            Dataset validation = load_pair(validation_csv, schema_path);
            PoisonSpec pspec;
            pspec.budget = budget;
            pspec.seed = seed;
            Dataset poison = truncated_poison(ds, validation, pspec);
            save_csv(poison, dir + "/poison.csv");
        } else {
            if (model_path.empty()) throw std::invalid_argument("attacks need --model");
            DownstreamModel model = load_downstream(model_path);
            Dataset adv = ds;
            for (std::size_t i = 0; i < ds.n(); ++i)
                adv.rows[i] = attack_row(model, ds.rows[i], ds.labels.at(i), aspec);
            save_csv(adv, dir + "/adversarial.csv");
        }
        std::cout << "attack output written to " << dir << "\n";
        return 0;
    }
    if (*detect) {
        Dataset ds = load_pair(csv_path, schema_path);
        GuardBundle bundle;
        bundle.net = load_picketnet(net_path);
        bundle.model = load_downstream(down_path);
        bundle.eval_seed = seed + 1;
        auto sets = build_detector_sets(ds, bundle.model, *bundle.net, bundle.eval_seed, seed);
        bundle.detectors = fit_detectors(sets);
        std::string path = out_or("bundle.pckt");
        save_bundle(bundle, path);
        std::cout << "guard bundle written to " << path << "\n";
        return 0;
    }
    if (*guard_cmd) {
        GuardBundle bundle = load_bundle(bundle_path);
        bundle.threshold = threshold;
        const auto& schema = bundle.net->encoder().schema();
        std::string line;
        while (std::getline(std::cin, line)) {
            if (line.empty()) continue;
            json q = json::parse(line);
            const json& values = q.at("values");
            std::vector<Cell> row(schema.size());
            for (std::size_t a = 0; a < schema.size(); ++a) {
                auto it = values.find(schema[a].name);
                row[a] = it == values.end() ? Cell::none() : cell_from_json(*it, schema[a]);
            }
            GuardDecision d = guard(bundle, row);
            json out{{"prediction", d.prediction},
                     {"flagged", d.flagged},
                     {"score", d.score},
                     {"losses", d.losses}};
            std::cout << out.dump() << "\n";
        }
        return 0;
    }
    if (*eval) {
        ExperimentSpec spec = config_path.empty()
                                  ? ExperimentSpec{}
                                  : ExperimentSpec::from_json(read_file(config_path));
        if (seed != 0) spec.seeds = {seed};
        Report report;
        if (experiment == "outlier")
            report = run_outlier_experiment(spec);
        else if (experiment == "downstream")
            report = run_downstream_experiment(spec);
        else if (experiment == "victim")
            report = run_victim_experiment(spec);
        else
            throw std::invalid_argument("unknown experiment: " + experiment);
        report.write(out_or("eval_out"));
        std::cout << report.to_json(true) << "\n";
        return 0;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
