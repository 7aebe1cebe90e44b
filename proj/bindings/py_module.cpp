#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "picket/attack.hpp"
#include "picket/checkpoint.hpp"
#include "picket/experiment.hpp"
#include "picket/filter.hpp"
#include "picket/metrics.hpp"
#include "picket/noise.hpp"

namespace py = pybind11;
using namespace picket;

namespace {

Cell cell_from_py(const py::handle& value) {
    if (value.is_none()) return Cell::none();
    if (py::isinstance<py::str>(value)) return Cell::str(value.cast<std::string>());
    return Cell::numeric(value.cast<double>());
}

py::object cell_to_py(const Cell& cell, const AttributeSpec& spec) {
    if (cell.missing) return py::none();
    if (spec.kind == AttrKind::Numeric) return py::float_(cell.num);
    return py::str(cell.text);
}

std::vector<Cell> row_from_py(const py::sequence& seq) {
    std::vector<Cell> row;
    row.reserve(seq.size());
    for (const auto& value : seq) row.push_back(cell_from_py(value));
    return row;
}

NoiseSpec noise_from_kwargs(const std::string& kind, const std::string& level, double row_fraction,
                            std::uint64_t seed) {
    NoiseSpec spec =
        NoiseSpec::preset(noise_level_from_string(level), noise_kind_from_string(kind));
    spec.row_fraction = row_fraction;
    spec.seed = seed;
    return spec;
}

std::vector<double> net_scores(PicketNet& net, const Dataset& ds) {
    LossRecord rec = net.train(ds);
    auto scores = aggregate_losses(rec);
    std::vector<double> out(scores.size());
    for (const auto& s : scores) out[s.row] = s.aggregated;
    return out;
}

}  // namespace

PYBIND11_MODULE(_picket, m) {
    m.doc() = "Self-supervised guard for tabular machine learning pipelines";

    py::class_<Dataset>(m, "Dataset")
        .def_static("from_csv_text",
                    [](const std::string& csv, const std::string& schema) {
                        return dataset_from_csv_text(csv, schema);
                    },
                    py::arg("csv"), py::arg("schema"))
        .def_static("from_csv",
                    [](const std::string& csv_path, const std::string& schema_path) {
                        Dataset ds = load_csv(csv_path, schema_path);
                        build_text_vocab(ds);
                        return ds;
                    },
                    py::arg("csv_path"), py::arg("schema_path"))
        .def("to_csv_text", &dataset_to_csv_text)
        .def_property_readonly("n", &Dataset::n)
        .def_property_readonly("t", &Dataset::t)
        .def_property_readonly("labels", [](const Dataset& ds) { return ds.labels; })
        .def_property_readonly("columns",
                               [](const Dataset& ds) {
                                   std::vector<std::string> names;
                                   for (const auto& s : ds.schema) names.push_back(s.name);
                                   return names;
                               })
        .def_property_readonly("corrupted_rows",
                               [](const Dataset& ds) {
                                   std::vector<int> out;
                                   for (auto flag : ds.ledger.rows) out.push_back(flag ? 1 : 0);
                                   return out;
                               })
        .def("row",
             [](const Dataset& ds, std::size_t i) {
                 py::list out;
                 for (std::size_t a = 0; a < ds.t(); ++a)
                     out.append(cell_to_py(ds.rows.at(i)[a], ds.schema[a]));
                 return out;
             },
             py::arg("index"));

    m.def("synth_gaussian_linear", &synth_gaussian_linear, py::arg("t"), py::arg("r"),
          py::arg("n"), py::arg("seed"));
    m.def("synth_labeled_task", &synth_labeled_task, py::arg("t"), py::arg("r"), py::arg("n"),
          py::arg("seed"));

    m.def("corrupt",
          [](const Dataset& ds, const std::string& kind, const std::string& level,
             double row_fraction, std::uint64_t seed) {
              return corrupt(ds, noise_from_kwargs(kind, level, row_fraction, seed)).data;
          },
          py::arg("dataset"), py::arg("kind") = "random", py::arg("level") = "medium",
          py::arg("row_fraction") = 0.2, py::arg("seed") = 0);

    py::class_<PicketNet, std::shared_ptr<PicketNet>>(m, "PicketNet")
        .def(py::init([](const Dataset& ds, const std::string& config_json, std::uint64_t seed) {
                 PicketNetConfig cfg = config_json.empty()
                                           ? PicketNetConfig::numeric_small()
                                           : PicketNetConfig::from_json(config_json);
                 return std::make_shared<PicketNet>(ds, cfg, seed);
             }),
             py::arg("dataset"), py::arg("config_json") = "", py::arg("seed") = 1)
        .def("train_scores", &net_scores, py::arg("dataset"),
             "Runs the full training schedule and returns per-row aggregated losses.")
        .def("loss_vector",
             [](const PicketNet& net, const py::sequence& row, std::uint64_t eval_seed) {
                 return net.loss_vector(row_from_py(row), eval_seed);
             },
             py::arg("row"), py::arg("eval_seed") = 1)
        .def("save", [](const PicketNet& net, const std::string& path) { save_picketnet(net, path); })
        .def_static("load", &load_picketnet)
        .def_property_readonly("config_json",
                               [](const PicketNet& net) { return net.config().to_json(); });

    m.def("thresholds_by_fpr",
          [](const std::vector<double>& scores, double fpr) {
              std::vector<OutlierScore> s(scores.size());
              for (std::size_t i = 0; i < scores.size(); ++i) {
                  s[i].row = i;
                  s[i].aggregated = scores[i];
              }
              ThresholdPair t = thresholds_by_fpr(s, fpr);
              return py::make_tuple(t.low, t.high);
          },
          py::arg("scores"), py::arg("fpr"));

    m.def("kept_indices",
          [](const std::vector<double>& scores, double low, double high) {
              std::vector<std::size_t> kept;
              for (std::size_t i = 0; i < scores.size(); ++i)
                  if (scores[i] > low && scores[i] < high) kept.push_back(i);
              return kept;
          },
          py::arg("scores"), py::arg("low"), py::arg("high"));

    py::class_<DownstreamModel>(m, "DownstreamModel")
        .def_static("fit",
                    [](const Dataset& train, const std::string& family, std::uint64_t seed) {
                        DownstreamSpec spec;
                        spec.family = downstream_family_from_string(family);
                        return DownstreamModel::fit(spec, train, seed);
                    },
                    py::arg("train"), py::arg("family") = "lr", py::arg("seed") = 1)
        .def("predict",
             [](const DownstreamModel& model, const py::sequence& row) {
                 return model.predict(row_from_py(row));
             },
             py::arg("row"))
        .def("accuracy", &DownstreamModel::accuracy, py::arg("test"))
        .def("save",
             [](const DownstreamModel& model, const std::string& path) {
                 save_downstream(model, path);
             })
        .def_static("load", &load_downstream);

    py::class_<GuardBundle>(m, "GuardBundle")
        .def_static(
            "build",
            [](const Dataset& train, const std::string& family, const std::string& config_json,
               std::uint64_t seed) {
                GuardBundle bundle;
                DownstreamSpec spec;
                spec.family = downstream_family_from_string(family);
                bundle.model = DownstreamModel::fit(spec, train, seed);
                PicketNetConfig cfg = config_json.empty() ? PicketNetConfig::numeric_small()
                                                          : PicketNetConfig::from_json(config_json);
                bundle.net = std::make_shared<PicketNet>(train, cfg, seed);
                bundle.net->train(train);
                bundle.eval_seed = seed;
                auto sets =
                    build_detector_sets(train, bundle.model, *bundle.net, seed, seed);
                bundle.detectors = fit_detectors(sets);
                return bundle;
            },
            py::arg("train"), py::arg("family") = "lr", py::arg("config_json") = "",
            py::arg("seed") = 1)
        .def("guard",
             [](const GuardBundle& bundle, const py::sequence& row) {
                 GuardDecision d = guard(bundle, row_from_py(row));
                 py::dict out;
                 out["prediction"] = d.prediction;
                 out["flagged"] = d.flagged;
                 out["score"] = d.score;
                 out["losses"] = d.losses;
                 return out;
             },
             py::arg("row"))
        .def_readwrite("threshold", &GuardBundle::threshold)
        .def("save", [](const GuardBundle& bundle, const std::string& path) {
            save_bundle(bundle, path);
        })
        .def_static("load", &load_bundle);

    m.def("attack_row",
          [](const DownstreamModel& model, const py::sequence& row, int label,
             const std::string& kind, double epsilon, double step, int iterations) {
              AttackSpec spec;
              spec.kind = attack_kind_from_string(kind);
              spec.epsilon = epsilon;
              spec.step = step;
              spec.iterations = iterations;
              std::vector<Cell> adv = attack_row(model, row_from_py(row), label, spec);
              py::list out;
              for (const auto& cell : adv) out.append(py::float_(cell.num));
              return out;
          },
          py::arg("model"), py::arg("row"), py::arg("label"), py::arg("kind") = "pgd",
          py::arg("epsilon") = 0.2, py::arg("step") = 0.1, py::arg("iterations") = 100);

    m.def("auroc", &auroc, py::arg("scores"), py::arg("labels"));
    m.def("f1_score", &f1_score, py::arg("predictions"), py::arg("labels"),
          py::arg("positive") = 1);

    m.def("run_experiment",
          [](const std::string& kind, const std::string& spec_json) {
              ExperimentSpec spec = ExperimentSpec::from_json(spec_json);
              Report report;
              if (kind == "outlier")
                  report = run_outlier_experiment(spec);
              else if (kind == "downstream")
                  report = run_downstream_experiment(spec);
              else if (kind == "victim")
                  report = run_victim_experiment(spec);
              else
                  throw std::invalid_argument("unknown experiment kind: " + kind);
              return report.to_json();
          },
          py::arg("kind"), py::arg("spec_json"));
}
