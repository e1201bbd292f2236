#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "moesim/eamc.hpp"
#include "moesim/engine.hpp"
#include "moesim/learner.hpp"
#include "moesim/metrics.hpp"
#include "moesim/predictors.hpp"
#include "moesim/trace_io.hpp"

namespace py = pybind11;
using namespace moesim;

namespace {

py::dict report_dict(const SimReport& r) {
    py::dict d;
    d["measured_accesses"] = r.total.measured_accesses;
    d["cache_hits"] = r.total.cache_hits;
    d["prediction_opportunities"] = r.total.prediction_opportunities;
    d["prediction_hits"] = r.total.prediction_hits;
    d["cache_hit_rate"] = r.cache_hit_rate();
    d["prediction_hit_rate"] = r.prediction_hit_rate();
    std::vector<std::optional<double>> per_layer;
    for (const auto& c : r.layers) per_layer.push_back(ratio(c.cache_hits, c.measured_accesses));
    d["layer_cache_hit_rate"] = per_layer;
    return d;
}

PredictionTable table_from(const std::map<std::tuple<std::uint64_t, std::uint64_t, int>, std::vector<int>>& m) {
    PredictionTable t;
    for (const auto& [k, v] : m) {
        auto experts = v;
        std::sort(experts.begin(), experts.end());
        t.emplace(StepKey{std::get<0>(k), std::get<1>(k), std::get<2>(k)}, std::move(experts));
    }
    return t;
}

// Owns the predictor and everything it was built from.
struct PyPredictor {
    std::shared_ptr<Predictor> impl;
    std::string name() const { return to_string(impl->kind()); }
};

ReplayConfig replay_config(const ModelShape& shape, std::optional<double> capacity, std::optional<std::size_t> entries,
                           std::optional<std::size_t> budget, std::size_t warmup) {
    ReplayConfig cfg;
    cfg.shape = shape;
    cfg.warmup_tokens = warmup;
    const std::size_t m = budget.value_or(static_cast<std::size_t>(shape.top_k));
    cfg.cache = entries ? CacheConfig::entries(*entries, m) : CacheConfig::fraction(capacity.value_or(0.1), m);
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "MoE expert-prefetching simulator core";
    m.attr("__version__") = "0.1.0";

    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
    py::register_exception<RangeError>(m, "RangeError", PyExc_IndexError);

    py::class_<ModelShape>(m, "ModelShape")
        .def(py::init([](int layers, int experts, int top_k) {
                 ModelShape s{layers, experts, top_k};
                 s.validate();
                 return s;
             }),
             py::arg("num_layers") = 27, py::arg("num_experts") = 64, py::arg("top_k") = 6)
        .def_readonly("num_layers", &ModelShape::num_layers)
        .def_readonly("num_experts", &ModelShape::num_experts)
        .def_readonly("top_k", &ModelShape::top_k)
        .def("__repr__", [](const ModelShape& s) {
            return "ModelShape(" + std::to_string(s.num_layers) + ", " + std::to_string(s.num_experts) + ", " +
                   std::to_string(s.top_k) + ")";
        });

    py::class_<TokenRecord>(m, "TokenRecord")
        .def_readonly("prompt_id", &TokenRecord::prompt_id)
        .def_readonly("token_index", &TokenRecord::token_index)
        .def_readonly("layer_id", &TokenRecord::layer_id)
        .def_readonly("expert_ids", &TokenRecord::expert_ids)
        .def_readonly("token_id", &TokenRecord::token_id)
        .def_readonly("embedding", &TokenRecord::embedding);

    py::class_<PromptTrace>(m, "PromptTrace")
        .def_readonly("prompt_id", &PromptTrace::prompt_id)
        .def_readonly("records", &PromptTrace::records)
        .def("__len__", [](const PromptTrace& t) { return t.records.size(); });

    m.def(
        "generate_synthetic",
        [](int num_prompts, int tokens, const ModelShape& shape, int hot, double skew, std::uint64_t seed,
           std::uint64_t first_prompt_id, int num_topics) {
            GeneratorConfig c;
            c.num_prompts = num_prompts;
            c.tokens_per_prompt = tokens;
            c.shape = shape;
            c.hot_set_size = hot;
            c.skew = skew;
            c.seed = seed;
            c.first_prompt_id = first_prompt_id;
            c.num_topics = num_topics;
            return generate_synthetic(c);
        },
        py::arg("num_prompts"), py::arg("tokens_per_prompt"), py::arg("shape") = ModelShape{},
        py::arg("hot_set_size") = 8, py::arg("skew") = 0.9, py::arg("seed") = 7, py::arg("first_prompt_id") = 0,
        py::arg("num_topics") = 0);

    m.def("parse_trace_csv", py::overload_cast<const std::string&, const ModelShape&>(&parse_trace_csv),
          py::arg("text"), py::arg("shape") = ModelShape{});
    m.def("write_trace_csv", py::overload_cast<const std::vector<PromptTrace>&>(&write_trace_csv), py::arg("traces"));
    m.def(
        "parse_predictions",
        [](const std::string& text, const ModelShape& shape) {
            std::map<std::tuple<std::uint64_t, std::uint64_t, int>, std::vector<int>> out;
            for (const auto& [k, v] : parse_predictions(text, shape))
                out.emplace(std::make_tuple(k.prompt_id, k.token_index, k.layer_id), v);
            return out;
        },
        py::arg("text"), py::arg("shape") = ModelShape{});

    py::class_<Eam>(m, "Eam")
        .def(py::init<const ModelShape&>(), py::arg("shape"))
        .def("accumulate", [](Eam& e, int layer, const std::vector<int>& experts) { e.accumulate(layer, experts); })
        .def("count", &Eam::count)
        .def("row", [](const Eam& e, int layer) {
            auto r = e.row(layer);
            return std::vector<std::uint32_t>(r.begin(), r.end());
        })
        .def_property_readonly("shape", &Eam::shape);
    m.def("prompt_eam", &prompt_eam, py::arg("trace"), py::arg("shape"));
    m.def("normalize", &normalize, py::arg("eam"), py::arg("binarize") = false);
    m.def(
        "cosine_similarity",
        [](const std::vector<double>& a, const std::vector<double>& b) { return cosine_similarity(a, b); },
        py::arg("a"), py::arg("b"));

    m.def(
        "kmeans",
        [](const std::vector<SketchVector>& points, std::size_t k, std::uint64_t seed, std::size_t max_iters) {
            const auto r = kmeans(points, k, seed, max_iters);
            py::dict d;
            d["centroids"] = r.centroids;
            d["assignments"] = r.assignments;
            d["objective"] = r.objective;
            d["objective_history"] = r.objective_history;
            d["k"] = r.k;
            return d;
        },
        py::arg("points"), py::arg("k"), py::arg("seed") = 0, py::arg("max_iters") = 100);

    py::class_<Eamc>(m, "Eamc")
        .def_readonly("sketches", &Eamc::sketches)
        .def_readonly("shape", &Eamc::shape)
        .def("__len__", [](const Eamc& e) { return e.sketches.size(); })
        .def("to_json", [](const Eamc& e) {
            std::ostringstream o;
            save_eamc(o, e);
            return o.str();
        })
        .def_static("from_json", [](const std::string& s) {
            std::istringstream in(s);
            return load_eamc(in);
        });
    m.def(
        "build_eamc",
        [](const std::vector<PromptTrace>& traces, const ModelShape& shape, const std::string& mode,
           std::size_t capacity, bool binarize, std::uint64_t seed, std::size_t max_iters) {
            std::vector<Eam> reams;
            for (const auto& t : traces) reams.push_back(prompt_eam(t, shape));
            EamcConfig c;
            c.mode = eamc_mode_from_string(mode);
            c.capacity = capacity;
            c.binarize = binarize;
            c.seed = seed;
            c.kmeans_max_iters = max_iters;
            return build_eamc(reams, c);
        },
        py::arg("traces"), py::arg("shape") = ModelShape{}, py::arg("mode") = "kmeans", py::arg("capacity") = 32,
        py::arg("binarize") = false, py::arg("seed") = 0, py::arg("max_iters") = 100);
    m.def(
        "match_nearest",
        [](const Eamc& e, const std::vector<double>& q) {
            const auto r = match_nearest(e, q);
            return std::make_pair(r.index, r.similarity);
        },
        py::arg("eamc"), py::arg("query"));

    py::class_<LinearModel>(m, "LinearModel")
        .def_readonly("epoch_losses", &LinearModel::epoch_losses)
        .def_readonly("trained", &LinearModel::trained)
        .def("to_json", [](const LinearModel& lm) {
            std::ostringstream o;
            save_model(o, lm);
            return o.str();
        })
        .def_static("from_json", [](const std::string& s) {
            std::istringstream in(s);
            return load_model(in);
        });
    m.def(
        "train",
        [](const std::vector<PromptTrace>& traces, const ModelShape& shape, double lr, int epochs, double decay,
           std::uint64_t seed) {
            py::gil_scoped_release release;
            return train(traces, shape, LearnerParams{lr, epochs, decay, seed});
        },
        py::arg("traces"), py::arg("shape") = ModelShape{}, py::arg("learning_rate") = 0.05, py::arg("epochs") = 10,
        py::arg("decay") = 0.9, py::arg("seed") = 0);

    m.def(
        "position_accuracy",
        [](const std::vector<ExpertSet>& p, const std::vector<ExpertSet>& t) { return position_accuracy(p, t); },
        py::arg("predicted"), py::arg("truth"));
    m.def(
        "macro_f1",
        [](const std::vector<ExpertSet>& p, const std::vector<ExpertSet>& t, int e, bool all) {
            return macro_f1(p, t, e, all);
        },
        py::arg("predicted"), py::arg("truth"), py::arg("num_experts"), py::arg("include_absent") = false);

    py::class_<PyPredictor>(m, "Predictor").def_property_readonly("name", &PyPredictor::name);
    m.def(
        "make_predictor",
        [](const std::string& kind, const ModelShape& shape, std::optional<std::vector<PromptTrace>> ground_truth,
           std::optional<std::vector<PromptTrace>> training_traces, std::optional<Eamc> eamc,
           std::optional<std::map<std::tuple<std::uint64_t, std::uint64_t, int>, std::vector<int>>> predictions,
           std::optional<LinearModel> model, bool threshold) {
            PredictorState s;
            s.shape = shape;
            if (ground_truth) s.ground_truth = std::move(*ground_truth);
            if (training_traces) s.training_traces = std::move(*training_traces);
            s.eamc = std::move(eamc);
            if (predictions) s.table = table_from(*predictions);
            s.model = std::move(model);
            s.threshold_mode = threshold;
            return PyPredictor{make_predictor(predictor_kind_from_string(kind), s)};
        },
        py::arg("kind"), py::arg("shape") = ModelShape{}, py::arg("ground_truth") = py::none(),
        py::arg("training_traces") = py::none(), py::arg("eamc") = py::none(), py::arg("predictions") = py::none(),
        py::arg("model") = py::none(), py::arg("threshold") = false);

    m.def(
        "simulate",
        [](const std::vector<PromptTrace>& traces, const PyPredictor& p, const ModelShape& shape,
           std::optional<double> capacity, std::optional<std::size_t> entries, std::optional<std::size_t> budget,
           std::size_t warmup, std::size_t jobs) {
            const auto cfg = replay_config(shape, capacity, entries, budget, warmup);
            RunResult run;
            {
                py::gil_scoped_release release;
                run = replay_all(traces, *p.impl, cfg, jobs);
            }
            return report_dict(run.aggregate);
        },
        py::arg("traces"), py::arg("predictor"), py::arg("shape") = ModelShape{}, py::arg("capacity") = py::none(),
        py::arg("capacity_entries") = py::none(), py::arg("budget") = py::none(), py::arg("warmup") = 8,
        py::arg("jobs") = 1);

    m.def(
        "sweep",
        [](const std::vector<PromptTrace>& traces, const PyPredictor& p, const std::vector<double>& capacities,
           const ModelShape& shape, std::optional<std::size_t> budget, std::size_t warmup, std::size_t jobs) {
            const auto cfg = replay_config(shape, capacities.empty() ? 0.1 : capacities.front(), std::nullopt, budget, warmup);
            SweepReport rep;
            {
                py::gil_scoped_release release;
                rep = sweep(traces, *p.impl, capacities, cfg, jobs);
            }
            py::list rows;
            for (const auto& pt : rep.points) {
                py::dict d = report_dict(pt.report);
                d["capacity_fraction"] = pt.capacity_fraction;
                d["capacity_entries"] = pt.capacity_entries;
                d["predictor"] = rep.predictor;
                rows.append(d);
            }
            return rows;
        },
        py::arg("traces"), py::arg("predictor"), py::arg("capacities"), py::arg("shape") = ModelShape{},
        py::arg("budget") = py::none(), py::arg("warmup") = 8, py::arg("jobs") = 1);
}
