#include "moesim/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "moesim/eamc.hpp"
#include "moesim/engine.hpp"
#include "moesim/learner.hpp"
#include "moesim/metrics.hpp"
#include "moesim/predictors.hpp"
#include "moesim/trace_io.hpp"

namespace moesim {

namespace {

constexpr const char* kFormatsHelp = R"(File formats:
  trace CSV        header prompt_id,token_index,layer_id,expert_ids,token_id,embedding
                   expert_ids and embedding are '|'-joined; embedding may be empty; LF endings.
  predictions      JSON lines {"prompt_id":P,"token_index":T,"layer_id":L,"experts":[...]}
  EAMC             JSON {"format":"moesim-eamc","shape":{..},"config":{..},"sketches":[[L*E floats],..]}
                   sketches are row-normalized rEAMs flattened layer-major.
  model            JSON {"format":"moesim-linear",..,"weights":[E rows of L+E+1]}
                   feature order: layer one-hot (L), decayed history (E), bias.
  simulate --out   prompt_id,measured_accesses,cache_hits,cache_hit_rate,prediction_opportunities,
                   prediction_hits,prediction_hit_rate,steps,exact_set_matches,uncovered_steps
  --per-layer-out  layer_id,measured_accesses,cache_hits,cache_hit_rate,prediction_opportunities,
                   prediction_hits,prediction_hit_rate,agreement
  sweep --out      capacity_fraction,predictor,cache_hit_rate,prediction_hit_rate,measured_accesses
  eval-predictions metric,value rows, then layer_id,position_accuracy,prediction_hit_rate
  report-activations  layer_id,expert_id,count  /  prompt_id,layer_id,tokens,distinct_experts
Rates with a zero denominator are written as n/a.
Exit status: 0 success, 1 runtime error, 2 usage or input error.)";

// Errors caused by what the user passed in (exit status 2).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeOpts {
    int layers = 27;
    int experts = 64;
    int topk = 6;
    ModelShape shape() const { return {layers, experts, topk}; }
};

void add_shape(CLI::App* cmd, ShapeOpts& s) {
    cmd->add_option("--layers", s.layers, "MoE layers L")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--experts", s.experts, "Experts per layer E")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--topk", s.topk, "Experts activated per token and layer")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open '" + path + "'");
    return in;
}

std::vector<PromptTrace> read_traces(const std::string& path, const ModelShape& shape) {
    auto in = open_in(path);
    try {
        return parse_trace_csv(in, shape);
    } catch (const ParseError& e) {
        throw UsageError(path + ": " + e.what());
    }
}

// Writes `fill` to `path`, or to `out` for "-". Files are written whole or not at all.
void emit(const std::string& path, std::ostream& out, const std::function<void(std::ostream&)>& fill) {
    if (path == "-") {
        fill(out);
        return;
    }
    std::ostringstream buf;
    fill(buf);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    f << buf.str();
    if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

struct PredictorOpts {
    std::string kind = "lru-only";
    std::string eamc_path;
    std::string model_path;
    std::string predictions_path;
    std::string train_traces_path;
    bool threshold = false;
    std::optional<std::size_t> budget;
    std::size_t warmup = 8;
    std::size_t jobs = 1;
};

void add_predictor(CLI::App* cmd, PredictorOpts& p) {
    cmd->add_option("--predictor", p.kind,
                    "oracle | lru-only | next-layer-all | global-frequency | eam-cosine | external | learned-linear")
        ->capture_default_str();
    cmd->add_option("--eamc", p.eamc_path, "EAMC JSON (eam-cosine)");
    cmd->add_option("--model", p.model_path, "Linear model JSON (learned-linear)");
    cmd->add_option("--predictions", p.predictions_path, "Predictions JSONL (external)");
    cmd->add_option("--train-traces", p.train_traces_path,
                    "Training workload CSV (global-frequency; eam-cosine builds a default EAMC from it when --eamc is absent)");
    cmd->add_flag("--threshold", p.threshold, "learned-linear: predict {e : sigmoid > 0.5}, capped at the budget");
    cmd->add_option("--budget", p.budget, "Prefetch budget m (default: top_k)")->check(CLI::PositiveNumber);
    cmd->add_option("--warmup", p.warmup, "Warm-up tokens per prompt")->capture_default_str();
    cmd->add_option("--jobs", p.jobs, "Parallel prompt replays")->capture_default_str()->check(CLI::PositiveNumber);
}

std::unique_ptr<Predictor> load_predictor(const PredictorOpts& p, const ModelShape& shape,
                                          const std::vector<PromptTrace>& traces) {
    PredictorKind kind;
    try {
        kind = predictor_kind_from_string(p.kind);
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    PredictorState state;
    state.shape = shape;
    state.threshold_mode = p.threshold;
    try {
        switch (kind) {
            case PredictorKind::oracle: state.ground_truth = traces; break;
            case PredictorKind::global_frequency:
                if (p.train_traces_path.empty()) throw UsageError("global-frequency needs --train-traces");
                state.training_traces = read_traces(p.train_traces_path, shape);
                break;
            case PredictorKind::eam_cosine:
                if (!p.eamc_path.empty()) {
                    auto in = open_in(p.eamc_path);
                    state.eamc = load_eamc(in);
                } else if (!p.train_traces_path.empty()) {
                    std::vector<Eam> reams;
                    for (const auto& t : read_traces(p.train_traces_path, shape)) reams.push_back(prompt_eam(t, shape));
                    state.eamc = build_eamc(reams, EamcConfig{});
                } else {
                    throw UsageError("eam-cosine needs --eamc or --train-traces");
                }
                break;
            case PredictorKind::external: {
                if (p.predictions_path.empty()) throw UsageError("external needs --predictions");
                auto in = open_in(p.predictions_path);
                state.table = parse_predictions(in, shape);
                break;
            }
            case PredictorKind::learned_linear: {
                if (p.model_path.empty()) throw UsageError("learned-linear needs --model");
                auto in = open_in(p.model_path);
                state.model = load_model(in);
                break;
            }
            default: break;
        }
        return make_predictor(kind, state);
    } catch (const ParseError& e) {
        throw UsageError(e.what());
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
}

std::vector<double> parse_capacities(const std::string& list) {
    std::vector<double> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const double v = std::stod(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            if (!(v > 0.0 && v <= 1.0)) throw std::invalid_argument(item);
            out.push_back(v);
        } catch (const std::exception&) {
            throw UsageError("--capacities: '" + item + "' is not a fraction in (0, 1]");
        }
    }
    if (out.empty()) throw UsageError("--capacities is empty");
    return out;
}

// Replaces `--config FILE` with the flags listed in FILE. Lines are `name=value`
// or `name` (boolean flag); blank lines and lines starting with '#' are skipped.
// Flags already present on the command line are not overridden.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
    std::vector<std::string> out;
    std::vector<std::string> files;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw UsageError("--config needs a file");
            files.push_back(args[++i]);
        } else if (args[i].rfind("--config=", 0) == 0) {
            files.push_back(args[i].substr(9));
        } else {
            out.push_back(args[i]);
        }
    }
    auto given = [&](const std::string& flag) {
        return std::any_of(out.begin(), out.end(),
                           [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
    };
    std::vector<std::string> extra;
    for (const auto& file : files) {
        auto in = open_in(file);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos || line[first] == '#') continue;
            const auto last = line.find_last_not_of(" \t\r");
            line = line.substr(first, last - first + 1);
            const auto eq = line.find('=');
            std::string key = line.substr(0, eq);
            key.erase(key.find_last_not_of(" \t") + 1);
            if (key.empty() || key.rfind("-", 0) == 0)
                throw UsageError(file + ": line " + std::to_string(line_no) + ": expected name=value");
            const std::string flag = "--" + key;
            if (given(flag)) continue;
            if (eq == std::string::npos) {
                extra.push_back(flag);
                continue;
            }
            std::string value = line.substr(eq + 1);
            value.erase(0, value.find_first_not_of(" \t"));
            if (value == "true") {
                extra.push_back(flag);
            } else if (value != "false") {
                extra.push_back(flag);
                extra.push_back(value);
            }
        }
    }
    // Subcommand flags must follow the subcommand name, so append at the end.
    out.insert(out.end(), extra.begin(), extra.end());
    return out;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Trace-driven simulator for MoE expert prefetching under a bounded GPU expert cache.", "moesim"};
    app.footer(kFormatsHelp);
    app.require_subcommand(1);

    ShapeOpts shape_opts;

    // gen-traces
    GeneratorConfig gen;
    std::string gen_out = "-";
    auto* gen_cmd = app.add_subcommand("gen-traces", "Generate seeded synthetic traces");
    add_shape(gen_cmd, shape_opts);
    gen_cmd->add_option("--prompts", gen.num_prompts, "Number of prompts")->capture_default_str()->check(CLI::PositiveNumber);
    gen_cmd->add_option("--tokens", gen.tokens_per_prompt, "Tokens per prompt")->capture_default_str()->check(CLI::PositiveNumber);
    gen_cmd->add_option("--hot", gen.hot_set_size, "Per-layer hot set size h")->capture_default_str();
    gen_cmd->add_option("--skew", gen.skew, "Probability p of drawing from the hot set")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    gen_cmd->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
    gen_cmd->add_option("--first-prompt", gen.first_prompt_id, "First prompt id")->capture_default_str();
    gen_cmd->add_option("--topics", gen.num_topics, "Shared hot-set tables (0 = independent per prompt)")->capture_default_str();
    gen_cmd->add_option("--out", gen_out, "Output trace CSV ('-' = stdout)")->capture_default_str();

    // build-eamc
    std::string eamc_traces, eamc_out = "-", eamc_mode = "kmeans";
    std::optional<std::size_t> eamc_capacity;
    EamcConfig eamc_cfg;
    auto* eamc_cmd = app.add_subcommand("build-eamc", "Build an EAM collection from training traces");
    add_shape(eamc_cmd, shape_opts);
    eamc_cmd->add_option("--traces", eamc_traces, "Training trace CSV")->required();
    eamc_cmd->add_option("--mode", eamc_mode, "recent | kmeans")->capture_default_str();
    eamc_cmd->add_option("--capacity", eamc_capacity, "Sketch count: k for kmeans (default 32), window for recent (default 100)")
        ->check(CLI::PositiveNumber);
    eamc_cmd->add_flag("--binarize", eamc_cfg.binarize, "Clamp counts to 0/1 before normalizing");
    eamc_cmd->add_option("--max-iters", eamc_cfg.kmeans_max_iters, "k-means iteration cap")->capture_default_str();
    eamc_cmd->add_option("--seed", eamc_cfg.seed, "k-means++ seed")->capture_default_str();
    eamc_cmd->add_option("--out", eamc_out, "Output EAMC JSON")->capture_default_str();

    // train-predictor
    std::string train_traces, train_out = "-";
    LearnerParams learner;
    auto* train_cmd = app.add_subcommand("train-predictor", "Train the linear multi-label predictor");
    add_shape(train_cmd, shape_opts);
    train_cmd->add_option("--traces", train_traces, "Training trace CSV")->required();
    train_cmd->add_option("--lr", learner.learning_rate, "SGD learning rate")->capture_default_str();
    train_cmd->add_option("--epochs", learner.epochs, "Epochs (early stop after 3 stalled epochs)")->capture_default_str();
    train_cmd->add_option("--decay", learner.decay, "History decay lambda in [0, 1)")->capture_default_str();
    train_cmd->add_option("--seed", learner.seed, "Init and shuffle seed")->capture_default_str();
    train_cmd->add_option("--out", train_out, "Output model JSON")->capture_default_str();

    // simulate
    std::string sim_traces, sim_out = "-", sim_layers_out, sim_pred_out;
    PredictorOpts sim_pred;
    std::optional<double> sim_capacity;
    std::optional<std::size_t> sim_entries;
    auto* sim_cmd = app.add_subcommand("simulate", "Replay traces under one predictor and cache size");
    add_shape(sim_cmd, shape_opts);
    add_predictor(sim_cmd, sim_pred);
    sim_cmd->add_option("--traces", sim_traces, "Test trace CSV")->required();
    auto* cap_opt = sim_cmd->add_option("--capacity", sim_capacity, "Cache size as a fraction of L*E")->check(CLI::Range(0.0, 1.0));
    sim_cmd->add_option("--capacity-entries", sim_entries, "Cache size in entries")->excludes(cap_opt)->check(CLI::PositiveNumber);
    sim_cmd->add_option("--out", sim_out, "Per-prompt report CSV")->capture_default_str();
    sim_cmd->add_option("--per-layer-out", sim_layers_out, "Per-layer report CSV");
    sim_cmd->add_option("--predictions-out", sim_pred_out, "Write every measured prediction as JSONL");

    // sweep
    std::string sweep_traces, sweep_out = "-", sweep_layers_out, sweep_caps = "0.05,0.1,0.25,0.5,1.0";
    PredictorOpts sweep_pred;
    auto* sweep_cmd = app.add_subcommand("sweep", "Cache hit rate over a list of capacities");
    add_shape(sweep_cmd, shape_opts);
    add_predictor(sweep_cmd, sweep_pred);
    sweep_cmd->add_option("--traces", sweep_traces, "Test trace CSV")->required();
    sweep_cmd->add_option("--capacities", sweep_caps, "Comma-separated fractions of L*E")->capture_default_str();
    sweep_cmd->add_option("--out", sweep_out, "Sweep CSV")->capture_default_str();
    sweep_cmd->add_option("--per-layer-out", sweep_layers_out, "Per-layer sweep CSV");

    // eval-predictions
    std::string eval_traces, eval_preds, eval_out = "-";
    std::uint64_t eval_min_token = 0;
    auto* eval_cmd = app.add_subcommand("eval-predictions", "Score a predictions file against a trace");
    add_shape(eval_cmd, shape_opts);
    eval_cmd->add_option("--traces", eval_traces, "Ground-truth trace CSV")->required();
    eval_cmd->add_option("--predictions", eval_preds, "Predictions JSONL")->required();
    eval_cmd->add_option("--min-token", eval_min_token, "Ignore tokens before this index")->capture_default_str();
    eval_cmd->add_option("--out", eval_out, "Metrics CSV")->capture_default_str();

    // report-activations
    std::string rep_traces, rep_out = "-", rep_prompts_out;
    auto* rep_cmd = app.add_subcommand("report-activations", "Activation counts per layer and distinct experts per prompt");
    add_shape(rep_cmd, shape_opts);
    rep_cmd->add_option("--traces", rep_traces, "Trace CSV")->required();
    rep_cmd->add_option("--out", rep_out, "Per-layer activation counts CSV")->capture_default_str();
    rep_cmd->add_option("--prompts-out", rep_prompts_out, "Per-prompt distinct-expert CSV");

    for (auto* sub : app.get_subcommands({}))
        sub->add_option("--config", "File of key=value lines, one flag per line (name without dashes); "
                                    "flags given on the command line win");

    std::vector<std::string> expanded;
    try {
        expanded = expand_config(args);
    } catch (const UsageError& e) {
        err << "moesim: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        std::vector<std::string> reversed(expanded.rbegin(), expanded.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "moesim: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        const ModelShape shape = shape_opts.shape();
        try {
            shape.validate();
        } catch (const ConfigError& e) {
            throw UsageError(e.what());
        }
        const auto budget_of = [&](const PredictorOpts& p) {
            return p.budget.value_or(static_cast<std::size_t>(shape.top_k));
        };

        if (*gen_cmd) {
            gen.shape = shape;
            try {
                gen.validate();
            } catch (const ConfigError& e) {
                throw UsageError(e.what());
            }
            const auto traces = generate_synthetic(gen);
            emit(gen_out, out, [&](std::ostream& o) { write_trace_csv(o, traces); });
        } else if (*eamc_cmd) {
            try {
                eamc_cfg.mode = eamc_mode_from_string(eamc_mode);
            } catch (const ConfigError& e) {
                throw UsageError(e.what());
            }
            eamc_cfg.capacity = eamc_capacity.value_or(eamc_cfg.mode == EamcMode::kmeans ? 32 : 100);
            std::vector<Eam> reams;
            for (const auto& t : read_traces(eamc_traces, shape)) reams.push_back(prompt_eam(t, shape));
            const Eamc eamc = build_eamc(reams, eamc_cfg);
            emit(eamc_out, out, [&](std::ostream& o) { save_eamc(o, eamc); });
        } else if (*train_cmd) {
            const auto traces = read_traces(train_traces, shape);
            LinearModel model;
            try {
                model = train(traces, shape, learner);
            } catch (const ConfigError& e) {
                throw UsageError(e.what());
            }
            emit(train_out, out, [&](std::ostream& o) { save_model(o, model); });
        } else if (*sim_cmd) {
            const auto traces = read_traces(sim_traces, shape);
            const auto predictor = load_predictor(sim_pred, shape, traces);
            ReplayConfig cfg;
            cfg.shape = shape;
            cfg.warmup_tokens = sim_pred.warmup;
            cfg.cache = sim_entries ? CacheConfig::entries(*sim_entries, budget_of(sim_pred))
                                    : CacheConfig::fraction(sim_capacity.value_or(0.1), budget_of(sim_pred));
            if (cfg.cache.capacity_fraction && *cfg.cache.capacity_fraction <= 0.0)
                throw UsageError("--capacity must be in (0, 1]");
            cfg.record_steps = !sim_pred_out.empty();
            const RunResult run = replay_all(traces, *predictor, cfg, sim_pred.jobs);
            emit(sim_out, out, [&](std::ostream& o) { write_run_csv(o, run); });
            if (!sim_layers_out.empty())
                emit(sim_layers_out, out, [&](std::ostream& o) { write_layers_csv(o, run.aggregate); });
            if (!sim_pred_out.empty()) {
                PredictionTable table;
                for (const auto& p : run.prompts)
                    for (const auto& s : p.steps) table.emplace(s.key, s.predicted);
                emit(sim_pred_out, out, [&](std::ostream& o) { write_predictions(o, table); });
            }
        } else if (*sweep_cmd) {
            const auto caps = parse_capacities(sweep_caps);
            const auto traces = read_traces(sweep_traces, shape);
            const auto predictor = load_predictor(sweep_pred, shape, traces);
            ReplayConfig cfg;
            cfg.shape = shape;
            cfg.warmup_tokens = sweep_pred.warmup;
            cfg.cache = CacheConfig::fraction(caps.front(), budget_of(sweep_pred));
            const SweepReport rep = sweep(traces, *predictor, caps, cfg, sweep_pred.jobs);
            emit(sweep_out, out, [&](std::ostream& o) { write_sweep_csv(o, rep); });
            if (!sweep_layers_out.empty())
                emit(sweep_layers_out, out, [&](std::ostream& o) { write_sweep_layers_csv(o, rep); });
        } else if (*eval_cmd) {
            const auto traces = read_traces(eval_traces, shape);
            auto in = open_in(eval_preds);
            PredictionTable table;
            try {
                table = parse_predictions(in, shape);
            } catch (const ParseError& e) {
                throw UsageError(eval_preds + ": " + e.what());
            }
            const auto ev = evaluate_predictions(table, traces, shape, eval_min_token);
            emit(eval_out, out, [&](std::ostream& o) { write_evaluation_csv(o, ev); });
        } else if (*rep_cmd) {
            const auto traces = read_traces(rep_traces, shape);
            const auto rep = activation_report(traces, shape);
            emit(rep_out, out, [&](std::ostream& o) { write_activation_counts_csv(o, rep); });
            if (!rep_prompts_out.empty())
                emit(rep_prompts_out, out, [&](std::ostream& o) { write_prompt_distinct_csv(o, rep); });
        }
        return kExitOk;
    } catch (const UsageError& e) {
        err << "moesim: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "moesim: " << e.what() << '\n';
        return kExitRuntime;
    }
}

}  // namespace moesim
