#include "moesim/engine.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <exception>
#include <mutex>
#include <ostream>
#include <thread>

namespace moesim {

LayerCounters& LayerCounters::operator+=(const LayerCounters& o) {
    measured_accesses += o.measured_accesses;
    cache_hits += o.cache_hits;
    prediction_opportunities += o.prediction_opportunities;
    prediction_hits += o.prediction_hits;
    predicted_experts += o.predicted_experts;
    prefetch_inserts += o.prefetch_inserts;
    exact_set_matches += o.exact_set_matches;
    steps += o.steps;
    uncovered_steps += o.uncovered_steps;
    return *this;
}

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

SimReport& SimReport::operator+=(const SimReport& o) {
    if (layers.size() < o.layers.size()) layers.resize(o.layers.size());
    for (std::size_t l = 0; l < o.layers.size(); ++l) layers[l] += o.layers[l];
    total += o.total;
    return *this;
}

PromptResult replay_prompt(const PromptTrace& trace, const Predictor& predictor, const ReplayConfig& config) {
    const ModelShape& shape = config.shape;
    shape.validate();
    if (trace.records.empty() || trace.records.size() % static_cast<std::size_t>(shape.num_layers) != 0)
        throw ConfigError("replay: prompt " + std::to_string(trace.prompt_id) + " does not match the model shape");

    ExpertCache cache(shape, config.cache.resolve(shape), config.cache.prefetch_budget);
    Eam partial(shape);
    DecayedHistory history(shape, predictor.history_decay());
    const auto session = predictor.begin_prompt();

    PromptResult result{trace.prompt_id, SimReport(static_cast<std::size_t>(shape.num_layers)), {}};
    const std::size_t tokens = trace.num_tokens(shape);
    std::vector<ExpertKey> keys;
    for (std::size_t t = 0; t < tokens; ++t) {
        const bool measured = t >= config.warmup_tokens;
        for (LayerId l = 0; l < shape.num_layers; ++l) {
            const TokenRecord& rec = trace.at(t, l, shape);
            if (rec.token_index != t || rec.layer_id != l || rec.prompt_id != trace.prompt_id)
                throw ConfigError("replay: prompt " + std::to_string(trace.prompt_id) + " is not canonical");
            validate_record(rec, shape);
            cache.begin_step();

            if (!measured) {
                for (ExpertId e : rec.expert_ids) cache.touch({l, e});
            } else {
                const PredictionContext ctx{trace.prompt_id, t, l, &partial, &history, config.cache.prefetch_budget};
                PredictionSet predicted = session->predict(ctx);
                std::sort(predicted.begin(), predicted.end());
                predicted.erase(std::unique(predicted.begin(), predicted.end()), predicted.end());
                for (ExpertId e : predicted)
                    if (e < 0 || e >= shape.num_experts)
                        throw RangeError("predictor returned expert " + std::to_string(e) + " out of range");

                keys.clear();
                for (ExpertId e : predicted) keys.push_back({l, e});
                LayerCounters& c = result.report.layers[static_cast<std::size_t>(l)];
                const std::optional<std::size_t> limit =
                    predictor.ignores_budget() ? std::optional<std::size_t>(keys.size()) : std::nullopt;
                c.prefetch_inserts += cache.prefetch(keys, limit);
                c.predicted_experts += predicted.size();
                c.steps += 1;
                if (!predictor.covers(ctx)) c.uncovered_steps += 1;

                for (ExpertId e : rec.expert_ids) {
                    c.prediction_opportunities += 1;
                    if (std::binary_search(predicted.begin(), predicted.end(), e)) c.prediction_hits += 1;
                    c.measured_accesses += 1;
                    if (cache.touch({l, e}) == Access::hit) c.cache_hits += 1;
                }
                if (predicted == rec.expert_ids) c.exact_set_matches += 1;
                if (config.record_steps)
                    result.steps.push_back({StepKey{trace.prompt_id, t, l}, std::move(predicted), rec.expert_ids});
            }
            partial.accumulate(rec);
            history.observe(l, rec.expert_ids);
            session->observe(l, rec.expert_ids);
        }
    }
    for (const auto& c : result.report.layers) result.report.total += c;
    return result;
}

RunResult replay_all(const std::vector<PromptTrace>& traces, const Predictor& predictor, const ReplayConfig& config,
                     std::size_t jobs) {
    RunResult run;
    run.prompts.resize(traces.size());
    const std::size_t workers = std::max<std::size_t>(1, std::min(jobs, traces.size()));

    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= traces.size()) return;
            try {
                run.prompts[i] = replay_prompt(traces[i], predictor, config);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next = traces.size();
                return;
            }
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    if (error) std::rethrow_exception(error);

    run.aggregate = SimReport(static_cast<std::size_t>(config.shape.num_layers));
    for (const auto& p : run.prompts) run.aggregate += p.report;
    return run;
}

SweepReport sweep(const std::vector<PromptTrace>& traces, const Predictor& predictor,
                  const std::vector<double>& capacity_fractions, const ReplayConfig& config, std::size_t jobs) {
    if (traces.empty()) throw ConfigError("sweep: no traces");
    if (capacity_fractions.empty()) throw ConfigError("sweep: no capacities");
    SweepReport out;
    out.predictor = to_string(predictor.kind());
    for (double f : capacity_fractions) {
        ReplayConfig point = config;
        point.cache = CacheConfig::fraction(f, config.cache.prefetch_budget);
        point.record_steps = false;
        RunResult run = replay_all(traces, predictor, point, jobs);
        out.points.push_back({f, point.cache.resolve(config.shape), std::move(run.aggregate)});
    }
    return out;
}

namespace {

std::string format_double(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace

std::string format_rate(std::optional<double> r) { return r ? format_double(*r) : "n/a"; }

void write_sweep_csv(std::ostream& out, const SweepReport& report, bool header) {
    if (header) out << "capacity_fraction,predictor,cache_hit_rate,prediction_hit_rate,measured_accesses\n";
    for (const auto& p : report.points)
        out << format_double(p.capacity_fraction) << ',' << report.predictor << ','
            << format_rate(p.report.cache_hit_rate()) << ',' << format_rate(p.report.prediction_hit_rate()) << ','
            << p.report.total.measured_accesses << '\n';
}

void write_sweep_layers_csv(std::ostream& out, const SweepReport& report, bool header) {
    if (header)
        out << "capacity_fraction,predictor,layer_id,measured_accesses,cache_hits,cache_hit_rate,"
               "prediction_opportunities,prediction_hits,prediction_hit_rate\n";
    for (const auto& p : report.points)
        for (std::size_t l = 0; l < p.report.layers.size(); ++l) {
            const auto& c = p.report.layers[l];
            out << format_double(p.capacity_fraction) << ',' << report.predictor << ',' << l << ','
                << c.measured_accesses << ',' << c.cache_hits << ',' << format_rate(ratio(c.cache_hits, c.measured_accesses))
                << ',' << c.prediction_opportunities << ',' << c.prediction_hits << ','
                << format_rate(ratio(c.prediction_hits, c.prediction_opportunities)) << '\n';
        }
}

void write_run_csv(std::ostream& out, const RunResult& run) {
    out << "prompt_id,measured_accesses,cache_hits,cache_hit_rate,prediction_opportunities,prediction_hits,"
           "prediction_hit_rate,steps,exact_set_matches,uncovered_steps\n";
    auto row = [&](const std::string& id, const LayerCounters& c) {
        out << id << ',' << c.measured_accesses << ',' << c.cache_hits << ','
            << format_rate(ratio(c.cache_hits, c.measured_accesses)) << ',' << c.prediction_opportunities << ','
            << c.prediction_hits << ',' << format_rate(ratio(c.prediction_hits, c.prediction_opportunities)) << ','
            << c.steps << ',' << c.exact_set_matches << ',' << c.uncovered_steps << '\n';
    };
    for (const auto& p : run.prompts) row(std::to_string(p.prompt_id), p.report.total);
    row("all", run.aggregate.total);
}

void write_layers_csv(std::ostream& out, const SimReport& report) {
    out << "layer_id,measured_accesses,cache_hits,cache_hit_rate,prediction_opportunities,prediction_hits,"
           "prediction_hit_rate,agreement\n";
    for (std::size_t l = 0; l < report.layers.size(); ++l) {
        const auto& c = report.layers[l];
        out << l << ',' << c.measured_accesses << ',' << c.cache_hits << ','
            << format_rate(ratio(c.cache_hits, c.measured_accesses)) << ',' << c.prediction_opportunities << ','
            << c.prediction_hits << ',' << format_rate(ratio(c.prediction_hits, c.prediction_opportunities)) << ','
            << format_rate(ratio(c.exact_set_matches, c.steps)) << '\n';
    }
}

}  // namespace moesim
