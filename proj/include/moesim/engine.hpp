#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "moesim/cache.hpp"
#include "moesim/predictors.hpp"

namespace moesim {

struct LayerCounters {
    std::uint64_t measured_accesses = 0;
    std::uint64_t cache_hits = 0;
    std::uint64_t prediction_opportunities = 0;
    std::uint64_t prediction_hits = 0;
    std::uint64_t predicted_experts = 0;  // total size of predicted sets
    std::uint64_t prefetch_inserts = 0;
    std::uint64_t exact_set_matches = 0;  // steps whose predicted set equals the truth
    std::uint64_t steps = 0;
    std::uint64_t uncovered_steps = 0;  // predictor had no entry (external)

    LayerCounters& operator+=(const LayerCounters& o);
    bool operator==(const LayerCounters&) const = default;
};

// 0/0 is reported as nullopt ("n/a").
std::optional<double> ratio(std::uint64_t num, std::uint64_t den);

struct SimReport {
    std::vector<LayerCounters> layers;
    LayerCounters total;

    explicit SimReport(std::size_t num_layers = 0) : layers(num_layers) {}

    std::optional<double> cache_hit_rate() const { return ratio(total.cache_hits, total.measured_accesses); }
    std::optional<double> prediction_hit_rate() const {
        return ratio(total.prediction_hits, total.prediction_opportunities);
    }
    SimReport& operator+=(const SimReport& o);
    bool operator==(const SimReport&) const = default;
};

// One measured (token, layer) step, kept when ReplayConfig::record_steps is set.
struct StepRecord {
    StepKey key;
    PredictionSet predicted;
    std::vector<ExpertId> truth;
};

struct ReplayConfig {
    ModelShape shape;
    std::size_t warmup_tokens = 8;
    CacheConfig cache = CacheConfig::fraction(0.1);
    bool record_steps = false;
};

struct PromptResult {
    std::uint64_t prompt_id = 0;
    SimReport report;
    std::vector<StepRecord> steps;
};

// Replays one prompt token by token, layer by layer: warm-up tokens only touch
// the cache and feed the partial rEAM; every later step queries the predictor for
// the layer about to run, prefetches the result, then reveals and touches the
// ground truth.
PromptResult replay_prompt(const PromptTrace& trace, const Predictor& predictor, const ReplayConfig& config);

struct RunResult {
    std::vector<PromptResult> prompts;  // in input order
    SimReport aggregate;
};

// Replays every prompt with a private cache; `jobs` worker threads. Output does
// not depend on `jobs`.
RunResult replay_all(const std::vector<PromptTrace>& traces, const Predictor& predictor, const ReplayConfig& config,
                     std::size_t jobs = 1);

struct SweepPoint {
    double capacity_fraction = 0.0;
    std::size_t capacity_entries = 0;
    SimReport report;
};

struct SweepReport {
    std::string predictor;
    std::vector<SweepPoint> points;
};

SweepReport sweep(const std::vector<PromptTrace>& traces, const Predictor& predictor,
                  const std::vector<double>& capacity_fractions, const ReplayConfig& config, std::size_t jobs = 1);

// Shortest round-trip decimal, or "n/a".
std::string format_rate(std::optional<double> r);

// capacity_fraction,predictor,cache_hit_rate,prediction_hit_rate,measured_accesses
void write_sweep_csv(std::ostream& out, const SweepReport& report, bool header = true);
// capacity_fraction,predictor,layer_id,measured_accesses,cache_hits,cache_hit_rate,
// prediction_opportunities,prediction_hits,prediction_hit_rate
void write_sweep_layers_csv(std::ostream& out, const SweepReport& report, bool header = true);

// prompt_id,measured_accesses,cache_hits,cache_hit_rate,prediction_opportunities,
// prediction_hits,prediction_hit_rate,steps,exact_set_matches,uncovered_steps
// One row per prompt followed by an "all" row.
void write_run_csv(std::ostream& out, const RunResult& run);
// layer_id,measured_accesses,cache_hits,cache_hit_rate,prediction_opportunities,
// prediction_hits,prediction_hit_rate,agreement
void write_layers_csv(std::ostream& out, const SimReport& report);

}  // namespace moesim
