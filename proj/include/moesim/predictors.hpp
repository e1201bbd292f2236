#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "moesim/core.hpp"
#include "moesim/eamc.hpp"
#include "moesim/learner.hpp"
#include "moesim/trace_io.hpp"

namespace moesim {

struct PredictionContext {
    std::uint64_t prompt_id = 0;
    std::uint64_t token_index = 0;
    LayerId target_layer = 0;
    const Eam* partial_ream = nullptr;
    const DecayedHistory* history = nullptr;
    std::size_t budget = 6;
};

// Sorted, distinct expert ids of one layer.
using PredictionSet = std::vector<ExpertId>;

enum class PredictorKind { oracle, lru_only, next_layer_all, global_frequency, eam_cosine, external, learned_linear };

std::string to_string(PredictorKind kind);
// Accepts both "eam-cosine" and "eam_cosine" spellings.
PredictorKind predictor_kind_from_string(const std::string& name);

// Per-prompt predictor state owned by one replay. The default session forwards to
// Predictor::predict; eam-cosine keeps running dot products so a query costs
// O(sketches * L) instead of O(sketches * L * E).
class PredictorSession {
public:
    virtual ~PredictorSession() = default;
    virtual PredictionSet predict(const PredictionContext& ctx) = 0;
    // Called after each revealed (token, layer) step, warm-up included.
    virtual void observe(LayerId, std::span<const ExpertId>) {}
};

// Implementations are immutable after construction and safe to share across
// concurrent replays.
class Predictor {
public:
    virtual ~Predictor() = default;
    virtual PredictorKind kind() const = 0;
    virtual PredictionSet predict(const PredictionContext& ctx) const = 0;
    // Eager loaders prefetch their whole set regardless of the cache budget.
    virtual bool ignores_budget() const { return false; }
    // False when the predictor had nothing to say for this step (external: missing key).
    virtual bool covers(const PredictionContext&) const { return true; }
    // Decay the replay engine should use for ctx.history.
    virtual double history_decay() const { return 0.9; }
    virtual std::unique_ptr<PredictorSession> begin_prompt() const;
};

// State a predictor kind may need; unused members are ignored.
struct PredictorState {
    ModelShape shape;
    std::vector<PromptTrace> ground_truth;     // oracle
    std::vector<PromptTrace> training_traces;  // global_frequency
    std::optional<Eamc> eamc;                  // eam_cosine
    std::optional<PredictionTable> table;      // external
    std::optional<LinearModel> model;          // learned_linear
    bool threshold_mode = false;               // learned_linear: sigmoid > 0.5 instead of top-m
};

// Throws ConfigError if the state lacks what the kind needs.
std::unique_ptr<Predictor> make_predictor(PredictorKind kind, const PredictorState& state);

// Per-layer activation counts of a workload (layer-major, L x E).
std::vector<std::uint64_t> workload_counts(const std::vector<PromptTrace>& traces, const ModelShape& shape);

}  // namespace moesim
