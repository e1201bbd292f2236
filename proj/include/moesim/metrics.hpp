#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "moesim/core.hpp"
#include "moesim/trace_io.hpp"

namespace moesim {

using ExpertSet = std::vector<ExpertId>;

// Fraction of positions whose predicted set equals the truth set exactly.
double position_accuracy(const std::vector<ExpertSet>& predicted, const std::vector<ExpertSet>& truth);

struct ExpertConfusion {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
};

std::vector<ExpertConfusion> confusion_counts(const std::vector<ExpertSet>& predicted,
                                              const std::vector<ExpertSet>& truth, int num_experts);

// F1 of one expert. precision = 0 when TP + FP = 0 and recall = 0 when TP + FN = 0;
// F1 = 0 when both are 0.
double expert_f1(const ExpertConfusion& c);

// Mean per-expert F1. Experts with TP = FP = FN = 0 are left out unless
// include_absent, in which case they count as F1 = 0 and all E experts are
// averaged. Returns 0 when no expert is included.
double macro_f1(const std::vector<ExpertSet>& predicted, const std::vector<ExpertSet>& truth, int num_experts,
                bool include_absent = false);

// Per-label (expert x position) accuracy of the multi-hot encoding.
double per_label_accuracy(const std::vector<ExpertSet>& predicted, const std::vector<ExpertSet>& truth,
                          int num_experts);

struct ActivationReport {
    ModelShape shape;
    std::vector<std::uint64_t> layer_counts;  // L x E, layer-major
    struct PromptRow {
        std::uint64_t prompt_id = 0;
        std::uint64_t tokens = 0;
        std::vector<int> distinct_per_layer;  // L entries
    };
    std::vector<PromptRow> prompts;
};

ActivationReport activation_report(const std::vector<PromptTrace>& traces, const ModelShape& shape);

// layer_id,expert_id,count
void write_activation_counts_csv(std::ostream& out, const ActivationReport& report);
// prompt_id,layer_id,tokens,distinct_experts
void write_prompt_distinct_csv(std::ostream& out, const ActivationReport& report);

struct PredictionEvaluation {
    std::uint64_t positions = 0;
    std::uint64_t covered = 0;
    double position_accuracy = 0.0;
    double macro_f1 = 0.0;
    double macro_f1_all_experts = 0.0;
    double per_label_accuracy = 0.0;
    std::optional<double> prediction_hit_rate;
    std::vector<double> layer_position_accuracy;
    std::vector<std::optional<double>> layer_prediction_hit_rate;
};

// Scores a prediction table against every trace record with token_index >=
// min_token. Missing predictions count as empty sets.
PredictionEvaluation evaluate_predictions(const PredictionTable& table, const std::vector<PromptTrace>& traces,
                                          const ModelShape& shape, std::uint64_t min_token = 0);

// metric,value rows followed by layer_id rows; see CLI help.
void write_evaluation_csv(std::ostream& out, const PredictionEvaluation& eval);

}  // namespace moesim
