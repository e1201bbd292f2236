#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "moesim/core.hpp"

namespace moesim {

inline constexpr const char* kTraceHeader = "prompt_id,token_index,layer_id,expert_ids,token_id,embedding";

// Parses the trace CSV. Rows may arrive in any order; they are grouped by
// prompt_id (ascending) and each prompt is canonicalized. Errors carry the
// 1-based line number of the offending row.
std::vector<PromptTrace> parse_trace_csv(std::istream& in, const ModelShape& shape);
std::vector<PromptTrace> parse_trace_csv(const std::string& text, const ModelShape& shape);

// Canonical form: header, rows sorted by (prompt, token, layer), LF endings.
void write_trace_csv(std::ostream& out, const std::vector<PromptTrace>& traces);
std::string write_trace_csv(const std::vector<PromptTrace>& traces);

struct StepKey {
    std::uint64_t prompt_id = 0;
    std::uint64_t token_index = 0;
    LayerId layer_id = 0;

    auto operator<=>(const StepKey&) const = default;
};

// Predicted expert set (sorted) per step.
using PredictionTable = std::map<StepKey, std::vector<ExpertId>>;

// JSON lines: {"prompt_id":..,"token_index":..,"layer_id":..,"experts":[..]}.
// Blank lines are skipped.
PredictionTable parse_predictions(std::istream& in, const ModelShape& shape);
PredictionTable parse_predictions(const std::string& text, const ModelShape& shape);
void write_predictions(std::ostream& out, const PredictionTable& table);

// Table of the ground-truth sets of every record in the traces.
PredictionTable ground_truth_table(const std::vector<PromptTrace>& traces);

struct GeneratorConfig {
    int num_prompts = 100;
    int tokens_per_prompt = 128;
    ModelShape shape;
    int hot_set_size = 8;
    double skew = 0.9;
    std::uint64_t seed = 7;
    // Prompt ids are first_prompt_id .. first_prompt_id + num_prompts - 1. Prompt
    // content depends only on (seed, prompt id), so ranges with the same seed are
    // disjoint samples of one generator.
    std::uint64_t first_prompt_id = 0;
    // 0: each prompt draws its own hot sets. T > 0: a pool of T hot-set tables is
    // drawn once from the seed and each prompt picks one uniformly, giving the
    // cross-prompt recurrence that sketch matching relies on.
    int num_topics = 0;

    void validate() const;
};

inline constexpr std::int64_t kVocabularySize = 102400;

std::vector<PromptTrace> generate_synthetic(const GeneratorConfig& config);

}  // namespace moesim
