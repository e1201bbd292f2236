#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "moesim/errors.hpp"

namespace moesim {

using ExpertId = int;
using LayerId = int;

struct ModelShape {
    int num_layers = 27;
    int num_experts = 64;
    int top_k = 6;

    // Throws ConfigError unless L >= 1, E >= 1 and 1 <= top_k <= E.
    void validate() const;
    std::size_t cells() const { return static_cast<std::size_t>(num_layers) * num_experts; }

    bool operator==(const ModelShape&) const = default;
};

// One routing event. expert_ids is kept sorted ascending (it is a set).
struct TokenRecord {
    std::uint64_t prompt_id = 0;
    std::uint64_t token_index = 0;
    LayerId layer_id = 0;
    std::vector<ExpertId> expert_ids;
    std::int64_t token_id = 0;
    std::vector<double> embedding;

    bool operator==(const TokenRecord&) const = default;
};

// Throws RangeError/ConfigError when the record violates the shape.
void validate_record(const TokenRecord& record, const ModelShape& shape);

// Records ordered by (token_index, layer_id); exactly L records per token,
// token indices contiguous from 0. Record of (t, l) lives at t * L + l.
struct PromptTrace {
    std::uint64_t prompt_id = 0;
    std::vector<TokenRecord> records;

    std::size_t num_tokens(const ModelShape& shape) const {
        return records.size() / static_cast<std::size_t>(shape.num_layers);
    }
    const TokenRecord& at(std::size_t token, LayerId layer, const ModelShape& shape) const {
        return records[token * static_cast<std::size_t>(shape.num_layers) + static_cast<std::size_t>(layer)];
    }

    bool operator==(const PromptTrace&) const = default;
};

// Sorts records and checks coverage; throws ParseError("incomplete layer coverage", ...) etc.
void canonicalize(PromptTrace& trace, const ModelShape& shape);

// Row-major flattening (layer-major, expert-minor) of a row-normalized EAM.
using SketchVector = std::vector<double>;

// L x E activation counts. An iEAM holds one token, an rEAM a whole (or partial) prompt.
class Eam {
public:
    explicit Eam(const ModelShape& shape);

    const ModelShape& shape() const { return shape_; }
    std::uint32_t count(LayerId layer, ExpertId expert) const;
    std::span<const std::uint32_t> row(LayerId layer) const;
    std::span<const std::uint32_t> counts() const { return counts_; }
    std::uint64_t row_sum(LayerId layer) const;

    // Adds one to each listed cell. Validates all indices before mutating.
    void accumulate(LayerId layer, std::span<const ExpertId> experts);
    void accumulate(const TokenRecord& record) { accumulate(record.layer_id, record.expert_ids); }

    bool operator==(const Eam&) const = default;

private:
    ModelShape shape_;
    std::vector<std::uint32_t> counts_;
};

// rEAM of a whole prompt.
Eam prompt_eam(const PromptTrace& trace, const ModelShape& shape);

// Each row divided by its own sum (zero rows stay zero), flattened row-major.
// With binarize, nonzero counts are first clamped to 1.
SketchVector normalize(const Eam& eam, bool binarize = false);

// dot(a, b) / (|a| |b|), 0 when either norm is 0. Throws DimensionError on length mismatch.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Top `k` indices of `scores` by value, ties to the lower index. With
// skip_nonpositive, entries <= 0 are never returned.
std::vector<ExpertId> top_indices(std::span<const double> scores, std::size_t k, bool skip_nonpositive = false);

}  // namespace moesim
