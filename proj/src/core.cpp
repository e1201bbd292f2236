#include "moesim/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <tuple>

namespace moesim {

void ModelShape::validate() const {
    if (num_layers < 1) throw ConfigError("num_layers must be >= 1");
    if (num_experts < 1) throw ConfigError("num_experts must be >= 1");
    if (top_k < 1 || top_k > num_experts)
        throw ConfigError("top_k must be in [1, num_experts], got " + std::to_string(top_k));
}

void validate_record(const TokenRecord& record, const ModelShape& shape) {
    if (record.layer_id < 0 || record.layer_id >= shape.num_layers)
        throw RangeError("layer_id " + std::to_string(record.layer_id) + " out of range [0, " +
                         std::to_string(shape.num_layers) + ")");
    if (static_cast<int>(record.expert_ids.size()) != shape.top_k)
        throw ConfigError("expected " + std::to_string(shape.top_k) + " expert ids, got " +
                          std::to_string(record.expert_ids.size()));
    for (std::size_t i = 0; i < record.expert_ids.size(); ++i) {
        const ExpertId e = record.expert_ids[i];
        if (e < 0 || e >= shape.num_experts)
            throw RangeError("expert_id " + std::to_string(e) + " out of range [0, " +
                             std::to_string(shape.num_experts) + ")");
        if (i > 0 && record.expert_ids[i - 1] >= e)
            throw ConfigError("expert ids must be distinct and sorted");
    }
}

void canonicalize(PromptTrace& trace, const ModelShape& shape) {
    auto& recs = trace.records;
    std::sort(recs.begin(), recs.end(), [](const TokenRecord& a, const TokenRecord& b) {
        return std::tie(a.token_index, a.layer_id) < std::tie(b.token_index, b.layer_id);
    });
    const auto L = static_cast<std::size_t>(shape.num_layers);
    const std::string where = "prompt " + std::to_string(trace.prompt_id);
    if (recs.empty()) throw ParseError(0, where + ": no records");
    for (std::size_t i = 0; i < recs.size(); ++i) {
        if (recs[i].prompt_id != trace.prompt_id) throw ParseError(0, where + ": foreign record");
        if (i > 0 && recs[i - 1].token_index == recs[i].token_index && recs[i - 1].layer_id == recs[i].layer_id)
            throw ParseError(0, where + ": duplicate (token, layer) key");
    }
    if (recs.size() % L != 0) throw ParseError(0, where + ": incomplete layer coverage");
    for (std::size_t i = 0; i < recs.size(); ++i) {
        if (recs[i].token_index != i / L) {
            // Either a layer is missing for some token or token indices have a gap.
            throw ParseError(0, where + ": incomplete layer coverage at token " + std::to_string(i / L));
        }
        if (static_cast<std::size_t>(recs[i].layer_id) != i % L)
            throw ParseError(0, where + ": incomplete layer coverage at token " + std::to_string(i / L));
    }
}

Eam::Eam(const ModelShape& shape) : shape_(shape), counts_(shape.cells(), 0) { shape.validate(); }

std::uint32_t Eam::count(LayerId layer, ExpertId expert) const {
    if (layer < 0 || layer >= shape_.num_layers) throw RangeError("layer " + std::to_string(layer) + " out of range");
    if (expert < 0 || expert >= shape_.num_experts)
        throw RangeError("expert " + std::to_string(expert) + " out of range");
    return counts_[static_cast<std::size_t>(layer) * shape_.num_experts + expert];
}

std::span<const std::uint32_t> Eam::row(LayerId layer) const {
    if (layer < 0 || layer >= shape_.num_layers) throw RangeError("layer " + std::to_string(layer) + " out of range");
    return std::span<const std::uint32_t>(counts_).subspan(static_cast<std::size_t>(layer) * shape_.num_experts,
                                                           static_cast<std::size_t>(shape_.num_experts));
}

std::uint64_t Eam::row_sum(LayerId layer) const {
    const auto r = row(layer);
    return std::accumulate(r.begin(), r.end(), std::uint64_t{0});
}

void Eam::accumulate(LayerId layer, std::span<const ExpertId> experts) {
    if (layer < 0 || layer >= shape_.num_layers)
        throw RangeError("layer " + std::to_string(layer) + " out of range [0, " + std::to_string(shape_.num_layers) + ")");
    for (ExpertId e : experts)
        if (e < 0 || e >= shape_.num_experts)
            throw RangeError("expert " + std::to_string(e) + " out of range [0, " + std::to_string(shape_.num_experts) +
                             ")");
    const auto base = static_cast<std::size_t>(layer) * shape_.num_experts;
    for (ExpertId e : experts) ++counts_[base + static_cast<std::size_t>(e)];
}

Eam prompt_eam(const PromptTrace& trace, const ModelShape& shape) {
    Eam eam(shape);
    for (const auto& r : trace.records) eam.accumulate(r);
    return eam;
}

SketchVector normalize(const Eam& eam, bool binarize) {
    const auto& shape = eam.shape();
    const auto E = static_cast<std::size_t>(shape.num_experts);
    SketchVector out(shape.cells(), 0.0);
    for (LayerId l = 0; l < shape.num_layers; ++l) {
        const auto row = eam.row(l);
        double sum = 0.0;
        for (auto c : row) sum += binarize ? (c > 0 ? 1.0 : 0.0) : static_cast<double>(c);
        if (sum == 0.0) continue;
        for (std::size_t e = 0; e < E; ++e) {
            const double v = binarize ? (row[e] > 0 ? 1.0 : 0.0) : static_cast<double>(row[e]);
            out[static_cast<std::size_t>(l) * E + e] = v / sum;
        }
    }
    return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw DimensionError("cosine_similarity: length " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    const double c = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(c, -1.0, 1.0);
}

std::vector<ExpertId> top_indices(std::span<const double> scores, std::size_t k, bool skip_nonpositive) {
    std::vector<ExpertId> idx;
    idx.reserve(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (!skip_nonpositive || scores[i] > 0.0) idx.push_back(static_cast<ExpertId>(i));
    const std::size_t n = std::min(k, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(), [&](ExpertId a, ExpertId b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace moesim
