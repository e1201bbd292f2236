#pragma once

#include <cstdint>
#include <list>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "moesim/core.hpp"

namespace moesim {

struct ExpertKey {
    LayerId layer = 0;
    ExpertId expert = 0;

    bool operator==(const ExpertKey&) const = default;
};

struct CacheConfig {
    // Exactly one of the two should be set; fraction is of L * E.
    std::optional<double> capacity_fraction;
    std::optional<std::size_t> capacity_entries;
    std::size_t prefetch_budget = 6;

    // floor(fraction * L * E) with a minimum of 1, or the entry count.
    std::size_t resolve(const ModelShape& shape) const;

    static CacheConfig fraction(double f, std::size_t budget = 6) { return {f, std::nullopt, budget}; }
    static CacheConfig entries(std::size_t n, std::size_t budget = 6) { return {std::nullopt, n, budget}; }
};

enum class Access { hit, miss };

// Global LRU pool of (layer, expert) entries.
//
// Work is organized in steps (one per token and layer). Entries prefetched in the
// current step are pinned: no later prefetch or touch of the same step may evict
// them. When every resident entry is pinned, a prefetch is rejected and a missing
// touch is served without being inserted.
class ExpertCache {
public:
    ExpertCache(const ModelShape& shape, std::size_t capacity, std::size_t prefetch_budget);

    // Clears the pins of the previous step.
    void begin_step();

    Access touch(ExpertKey key);

    // Processes at most `limit` keys (default: the prefetch budget) in order and
    // returns how many were newly inserted. Resident keys are refreshed.
    std::size_t prefetch(std::span<const ExpertKey> keys, std::optional<std::size_t> limit = std::nullopt);

    bool contains(ExpertKey key) const;
    std::size_t size() const { return order_.size(); }
    std::size_t capacity() const { return capacity_; }
    std::size_t prefetch_budget() const { return prefetch_budget_; }

    // Least recently used first.
    std::vector<ExpertKey> resident() const;

private:
    struct Entry {
        std::uint32_t slot;
        bool pinned;
    };

    std::uint32_t slot_of(ExpertKey key) const;
    // Evicts the least recently used unpinned entry; false if all are pinned.
    bool evict_one();

    ModelShape shape_;
    std::size_t capacity_;
    std::size_t prefetch_budget_;
    std::list<Entry> order_;  // LRU at front
    std::unordered_map<std::uint32_t, std::list<Entry>::iterator> index_;
    std::vector<std::uint32_t> pinned_;
};

}  // namespace moesim
