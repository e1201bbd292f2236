#include "moesim/cache.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <string>

namespace moesim {

std::size_t CacheConfig::resolve(const ModelShape& shape) const {
    if (capacity_fraction.has_value() == capacity_entries.has_value())
        throw ConfigError("cache: set exactly one of capacity_fraction and capacity_entries");
    if (prefetch_budget == 0) throw ConfigError("cache: prefetch_budget must be >= 1");
    if (capacity_entries) {
        if (*capacity_entries == 0) throw ConfigError("cache: capacity_entries must be >= 1");
        return *capacity_entries;
    }
    const double f = *capacity_fraction;
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("cache: capacity_fraction must be in (0, 1]");
    const auto n = static_cast<std::size_t>(std::floor(f * static_cast<double>(shape.cells())));
    return n == 0 ? 1 : n;
}

ExpertCache::ExpertCache(const ModelShape& shape, std::size_t capacity, std::size_t prefetch_budget)
    : shape_(shape), capacity_(capacity), prefetch_budget_(prefetch_budget) {
    shape.validate();
    if (capacity == 0) throw ConfigError("cache capacity must be >= 1");
    index_.reserve(capacity * 2);
}

std::uint32_t ExpertCache::slot_of(ExpertKey key) const {
    if (key.layer < 0 || key.layer >= shape_.num_layers)
        throw RangeError("cache key layer " + std::to_string(key.layer) + " out of range");
    if (key.expert < 0 || key.expert >= shape_.num_experts)
        throw RangeError("cache key expert " + std::to_string(key.expert) + " out of range");
    return static_cast<std::uint32_t>(key.layer * shape_.num_experts + key.expert);
}

void ExpertCache::begin_step() {
    for (auto slot : pinned_) {
        if (auto it = index_.find(slot); it != index_.end()) it->second->pinned = false;
    }
    pinned_.clear();
}

bool ExpertCache::evict_one() {
    for (auto it = order_.begin(); it != order_.end(); ++it) {
        if (it->pinned) continue;
        index_.erase(it->slot);
        order_.erase(it);
        return true;
    }
    return false;
}

Access ExpertCache::touch(ExpertKey key) {
    const auto slot = slot_of(key);
    if (auto it = index_.find(slot); it != index_.end()) {
        order_.splice(order_.end(), order_, it->second);
        return Access::hit;
    }
    if (order_.size() >= capacity_ && !evict_one()) return Access::miss;
    order_.push_back({slot, false});
    index_.emplace(slot, std::prev(order_.end()));
    return Access::miss;
}

std::size_t ExpertCache::prefetch(std::span<const ExpertKey> keys, std::optional<std::size_t> limit) {
    const std::size_t n = std::min(keys.size(), limit.value_or(prefetch_budget_));
    std::size_t inserted = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto slot = slot_of(keys[i]);
        if (auto it = index_.find(slot); it != index_.end()) {
            order_.splice(order_.end(), order_, it->second);
            if (!it->second->pinned) {
                it->second->pinned = true;
                pinned_.push_back(slot);
            }
            continue;
        }
        if (order_.size() >= capacity_ && !evict_one()) continue;
        order_.push_back({slot, true});
        index_.emplace(slot, std::prev(order_.end()));
        pinned_.push_back(slot);
        ++inserted;
    }
    return inserted;
}

bool ExpertCache::contains(ExpertKey key) const { return index_.count(slot_of(key)) != 0; }

std::vector<ExpertKey> ExpertCache::resident() const {
    std::vector<ExpertKey> out;
    out.reserve(order_.size());
    for (const auto& e : order_)
        out.push_back({static_cast<LayerId>(e.slot / static_cast<std::uint32_t>(shape_.num_experts)),
                       static_cast<ExpertId>(e.slot % static_cast<std::uint32_t>(shape_.num_experts))});
    return out;
}

}  // namespace moesim
