#pragma once

#include <cstdint>
#include <algorithm>
#include <utility>
#include <vector>

namespace moesim {

// SplitMix64 (Steele, Lea, Flood 2014). Every draw used by the generator, k-means
// seeding and SGD shuffling goes through this type so that outputs are identical
// across standard libraries; std:: distributions are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, bound), unbiased (rejection on the low zone).
    std::uint64_t below(std::uint64_t bound) {
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t r = next();
            if (r >= threshold) return r % bound;
        }
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Independent stream for a sub-task (per prompt, per epoch, ...). The result
    // depends only on (parent seed, stream id), never on how many draws the parent made.
    static Rng split(std::uint64_t seed, std::uint64_t stream) {
        Rng mixer(seed ^ (0xd1b54a32d192ed03ULL * (stream + 1)));
        return Rng(mixer.next());
    }

    // First `count` entries of a partial Fisher-Yates shuffle of `pool`.
    template <class T>
    std::vector<T> sample(std::vector<T> pool, std::size_t count) {
        for (std::size_t i = 0; i < count && i < pool.size(); ++i) {
            const std::size_t j = i + static_cast<std::size_t>(below(pool.size() - i));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(std::min(count, pool.size()));
        return pool;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

}  // namespace moesim
