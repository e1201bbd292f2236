#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "moesim/core.hpp"

namespace moesim {

struct KMeansResult {
    std::vector<SketchVector> centroids;
    std::vector<std::size_t> assignments;
    double objective = 0.0;
    // Objective after each assignment step, first entry is the k-means++ seeding.
    std::vector<double> objective_history;
    std::size_t iterations = 0;
    // Effective k (min of requested k and number of points).
    std::size_t k = 0;
};

// Lloyd's algorithm, k-means++ seeding, squared Euclidean distance. Stops when
// assignments are stable or after max_iters update rounds. A cluster that goes
// empty is re-seeded with the point farthest from its current centroid.
KMeansResult kmeans(const std::vector<SketchVector>& points, std::size_t k, std::uint64_t seed,
                    std::size_t max_iters = 100);

double squared_distance(std::span<const double> a, std::span<const double> b);

enum class EamcMode { recent, kmeans };

struct EamcConfig {
    EamcMode mode = EamcMode::kmeans;
    std::size_t capacity = 32;  // recent: window size, kmeans: k
    bool binarize = false;
    std::size_t kmeans_max_iters = 100;
    std::uint64_t seed = 0;

    bool operator==(const EamcConfig&) const = default;
};

struct Eamc {
    ModelShape shape;
    EamcConfig config;
    std::vector<SketchVector> sketches;
};

struct Match {
    std::size_t index = 0;
    double similarity = 0.0;
};

// Recent mode keeps the last `capacity` rEAMs in input order; kmeans mode stores
// the centroids of the normalized rEAMs.
Eamc build_eamc(const std::vector<Eam>& reams, const EamcConfig& config);

// Highest cosine similarity, ties to the lowest index. Throws ConfigError("no sketches")
// on an empty collection and DimensionError on a length mismatch.
Match match_nearest(const Eamc& eamc, std::span<const double> query);

// JSON persistence: {"format":"moesim-eamc","shape":{...},"config":{...},"sketches":[[...],...]}.
// Doubles are written in shortest round-trip form.
void save_eamc(std::ostream& out, const Eamc& eamc);
Eamc load_eamc(std::istream& in);

std::string to_string(EamcMode mode);
EamcMode eamc_mode_from_string(const std::string& name);

}  // namespace moesim
