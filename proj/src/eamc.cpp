#include "moesim/eamc.hpp"

#include <algorithm>
#include <istream>
#include <limits>
#include <ostream>

#include <nlohmann/json.hpp>

#include "moesim/rng.hpp"

namespace moesim {

double squared_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("squared_distance: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

namespace {

// Nearest centroid per point (ties to the lower centroid index); returns the objective.
double assign(const std::vector<SketchVector>& points, const std::vector<SketchVector>& centroids,
              std::vector<std::size_t>& assignments, std::vector<double>& dist) {
    double objective = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < centroids.size(); ++c) {
            const double d = squared_distance(points[i], centroids[c]);
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        assignments[i] = best;
        dist[i] = best_d;
        objective += best_d;
    }
    return objective;
}

std::vector<SketchVector> seed_plus_plus(const std::vector<SketchVector>& points, std::size_t k, Rng& rng) {
    const std::size_t n = points.size();
    std::vector<SketchVector> centroids;
    std::vector<bool> chosen(n, false);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());

    std::size_t next = static_cast<std::size_t>(rng.below(n));
    for (;;) {
        chosen[next] = true;
        centroids.push_back(points[next]);
        if (centroids.size() == k) break;
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], squared_distance(points[i], centroids.back()));
            total += d2[i];
        }
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            next = n;
            for (std::size_t i = 0; i < n; ++i) {
                if (d2[i] <= 0.0) continue;
                acc += d2[i];
                next = i;
                if (acc > target) break;
            }
        } else {
            // Every point coincides with a centroid: take an unused one uniformly.
            std::vector<std::size_t> unused;
            for (std::size_t i = 0; i < n; ++i)
                if (!chosen[i]) unused.push_back(i);
            next = unused[rng.below(unused.size())];
        }
    }
    return centroids;
}

}  // namespace

KMeansResult kmeans(const std::vector<SketchVector>& points, std::size_t k, std::uint64_t seed, std::size_t max_iters) {
    if (points.empty()) throw ConfigError("kmeans: no points");
    if (k == 0) throw ConfigError("kmeans: k must be >= 1");
    const std::size_t dim = points.front().size();
    for (const auto& p : points)
        if (p.size() != dim) throw DimensionError("kmeans: points have different lengths");

    KMeansResult res;
    res.k = std::min(k, points.size());
    Rng rng(seed);
    res.centroids = seed_plus_plus(points, res.k, rng);

    const std::size_t n = points.size();
    res.assignments.assign(n, 0);
    std::vector<double> dist(n, 0.0);
    res.objective = assign(points, res.centroids, res.assignments, dist);
    res.objective_history.push_back(res.objective);

    std::vector<std::size_t> previous;
    for (std::size_t it = 0; it < max_iters; ++it) {
        std::vector<SketchVector> sums(res.k, SketchVector(dim, 0.0));
        std::vector<std::size_t> sizes(res.k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto& s = sums[res.assignments[i]];
            for (std::size_t d = 0; d < dim; ++d) s[d] += points[i][d];
            ++sizes[res.assignments[i]];
        }
        std::vector<bool> taken(n, false);
        for (std::size_t c = 0; c < res.k; ++c) {
            if (sizes[c] > 0) {
                for (std::size_t d = 0; d < dim; ++d) res.centroids[c][d] = sums[c][d] / static_cast<double>(sizes[c]);
                continue;
            }
            std::size_t far = n;
            for (std::size_t i = 0; i < n; ++i)
                if (!taken[i] && (far == n || dist[i] > dist[far])) far = i;
            if (far == n) continue;
            taken[far] = true;
            res.centroids[c] = points[far];
        }

        previous = res.assignments;
        res.objective = assign(points, res.centroids, res.assignments, dist);
        res.objective_history.push_back(res.objective);
        res.iterations = it + 1;
        if (res.assignments == previous) break;
    }
    return res;
}

Eamc build_eamc(const std::vector<Eam>& reams, const EamcConfig& config) {
    if (reams.empty()) throw ConfigError("build_eamc: no rEAMs");
    if (config.capacity == 0) throw ConfigError("build_eamc: capacity must be >= 1");
    const ModelShape shape = reams.front().shape();
    for (const auto& r : reams)
        if (!(r.shape() == shape)) throw DimensionError("build_eamc: rEAMs have different shapes");

    Eamc eamc{shape, config, {}};
    if (config.mode == EamcMode::recent) {
        const std::size_t first = reams.size() > config.capacity ? reams.size() - config.capacity : 0;
        for (std::size_t i = first; i < reams.size(); ++i) eamc.sketches.push_back(normalize(reams[i], config.binarize));
    } else {
        std::vector<SketchVector> points;
        points.reserve(reams.size());
        for (const auto& r : reams) points.push_back(normalize(r, config.binarize));
        eamc.sketches = kmeans(points, config.capacity, config.seed, config.kmeans_max_iters).centroids;
    }
    return eamc;
}

Match match_nearest(const Eamc& eamc, std::span<const double> query) {
    if (eamc.sketches.empty()) throw ConfigError("match_nearest: no sketches");
    Match best{0, cosine_similarity(query, eamc.sketches[0])};
    for (std::size_t i = 1; i < eamc.sketches.size(); ++i) {
        const double s = cosine_similarity(query, eamc.sketches[i]);
        if (s > best.similarity) best = {i, s};
    }
    return best;
}

std::string to_string(EamcMode mode) { return mode == EamcMode::recent ? "recent" : "kmeans"; }

EamcMode eamc_mode_from_string(const std::string& name) {
    if (name == "recent") return EamcMode::recent;
    if (name == "kmeans") return EamcMode::kmeans;
    throw ConfigError("unknown EAMC mode '" + name + "' (expected recent or kmeans)");
}

void save_eamc(std::ostream& out, const Eamc& eamc) {
    nlohmann::ordered_json j;
    j["format"] = "moesim-eamc";
    j["shape"] = {{"num_layers", eamc.shape.num_layers},
                  {"num_experts", eamc.shape.num_experts},
                  {"top_k", eamc.shape.top_k}};
    j["config"] = {{"mode", to_string(eamc.config.mode)},
                   {"capacity", eamc.config.capacity},
                   {"binarize", eamc.config.binarize},
                   {"kmeans_max_iters", eamc.config.kmeans_max_iters},
                   {"seed", eamc.config.seed}};
    j["sketches"] = eamc.sketches;
    out << j.dump() << '\n';
}

Eamc load_eamc(std::istream& in) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(0, std::string("EAMC file: ") + e.what());
    }
    try {
        if (j.value("format", "") != "moesim-eamc") throw ParseError(0, "EAMC file: missing format tag");
        Eamc eamc;
        eamc.shape.num_layers = j.at("shape").at("num_layers").get<int>();
        eamc.shape.num_experts = j.at("shape").at("num_experts").get<int>();
        eamc.shape.top_k = j.at("shape").at("top_k").get<int>();
        eamc.shape.validate();
        const auto& c = j.at("config");
        eamc.config.mode = eamc_mode_from_string(c.at("mode").get<std::string>());
        eamc.config.capacity = c.at("capacity").get<std::size_t>();
        eamc.config.binarize = c.at("binarize").get<bool>();
        eamc.config.kmeans_max_iters = c.at("kmeans_max_iters").get<std::size_t>();
        eamc.config.seed = c.at("seed").get<std::uint64_t>();
        eamc.sketches = j.at("sketches").get<std::vector<SketchVector>>();
        for (const auto& s : eamc.sketches)
            if (s.size() != eamc.shape.cells()) throw ParseError(0, "EAMC file: sketch length does not match shape");
        return eamc;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, std::string("EAMC file: ") + e.what());
    }
}

}  // namespace moesim
