#include "moesim/learner.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "moesim/rng.hpp"

namespace moesim {

DecayedHistory::DecayedHistory(const ModelShape& shape, double decay)
    : shape_(shape), decay_(decay), scores_(shape.cells(), 0.0) {
    if (!(decay >= 0.0 && decay < 1.0)) throw ConfigError("history decay must be in [0, 1)");
}

void DecayedHistory::observe(LayerId layer, std::span<const ExpertId> experts) {
    if (layer < 0 || layer >= shape_.num_layers) throw RangeError("history layer " + std::to_string(layer) + " out of range");
    const auto E = static_cast<std::size_t>(shape_.num_experts);
    double* row = scores_.data() + static_cast<std::size_t>(layer) * E;
    for (std::size_t e = 0; e < E; ++e) row[e] *= decay_;
    for (ExpertId e : experts) {
        if (e < 0 || e >= shape_.num_experts) throw RangeError("history expert " + std::to_string(e) + " out of range");
        row[e] += 1.0;
    }
}

std::span<const double> DecayedHistory::row(LayerId layer) const {
    if (layer < 0 || layer >= shape_.num_layers) throw RangeError("history layer " + std::to_string(layer) + " out of range");
    return std::span<const double>(scores_).subspan(static_cast<std::size_t>(layer) * shape_.num_experts,
                                                    static_cast<std::size_t>(shape_.num_experts));
}

std::vector<double> featurize(const ModelShape& shape, LayerId target_layer, std::span<const double> history_row) {
    if (target_layer < 0 || target_layer >= shape.num_layers) throw RangeError("featurize: layer out of range");
    if (history_row.size() != static_cast<std::size_t>(shape.num_experts))
        throw DimensionError("featurize: history row must have E entries");
    const auto L = static_cast<std::size_t>(shape.num_layers);
    std::vector<double> x(L + history_row.size() + 1, 0.0);
    x[static_cast<std::size_t>(target_layer)] = 1.0;
    std::copy(history_row.begin(), history_row.end(), x.begin() + static_cast<std::ptrdiff_t>(L));
    x.back() = 1.0;
    return x;
}

std::vector<double> LinearModel::logits(std::span<const double> x) const {
    const std::size_t D = feature_dim();
    if (x.size() != D) throw DimensionError("logits: expected " + std::to_string(D) + " features");
    std::vector<double> z(static_cast<std::size_t>(shape.num_experts), 0.0);
    for (std::size_t e = 0; e < z.size(); ++e) {
        const double* w = weights.data() + e * D;
        double s = 0.0;
        for (std::size_t d = 0; d < D; ++d) s += w[d] * x[d];
        z[e] = s;
    }
    return z;
}

LinearModel init_model(const ModelShape& shape, const LearnerParams& params) {
    shape.validate();
    LinearModel m;
    m.shape = shape;
    m.params = params;
    m.weights.resize(static_cast<std::size_t>(shape.num_experts) * m.feature_dim());
    Rng rng = Rng::split(params.seed, 0);
    for (auto& w : m.weights) w = (rng.uniform() * 2.0 - 1.0) * 0.01;
    return m;
}

namespace {

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double ez = std::exp(z);
    return ez / (1.0 + ez);
}

// -log sigmoid(z) for y = 1, -log(1 - sigmoid(z)) for y = 0.
double bce_term(double z, bool y) {
    const double softplus = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
    return y ? softplus - z : softplus;
}

std::vector<char> multi_hot(std::span<const ExpertId> truth, int num_experts) {
    std::vector<char> y(static_cast<std::size_t>(num_experts), 0);
    for (ExpertId e : truth) {
        if (e < 0 || e >= num_experts) throw RangeError("truth expert out of range");
        y[static_cast<std::size_t>(e)] = 1;
    }
    return y;
}

}  // namespace

double bce_loss(const LinearModel& model, std::span<const double> features, std::span<const ExpertId> truth) {
    const auto z = model.logits(features);
    const auto y = multi_hot(truth, model.shape.num_experts);
    double loss = 0.0;
    for (std::size_t e = 0; e < z.size(); ++e) loss += bce_term(z[e], y[e] != 0);
    return loss / static_cast<double>(z.size());
}

std::vector<double> bce_gradient(const LinearModel& model, std::span<const double> features,
                                 std::span<const ExpertId> truth) {
    const auto z = model.logits(features);
    const auto y = multi_hot(truth, model.shape.num_experts);
    const std::size_t D = model.feature_dim();
    std::vector<double> g(model.weights.size(), 0.0);
    const double scale = 1.0 / static_cast<double>(z.size());
    for (std::size_t e = 0; e < z.size(); ++e) {
        const double delta = (sigmoid(z[e]) - (y[e] ? 1.0 : 0.0)) * scale;
        for (std::size_t d = 0; d < D; ++d) g[e * D + d] = delta * features[d];
    }
    return g;
}

LinearModel train(const std::vector<PromptTrace>& traces, const ModelShape& shape, const LearnerParams& params) {
    if (traces.empty()) throw ConfigError("train: no traces");
    if (params.epochs < 0) throw ConfigError("train: epochs must be >= 0");
    if (!(params.learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
    LinearModel model = init_model(shape, params);

    const auto L = static_cast<std::size_t>(shape.num_layers);
    const auto E = static_cast<std::size_t>(shape.num_experts);
    const std::size_t D = model.feature_dim();

    // Example i: layer, history row (float) and truth set, in trace order.
    std::vector<LayerId> layers;
    std::vector<float> histories;
    std::vector<std::vector<ExpertId>> truths;
    for (const auto& trace : traces) {
        DecayedHistory history(shape, params.decay);
        const std::size_t tokens = trace.num_tokens(shape);
        for (std::size_t t = 0; t < tokens; ++t) {
            for (LayerId l = 0; l < shape.num_layers; ++l) {
                const auto& rec = trace.at(t, l, shape);
                layers.push_back(l);
                const auto row = history.row(l);
                histories.insert(histories.end(), row.begin(), row.end());
                truths.push_back(rec.expert_ids);
                history.observe(l, rec.expert_ids);
            }
        }
    }

    std::vector<std::size_t> order(layers.size());
    std::vector<double> x(D, 0.0);
    std::vector<double> z(E, 0.0);
    int stalls = 0;
    for (int epoch = 0; epoch < params.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng = Rng::split(params.seed, static_cast<std::uint64_t>(epoch) + 1);
        rng.shuffle(order);

        double epoch_loss = 0.0;
        for (std::size_t i : order) {
            std::fill(x.begin(), x.end(), 0.0);
            x[static_cast<std::size_t>(layers[i])] = 1.0;
            const float* h = histories.data() + i * E;
            for (std::size_t e = 0; e < E; ++e) x[L + e] = h[e];
            x[D - 1] = 1.0;

            std::vector<char> y(E, 0);
            for (ExpertId e : truths[i]) y[static_cast<std::size_t>(e)] = 1;

            double loss = 0.0;
            for (std::size_t e = 0; e < E; ++e) {
                const double* w = model.weights.data() + e * D;
                double s = w[layers[i]] + w[D - 1];
                for (std::size_t k = 0; k < E; ++k) s += w[L + k] * x[L + k];
                z[e] = s;
                loss += bce_term(s, y[e] != 0);
            }
            epoch_loss += loss / static_cast<double>(E);

            const double step = params.learning_rate / static_cast<double>(E);
            for (std::size_t e = 0; e < E; ++e) {
                const double delta = step * (sigmoid(z[e]) - (y[e] ? 1.0 : 0.0));
                double* w = model.weights.data() + e * D;
                w[layers[i]] -= delta;
                for (std::size_t k = 0; k < E; ++k) w[L + k] -= delta * x[L + k];
                w[D - 1] -= delta;
            }
        }
        epoch_loss /= static_cast<double>(order.size());
        if (!model.epoch_losses.empty() && model.epoch_losses.back() - epoch_loss < 1e-5)
            ++stalls;
        else
            stalls = 0;
        model.epoch_losses.push_back(epoch_loss);
        if (stalls >= 3) break;
    }
    model.trained = true;
    return model;
}

std::vector<ExpertId> predict_topk(const LinearModel& model, std::span<const double> features, std::size_t k) {
    if (!model.trained) throw ConfigError("predict_topk: model is not trained");
    const auto z = model.logits(features);
    return top_indices(z, k);
}

std::vector<ExpertId> predict_threshold(const LinearModel& model, std::span<const double> features) {
    if (!model.trained) throw ConfigError("predict_threshold: model is not trained");
    const auto z = model.logits(features);
    std::vector<ExpertId> out;
    for (std::size_t e = 0; e < z.size(); ++e)
        if (sigmoid(z[e]) > 0.5) out.push_back(static_cast<ExpertId>(e));
    return out;
}

void save_model(std::ostream& out, const LinearModel& model) {
    nlohmann::ordered_json j;
    j["format"] = "moesim-linear";
    j["shape"] = {{"num_layers", model.shape.num_layers},
                  {"num_experts", model.shape.num_experts},
                  {"top_k", model.shape.top_k}};
    j["params"] = {{"learning_rate", model.params.learning_rate},
                   {"epochs", model.params.epochs},
                   {"decay", model.params.decay},
                   {"seed", model.params.seed}};
    j["trained"] = model.trained;
    j["epoch_losses"] = model.epoch_losses;
    // weights[e][d]: d indexes [layer one-hot | history | bias].
    auto rows = nlohmann::ordered_json::array();
    const std::size_t D = model.feature_dim();
    for (std::size_t e = 0; e < static_cast<std::size_t>(model.shape.num_experts); ++e)
        rows.push_back(std::vector<double>(model.weights.begin() + static_cast<std::ptrdiff_t>(e * D),
                                           model.weights.begin() + static_cast<std::ptrdiff_t>((e + 1) * D)));
    j["weights"] = std::move(rows);
    out << j.dump() << '\n';
}

LinearModel load_model(std::istream& in) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(0, std::string("model file: ") + e.what());
    }
    try {
        if (j.value("format", "") != "moesim-linear") throw ParseError(0, "model file: missing format tag");
        LinearModel m;
        m.shape.num_layers = j.at("shape").at("num_layers").get<int>();
        m.shape.num_experts = j.at("shape").at("num_experts").get<int>();
        m.shape.top_k = j.at("shape").at("top_k").get<int>();
        m.shape.validate();
        const auto& p = j.at("params");
        m.params.learning_rate = p.at("learning_rate").get<double>();
        m.params.epochs = p.at("epochs").get<int>();
        m.params.decay = p.at("decay").get<double>();
        m.params.seed = p.at("seed").get<std::uint64_t>();
        m.trained = j.at("trained").get<bool>();
        m.epoch_losses = j.at("epoch_losses").get<std::vector<double>>();
        const auto rows = j.at("weights").get<std::vector<std::vector<double>>>();
        if (rows.size() != static_cast<std::size_t>(m.shape.num_experts))
            throw ParseError(0, "model file: expected one weight row per expert");
        for (const auto& r : rows) {
            if (r.size() != m.feature_dim()) throw ParseError(0, "model file: weight row has wrong length");
            for (double w : r)
                if (!std::isfinite(w)) throw ParseError(0, "model file: non-finite weight");
            m.weights.insert(m.weights.end(), r.begin(), r.end());
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, std::string("model file: ") + e.what());
    }
}

}  // namespace moesim
