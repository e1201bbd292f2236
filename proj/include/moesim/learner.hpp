#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "moesim/core.hpp"

namespace moesim {

// Per-prompt, per-layer exponentially decayed activation scores:
// score[l][e] = sum over earlier tokens of decay^age * [e fired at layer l],
// where the most recent token has age 0.
class DecayedHistory {
public:
    DecayedHistory(const ModelShape& shape, double decay);

    void observe(LayerId layer, std::span<const ExpertId> experts);
    std::span<const double> row(LayerId layer) const;
    double decay() const { return decay_; }

private:
    ModelShape shape_;
    double decay_;
    std::vector<double> scores_;
};

struct LearnerParams {
    double learning_rate = 0.05;
    int epochs = 10;
    double decay = 0.9;
    std::uint64_t seed = 0;
};

// Per-expert logistic model over [layer one-hot (L) | target-layer history (E) | 1].
struct LinearModel {
    ModelShape shape;
    LearnerParams params;
    std::vector<double> weights;  // E rows of feature_dim(), row-major
    bool trained = false;
    std::vector<double> epoch_losses;

    std::size_t feature_dim() const { return static_cast<std::size_t>(shape.num_layers + shape.num_experts + 1); }
    std::vector<double> logits(std::span<const double> features) const;
};

std::vector<double> featurize(const ModelShape& shape, LayerId target_layer, std::span<const double> history_row);

// Seeded uniform(-0.01, 0.01) weights, not yet trained.
LinearModel init_model(const ModelShape& shape, const LearnerParams& params);

// Mean binary cross-entropy over the E outputs for one example; `truth` holds the
// active expert ids.
double bce_loss(const LinearModel& model, std::span<const double> features, std::span<const ExpertId> truth);
// d bce_loss / d weights, laid out like LinearModel::weights.
std::vector<double> bce_gradient(const LinearModel& model, std::span<const double> features,
                                 std::span<const ExpertId> truth);

// Plain SGD over every (token, layer) of every prompt, seeded shuffle per epoch.
// Stops early once the epoch-mean loss improves by less than 1e-5 three epochs in a row.
LinearModel train(const std::vector<PromptTrace>& traces, const ModelShape& shape, const LearnerParams& params);

// Top-k by logit, ties to the lower id. Throws ConfigError if the model is untrained.
std::vector<ExpertId> predict_topk(const LinearModel& model, std::span<const double> features, std::size_t k);
// {e : sigmoid(logit_e) > 0.5}.
std::vector<ExpertId> predict_threshold(const LinearModel& model, std::span<const double> features);

void save_model(std::ostream& out, const LinearModel& model);
LinearModel load_model(std::istream& in);

}  // namespace moesim
