#include "moesim/predictors.hpp"

#include <algorithm>
#include <cmath>

namespace moesim {

std::string to_string(PredictorKind kind) {
    switch (kind) {
        case PredictorKind::oracle: return "oracle";
        case PredictorKind::lru_only: return "lru-only";
        case PredictorKind::next_layer_all: return "next-layer-all";
        case PredictorKind::global_frequency: return "global-frequency";
        case PredictorKind::eam_cosine: return "eam-cosine";
        case PredictorKind::external: return "external";
        case PredictorKind::learned_linear: return "learned-linear";
    }
    return "unknown";
}

PredictorKind predictor_kind_from_string(const std::string& name) {
    std::string n = name;
    std::replace(n.begin(), n.end(), '_', '-');
    for (auto k : {PredictorKind::oracle, PredictorKind::lru_only, PredictorKind::next_layer_all,
                   PredictorKind::global_frequency, PredictorKind::eam_cosine, PredictorKind::external,
                   PredictorKind::learned_linear})
        if (to_string(k) == n) return k;
    throw ConfigError("unknown predictor '" + name + "'");
}

std::vector<std::uint64_t> workload_counts(const std::vector<PromptTrace>& traces, const ModelShape& shape) {
    std::vector<std::uint64_t> counts(shape.cells(), 0);
    for (const auto& t : traces)
        for (const auto& r : t.records) {
            validate_record(r, shape);
            for (ExpertId e : r.expert_ids)
                ++counts[static_cast<std::size_t>(r.layer_id) * static_cast<std::size_t>(shape.num_experts) +
                         static_cast<std::size_t>(e)];
        }
    return counts;
}

namespace {

class ForwardingSession : public PredictorSession {
public:
    explicit ForwardingSession(const Predictor& p) : predictor_(p) {}
    PredictionSet predict(const PredictionContext& ctx) override { return predictor_.predict(ctx); }

private:
    const Predictor& predictor_;
};

}  // namespace

std::unique_ptr<PredictorSession> Predictor::begin_prompt() const { return std::make_unique<ForwardingSession>(*this); }

namespace {

class TablePredictor : public Predictor {
public:
    TablePredictor(PredictorKind kind, PredictionTable table) : kind_(kind), table_(std::move(table)) {}

    PredictorKind kind() const override { return kind_; }

    PredictionSet predict(const PredictionContext& ctx) const override {
        const auto it = table_.find(StepKey{ctx.prompt_id, ctx.token_index, ctx.target_layer});
        if (it != table_.end()) return it->second;
        if (kind_ == PredictorKind::oracle)
            throw ConfigError("oracle: no ground truth for prompt " + std::to_string(ctx.prompt_id) + " token " +
                              std::to_string(ctx.token_index) + " layer " + std::to_string(ctx.target_layer));
        return {};
    }

    bool covers(const PredictionContext& ctx) const override {
        return table_.count(StepKey{ctx.prompt_id, ctx.token_index, ctx.target_layer}) != 0;
    }

private:
    PredictorKind kind_;
    PredictionTable table_;
};

class LruOnly : public Predictor {
public:
    PredictorKind kind() const override { return PredictorKind::lru_only; }
    PredictionSet predict(const PredictionContext&) const override { return {}; }
};

class NextLayerAll : public Predictor {
public:
    explicit NextLayerAll(int num_experts) : num_experts_(num_experts) {}
    PredictorKind kind() const override { return PredictorKind::next_layer_all; }
    PredictionSet predict(const PredictionContext&) const override {
        PredictionSet all(static_cast<std::size_t>(num_experts_));
        for (int e = 0; e < num_experts_; ++e) all[static_cast<std::size_t>(e)] = e;
        return all;
    }
    bool ignores_budget() const override { return true; }

private:
    int num_experts_;
};

class GlobalFrequency : public Predictor {
public:
    GlobalFrequency(const ModelShape& shape, const std::vector<PromptTrace>& traces)
        : shape_(shape), counts_(shape.cells(), 0.0) {
        const auto raw = workload_counts(traces, shape);
        std::transform(raw.begin(), raw.end(), counts_.begin(), [](std::uint64_t c) { return static_cast<double>(c); });
    }
    PredictorKind kind() const override { return PredictorKind::global_frequency; }
    PredictionSet predict(const PredictionContext& ctx) const override {
        const auto E = static_cast<std::size_t>(shape_.num_experts);
        const std::span<const double> row(counts_.data() + static_cast<std::size_t>(ctx.target_layer) * E, E);
        return top_indices(row, ctx.budget);
    }

private:
    ModelShape shape_;
    std::vector<double> counts_;
};

class EamCosine : public Predictor {
public:
    explicit EamCosine(Eamc eamc) : eamc_(std::move(eamc)) {
        if (eamc_.sketches.empty()) throw ConfigError("eam-cosine: EAMC has no sketches");
        for (const auto& s : eamc_.sketches) {
            if (s.size() != eamc_.shape.cells()) throw DimensionError("eam-cosine: sketch length does not match shape");
            double n = 0.0;
            for (double v : s) n += v * v;
            norms_.push_back(std::sqrt(n));
        }
    }
    PredictorKind kind() const override { return PredictorKind::eam_cosine; }

    PredictionSet predict(const PredictionContext& ctx) const override {
        if (ctx.partial_ream == nullptr) throw ConfigError("eam-cosine: context has no partial rEAM");
        const SketchVector query = normalize(*ctx.partial_ream, eamc_.config.binarize);
        return block_top(match_nearest(eamc_, query).index, ctx);
    }

    std::unique_ptr<PredictorSession> begin_prompt() const override;

    PredictionSet block_top(std::size_t sketch, const PredictionContext& ctx) const {
        const auto E = static_cast<std::size_t>(eamc_.shape.num_experts);
        const std::span<const double> block(eamc_.sketches[sketch].data() + static_cast<std::size_t>(ctx.target_layer) * E, E);
        return top_indices(block, ctx.budget, /*skip_nonpositive=*/true);
    }

    const Eamc& eamc() const { return eamc_; }
    const std::vector<double>& norms() const { return norms_; }

private:
    Eamc eamc_;
    std::vector<double> norms_;
};

// Tracks, per layer, the row sum and squared norm of the (optionally binarized)
// partial counts and the raw dot product of that row with every sketch. The
// cosine of the row-normalized query then needs only these per-layer terms.
class EamCosineSession : public PredictorSession {
public:
    explicit EamCosineSession(const EamCosine& p)
        : p_(p),
          layers_(static_cast<std::size_t>(p.eamc().shape.num_layers)),
          experts_(static_cast<std::size_t>(p.eamc().shape.num_experts)),
          counts_(layers_ * experts_, 0),
          row_sum_(layers_, 0.0),
          row_sq_(layers_, 0.0),
          dots_(p.eamc().sketches.size() * layers_, 0.0) {}

    void observe(LayerId layer, std::span<const ExpertId> experts) override {
        const bool binarize = p_.eamc().config.binarize;
        const auto l = static_cast<std::size_t>(layer);
        for (ExpertId e : experts) {
            auto& c = counts_[l * experts_ + static_cast<std::size_t>(e)];
            if (binarize && c > 0) {
                ++c;
                continue;
            }
            row_sq_[l] += binarize ? 1.0 : 2.0 * c + 1.0;
            row_sum_[l] += 1.0;
            ++c;
            const auto& sketches = p_.eamc().sketches;
            for (std::size_t k = 0; k < sketches.size(); ++k)
                dots_[k * layers_ + l] += sketches[k][l * experts_ + static_cast<std::size_t>(e)];
        }
    }

    PredictionSet predict(const PredictionContext& ctx) override {
        double qsq = 0.0;
        for (std::size_t l = 0; l < layers_; ++l)
            if (row_sum_[l] > 0.0) qsq += row_sq_[l] / (row_sum_[l] * row_sum_[l]);
        std::size_t best = 0;
        double best_sim = -2.0;
        const auto& norms = p_.norms();
        for (std::size_t k = 0; k < norms.size(); ++k) {
            double sim = 0.0;
            if (qsq > 0.0 && norms[k] > 0.0) {
                double dot = 0.0;
                for (std::size_t l = 0; l < layers_; ++l)
                    if (row_sum_[l] > 0.0) dot += dots_[k * layers_ + l] / row_sum_[l];
                sim = std::clamp(dot / (std::sqrt(qsq) * norms[k]), -1.0, 1.0);
            }
            if (sim > best_sim) {
                best_sim = sim;
                best = k;
            }
        }
        return p_.block_top(best, ctx);
    }

private:
    const EamCosine& p_;
    std::size_t layers_;
    std::size_t experts_;
    std::vector<std::uint32_t> counts_;
    std::vector<double> row_sum_;
    std::vector<double> row_sq_;
    std::vector<double> dots_;  // sketch-major, one entry per layer
};

std::unique_ptr<PredictorSession> EamCosine::begin_prompt() const { return std::make_unique<EamCosineSession>(*this); }

class LearnedLinear : public Predictor {
public:
    LearnedLinear(LinearModel model, bool threshold) : model_(std::move(model)), threshold_(threshold) {
        if (!model_.trained) throw ConfigError("learned-linear: model is not trained");
    }
    PredictorKind kind() const override { return PredictorKind::learned_linear; }
    PredictionSet predict(const PredictionContext& ctx) const override {
        if (ctx.history == nullptr) throw ConfigError("learned-linear: context has no history");
        const auto x = featurize(model_.shape, ctx.target_layer, ctx.history->row(ctx.target_layer));
        if (!threshold_) return predict_topk(model_, x, ctx.budget);
        auto set = predict_threshold(model_, x);
        if (set.size() > ctx.budget) {
            const auto z = model_.logits(x);
            set = top_indices(z, ctx.budget);
        }
        return set;
    }
    double history_decay() const override { return model_.params.decay; }

private:
    LinearModel model_;
    bool threshold_;
};

}  // namespace

std::unique_ptr<Predictor> make_predictor(PredictorKind kind, const PredictorState& state) {
    state.shape.validate();
    switch (kind) {
        case PredictorKind::oracle:
            if (state.ground_truth.empty()) throw ConfigError("oracle predictor needs the replayed traces");
            return std::make_unique<TablePredictor>(kind, ground_truth_table(state.ground_truth));
        case PredictorKind::lru_only: return std::make_unique<LruOnly>();
        case PredictorKind::next_layer_all: return std::make_unique<NextLayerAll>(state.shape.num_experts);
        case PredictorKind::global_frequency:
            if (state.training_traces.empty()) throw ConfigError("global-frequency predictor needs training traces");
            return std::make_unique<GlobalFrequency>(state.shape, state.training_traces);
        case PredictorKind::eam_cosine:
            if (!state.eamc) throw ConfigError("eam-cosine predictor needs an EAMC");
            if (!(state.eamc->shape == state.shape)) throw ConfigError("eam-cosine: EAMC shape does not match traces");
            return std::make_unique<EamCosine>(*state.eamc);
        case PredictorKind::external:
            if (!state.table) throw ConfigError("external predictor needs a predictions table");
            return std::make_unique<TablePredictor>(kind, *state.table);
        case PredictorKind::learned_linear:
            if (!state.model) throw ConfigError("learned-linear predictor needs a trained model");
            if (!(state.model->shape == state.shape)) throw ConfigError("learned-linear: model shape does not match traces");
            return std::make_unique<LearnedLinear>(*state.model, state.threshold_mode);
    }
    throw ConfigError("unknown predictor kind");
}

}  // namespace moesim
