#include "moesim/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <ostream>
#include <string>

namespace moesim {

namespace {

void check_aligned(const std::vector<ExpertSet>& predicted, const std::vector<ExpertSet>& truth) {
    if (predicted.size() != truth.size())
        throw DimensionError("metrics: " + std::to_string(predicted.size()) + " predictions vs " +
                             std::to_string(truth.size()) + " truths");
}

ExpertSet sorted_unique(ExpertSet s) {
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
}

std::string num(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace

double position_accuracy(const std::vector<ExpertSet>& predicted, const std::vector<ExpertSet>& truth) {
    check_aligned(predicted, truth);
    if (truth.empty()) return 0.0;
    std::size_t matches = 0;
    for (std::size_t i = 0; i < truth.size(); ++i)
        if (sorted_unique(predicted[i]) == sorted_unique(truth[i])) ++matches;
    return static_cast<double>(matches) / static_cast<double>(truth.size());
}

std::vector<ExpertConfusion> confusion_counts(const std::vector<ExpertSet>& predicted,
                                              const std::vector<ExpertSet>& truth, int num_experts) {
    check_aligned(predicted, truth);
    std::vector<ExpertConfusion> c(static_cast<std::size_t>(num_experts));
    std::vector<char> p_hot(c.size()), t_hot(c.size());
    auto mark = [&](const ExpertSet& s, std::vector<char>& hot) {
        std::fill(hot.begin(), hot.end(), 0);
        for (ExpertId e : s) {
            if (e < 0 || e >= num_experts) throw RangeError("metrics: expert " + std::to_string(e) + " out of range");
            hot[static_cast<std::size_t>(e)] = 1;
        }
    };
    for (std::size_t i = 0; i < truth.size(); ++i) {
        mark(predicted[i], p_hot);
        mark(truth[i], t_hot);
        for (std::size_t e = 0; e < c.size(); ++e) {
            if (p_hot[e] && t_hot[e]) ++c[e].tp;
            else if (p_hot[e]) ++c[e].fp;
            else if (t_hot[e]) ++c[e].fn;
        }
    }
    return c;
}

double expert_f1(const ExpertConfusion& c) {
    const double precision = (c.tp + c.fp) == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    const double recall = (c.tp + c.fn) == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

double macro_f1(const std::vector<ExpertSet>& predicted, const std::vector<ExpertSet>& truth, int num_experts,
                bool include_absent) {
    const auto counts = confusion_counts(predicted, truth, num_experts);
    double sum = 0.0;
    std::size_t included = 0;
    for (const auto& c : counts) {
        if (c.tp == 0 && c.fp == 0 && c.fn == 0 && !include_absent) continue;
        sum += expert_f1(c);
        ++included;
    }
    return included == 0 ? 0.0 : sum / static_cast<double>(included);
}

double per_label_accuracy(const std::vector<ExpertSet>& predicted, const std::vector<ExpertSet>& truth,
                          int num_experts) {
    const auto counts = confusion_counts(predicted, truth, num_experts);
    if (truth.empty()) return 0.0;
    std::uint64_t wrong = 0;
    for (const auto& c : counts) wrong += c.fp + c.fn;
    const double labels = static_cast<double>(truth.size()) * num_experts;
    return 1.0 - static_cast<double>(wrong) / labels;
}

ActivationReport activation_report(const std::vector<PromptTrace>& traces, const ModelShape& shape) {
    shape.validate();
    ActivationReport rep;
    rep.shape = shape;
    rep.layer_counts.assign(shape.cells(), 0);
    const auto E = static_cast<std::size_t>(shape.num_experts);
    for (const auto& trace : traces) {
        ActivationReport::PromptRow row;
        row.prompt_id = trace.prompt_id;
        row.tokens = trace.num_tokens(shape);
        std::vector<char> seen(shape.cells(), 0);
        for (const auto& r : trace.records) {
            validate_record(r, shape);
            for (ExpertId e : r.expert_ids) {
                const auto cell = static_cast<std::size_t>(r.layer_id) * E + static_cast<std::size_t>(e);
                ++rep.layer_counts[cell];
                seen[cell] = 1;
            }
        }
        row.distinct_per_layer.assign(static_cast<std::size_t>(shape.num_layers), 0);
        for (std::size_t cell = 0; cell < seen.size(); ++cell)
            if (seen[cell]) ++row.distinct_per_layer[cell / E];
        rep.prompts.push_back(std::move(row));
    }
    return rep;
}

void write_activation_counts_csv(std::ostream& out, const ActivationReport& report) {
    out << "layer_id,expert_id,count\n";
    const auto E = static_cast<std::size_t>(report.shape.num_experts);
    for (std::size_t cell = 0; cell < report.layer_counts.size(); ++cell)
        out << cell / E << ',' << cell % E << ',' << report.layer_counts[cell] << '\n';
}

void write_prompt_distinct_csv(std::ostream& out, const ActivationReport& report) {
    out << "prompt_id,layer_id,tokens,distinct_experts\n";
    for (const auto& p : report.prompts)
        for (std::size_t l = 0; l < p.distinct_per_layer.size(); ++l)
            out << p.prompt_id << ',' << l << ',' << p.tokens << ',' << p.distinct_per_layer[l] << '\n';
}

PredictionEvaluation evaluate_predictions(const PredictionTable& table, const std::vector<PromptTrace>& traces,
                                          const ModelShape& shape, std::uint64_t min_token) {
    const auto L = static_cast<std::size_t>(shape.num_layers);
    std::vector<ExpertSet> pred, truth;
    std::vector<std::vector<ExpertSet>> layer_pred(L), layer_truth(L);
    PredictionEvaluation ev;
    std::uint64_t hits = 0, opportunities = 0;
    std::vector<std::uint64_t> layer_hits(L, 0), layer_opp(L, 0);
    for (const auto& trace : traces)
        for (const auto& r : trace.records) {
            if (r.token_index < min_token) continue;
            const auto it = table.find(StepKey{r.prompt_id, r.token_index, r.layer_id});
            ExpertSet p;
            if (it != table.end()) {
                p = sorted_unique(it->second);
                ++ev.covered;
            }
            const auto l = static_cast<std::size_t>(r.layer_id);
            for (ExpertId e : r.expert_ids) {
                const bool hit = std::binary_search(p.begin(), p.end(), e);
                hits += hit;
                layer_hits[l] += hit;
            }
            opportunities += r.expert_ids.size();
            layer_opp[l] += r.expert_ids.size();
            layer_pred[l].push_back(p);
            layer_truth[l].push_back(r.expert_ids);
            pred.push_back(std::move(p));
            truth.push_back(r.expert_ids);
        }
    ev.positions = truth.size();
    ev.position_accuracy = position_accuracy(pred, truth);
    ev.macro_f1 = macro_f1(pred, truth, shape.num_experts);
    ev.macro_f1_all_experts = macro_f1(pred, truth, shape.num_experts, true);
    ev.per_label_accuracy = per_label_accuracy(pred, truth, shape.num_experts);
    ev.prediction_hit_rate = opportunities ? std::optional<double>(static_cast<double>(hits) / opportunities) : std::nullopt;
    for (std::size_t l = 0; l < L; ++l) {
        ev.layer_position_accuracy.push_back(position_accuracy(layer_pred[l], layer_truth[l]));
        ev.layer_prediction_hit_rate.push_back(
            layer_opp[l] ? std::optional<double>(static_cast<double>(layer_hits[l]) / layer_opp[l]) : std::nullopt);
    }
    return ev;
}

void write_evaluation_csv(std::ostream& out, const PredictionEvaluation& ev) {
    out << "metric,value\n";
    out << "positions," << ev.positions << '\n';
    out << "covered_positions," << ev.covered << '\n';
    out << "position_accuracy," << num(ev.position_accuracy) << '\n';
    out << "macro_f1," << num(ev.macro_f1) << '\n';
    out << "macro_f1_all_experts," << num(ev.macro_f1_all_experts) << '\n';
    out << "per_label_accuracy," << num(ev.per_label_accuracy) << '\n';
    out << "prediction_hit_rate," << (ev.prediction_hit_rate ? num(*ev.prediction_hit_rate) : "n/a") << '\n';
    out << "\nlayer_id,position_accuracy,prediction_hit_rate\n";
    for (std::size_t l = 0; l < ev.layer_position_accuracy.size(); ++l)
        out << l << ',' << num(ev.layer_position_accuracy[l]) << ','
            << (ev.layer_prediction_hit_rate[l] ? num(*ev.layer_prediction_hit_rate[l]) : "n/a") << '\n';
}

}  // namespace moesim
