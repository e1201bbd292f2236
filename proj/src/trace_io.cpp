#include "moesim/trace_io.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string_view>

#include <nlohmann/json.hpp>

#include "moesim/rng.hpp"

namespace moesim {

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

template <class Int>
Int parse_int(std::string_view s, std::size_t line, const char* field) {
    Int value{};
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, value);
    if (s.empty() || ec != std::errc{} || ptr != end)
        throw ParseError(line, std::string("field ") + field + ": not an integer: '" + std::string(s) + "'");
    return value;
}

double parse_double(std::string_view s, std::size_t line) {
    double value = 0.0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, value);
    if (s.empty() || ec != std::errc{} || ptr != end)
        throw ParseError(line, "field embedding: not a number: '" + std::string(s) + "'");
    return value;
}

void append_double(std::string& out, double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, ptr);
}

TokenRecord parse_row(std::string_view line_text, std::size_t line, const ModelShape& shape) {
    const auto fields = split(line_text, ',');
    if (fields.size() != 6)
        throw ParseError(line, "expected 6 columns, got " + std::to_string(fields.size()));
    TokenRecord r;
    r.prompt_id = parse_int<std::uint64_t>(fields[0], line, "prompt_id");
    r.token_index = parse_int<std::uint64_t>(fields[1], line, "token_index");
    r.layer_id = parse_int<int>(fields[2], line, "layer_id");
    if (r.layer_id < 0 || r.layer_id >= shape.num_layers)
        throw ParseError(line, "layer_id " + std::to_string(r.layer_id) + " out of range");
    for (auto part : split(fields[3], '|')) {
        const int e = parse_int<int>(part, line, "expert_ids");
        if (e < 0 || e >= shape.num_experts) throw ParseError(line, "expert_id " + std::to_string(e) + " out of range");
        r.expert_ids.push_back(e);
    }
    std::sort(r.expert_ids.begin(), r.expert_ids.end());
    if (std::adjacent_find(r.expert_ids.begin(), r.expert_ids.end()) != r.expert_ids.end())
        throw ParseError(line, "duplicate expert id");
    if (static_cast<int>(r.expert_ids.size()) != shape.top_k)
        throw ParseError(line, "expected " + std::to_string(shape.top_k) + " expert ids, got " +
                                   std::to_string(r.expert_ids.size()));
    r.token_id = parse_int<std::int64_t>(fields[4], line, "token_id");
    if (!fields[5].empty())
        for (auto part : split(fields[5], '|')) r.embedding.push_back(parse_double(part, line));
    return r;
}

}  // namespace

std::vector<PromptTrace> parse_trace_csv(std::istream& in, const ModelShape& shape) {
    shape.validate();
    std::string text;
    std::size_t line = 0;
    if (!std::getline(in, text)) throw ParseError(1, "missing header");
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text != kTraceHeader) throw ParseError(1, "bad header, expected '" + std::string(kTraceHeader) + "'");

    std::map<std::uint64_t, PromptTrace> by_prompt;
    std::map<StepKey, std::size_t> seen;
    while (std::getline(in, text)) {
        ++line;
        if (!text.empty() && text.back() == '\r') text.pop_back();
        if (text.empty()) continue;
        TokenRecord r = parse_row(text, line, shape);
        const StepKey key{r.prompt_id, r.token_index, r.layer_id};
        if (auto [it, inserted] = seen.emplace(key, line); !inserted)
            throw ParseError(line, "duplicate (prompt, token, layer) key, first seen on line " + std::to_string(it->second));
        auto& trace = by_prompt[r.prompt_id];
        trace.prompt_id = r.prompt_id;
        trace.records.push_back(std::move(r));
    }

    std::vector<PromptTrace> out;
    out.reserve(by_prompt.size());
    for (auto& [id, trace] : by_prompt) {
        canonicalize(trace, shape);
        out.push_back(std::move(trace));
    }
    return out;
}

std::vector<PromptTrace> parse_trace_csv(const std::string& text, const ModelShape& shape) {
    std::istringstream in(text);
    return parse_trace_csv(in, shape);
}

void write_trace_csv(std::ostream& out, const std::vector<PromptTrace>& traces) {
    std::vector<const TokenRecord*> rows;
    for (const auto& t : traces)
        for (const auto& r : t.records) rows.push_back(&r);
    std::sort(rows.begin(), rows.end(), [](const TokenRecord* a, const TokenRecord* b) {
        return std::tie(a->prompt_id, a->token_index, a->layer_id) < std::tie(b->prompt_id, b->token_index, b->layer_id);
    });

    std::string buf = kTraceHeader;
    buf += '\n';
    for (const auto* r : rows) {
        buf += std::to_string(r->prompt_id);
        buf += ',';
        buf += std::to_string(r->token_index);
        buf += ',';
        buf += std::to_string(r->layer_id);
        buf += ',';
        std::vector<ExpertId> ids = r->expert_ids;
        std::sort(ids.begin(), ids.end());
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (i) buf += '|';
            buf += std::to_string(ids[i]);
        }
        buf += ',';
        buf += std::to_string(r->token_id);
        buf += ',';
        for (std::size_t i = 0; i < r->embedding.size(); ++i) {
            if (i) buf += '|';
            append_double(buf, r->embedding[i]);
        }
        buf += '\n';
        if (buf.size() > (1u << 20)) {
            out << buf;
            buf.clear();
        }
    }
    out << buf;
}

std::string write_trace_csv(const std::vector<PromptTrace>& traces) {
    std::ostringstream out;
    write_trace_csv(out, traces);
    return out.str();
}

PredictionTable parse_predictions(std::istream& in, const ModelShape& shape) {
    using nlohmann::json;
    PredictionTable table;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (!text.empty() && text.back() == '\r') text.pop_back();
        if (text.find_first_not_of(" \t") == std::string::npos) continue;

        json obj;
        try {
            obj = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ParseError(line, std::string("malformed JSON: ") + e.what());
        }
        if (!obj.is_object()) throw ParseError(line, "expected a JSON object");

        auto get_int = [&](const char* name) -> std::int64_t {
            const auto it = obj.find(name);
            if (it == obj.end()) throw ParseError(line, std::string("missing field '") + name + "'");
            if (!it->is_number_integer()) throw ParseError(line, std::string("field '") + name + "' must be an integer");
            return it->get<std::int64_t>();
        };
        const auto prompt = get_int("prompt_id");
        const auto token = get_int("token_index");
        const auto layer = get_int("layer_id");
        if (prompt < 0 || token < 0) throw ParseError(line, "prompt_id and token_index must be non-negative");
        if (layer < 0 || layer >= shape.num_layers) throw ParseError(line, "layer_id " + std::to_string(layer) + " out of range");

        const auto it = obj.find("experts");
        if (it == obj.end()) throw ParseError(line, "missing field 'experts'");
        if (!it->is_array()) throw ParseError(line, "field 'experts' must be an array");
        std::vector<ExpertId> experts;
        for (const auto& v : *it) {
            if (!v.is_number_integer()) throw ParseError(line, "expert ids must be integers");
            const auto e = v.get<std::int64_t>();
            if (e < 0 || e >= shape.num_experts) throw ParseError(line, "expert " + std::to_string(e) + " out of range");
            experts.push_back(static_cast<ExpertId>(e));
        }
        std::sort(experts.begin(), experts.end());
        experts.erase(std::unique(experts.begin(), experts.end()), experts.end());

        const StepKey key{static_cast<std::uint64_t>(prompt), static_cast<std::uint64_t>(token), static_cast<LayerId>(layer)};
        if (!table.emplace(key, std::move(experts)).second) throw ParseError(line, "duplicate key");
    }
    return table;
}

PredictionTable parse_predictions(const std::string& text, const ModelShape& shape) {
    std::istringstream in(text);
    return parse_predictions(in, shape);
}

void write_predictions(std::ostream& out, const PredictionTable& table) {
    for (const auto& [key, experts] : table) {
        out << "{\"prompt_id\":" << key.prompt_id << ",\"token_index\":" << key.token_index
            << ",\"layer_id\":" << key.layer_id << ",\"experts\":[";
        for (std::size_t i = 0; i < experts.size(); ++i) out << (i ? "," : "") << experts[i];
        out << "]}\n";
    }
}

PredictionTable ground_truth_table(const std::vector<PromptTrace>& traces) {
    PredictionTable table;
    for (const auto& t : traces)
        for (const auto& r : t.records) table[StepKey{r.prompt_id, r.token_index, r.layer_id}] = r.expert_ids;
    return table;
}

void GeneratorConfig::validate() const {
    shape.validate();
    if (num_prompts < 1) throw ConfigError("num_prompts must be >= 1");
    if (tokens_per_prompt < 1) throw ConfigError("tokens_per_prompt must be >= 1");
    if (hot_set_size < shape.top_k || hot_set_size > shape.num_experts)
        throw ConfigError("hot_set_size must be in [top_k, num_experts], got " + std::to_string(hot_set_size));
    if (!(skew >= 0.0 && skew <= 1.0)) throw ConfigError("skew must be in [0, 1]");
    if (num_topics < 0) throw ConfigError("num_topics must be >= 0");
}

namespace {

using HotSets = std::vector<std::vector<ExpertId>>;  // one per layer

HotSets draw_hot_sets(Rng& rng, const GeneratorConfig& c, const std::vector<ExpertId>& all) {
    HotSets hot(static_cast<std::size_t>(c.shape.num_layers));
    for (auto& h : hot) h = rng.sample(all, static_cast<std::size_t>(c.hot_set_size));
    return hot;
}

}  // namespace

std::vector<PromptTrace> generate_synthetic(const GeneratorConfig& c) {
    c.validate();
    std::vector<ExpertId> all(static_cast<std::size_t>(c.shape.num_experts));
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<ExpertId>(i);

    // Topic tables come from a stream no prompt id can reach.
    std::vector<HotSets> topics;
    if (c.num_topics > 0) {
        Rng topic_rng = Rng::split(c.seed, ~std::uint64_t{0});
        for (int i = 0; i < c.num_topics; ++i) topics.push_back(draw_hot_sets(topic_rng, c, all));
    }

    const auto k = static_cast<std::size_t>(c.shape.top_k);
    std::vector<PromptTrace> out;
    out.reserve(static_cast<std::size_t>(c.num_prompts));
    for (int p = 0; p < c.num_prompts; ++p) {
        const std::uint64_t prompt_id = c.first_prompt_id + static_cast<std::uint64_t>(p);
        Rng rng = Rng::split(c.seed, prompt_id);
        const HotSets hot = topics.empty() ? draw_hot_sets(rng, c, all) : topics[rng.below(topics.size())];

        PromptTrace trace;
        trace.prompt_id = prompt_id;
        trace.records.reserve(static_cast<std::size_t>(c.tokens_per_prompt) * static_cast<std::size_t>(c.shape.num_layers));
        for (int t = 0; t < c.tokens_per_prompt; ++t) {
            const auto token_id = static_cast<std::int64_t>(rng.below(kVocabularySize));
            for (LayerId l = 0; l < c.shape.num_layers; ++l) {
                TokenRecord r;
                r.prompt_id = prompt_id;
                r.token_index = static_cast<std::uint64_t>(t);
                r.layer_id = l;
                r.token_id = token_id;
                const bool from_hot = rng.uniform() < c.skew;
                r.expert_ids = rng.sample(from_hot ? hot[static_cast<std::size_t>(l)] : all, k);
                std::sort(r.expert_ids.begin(), r.expert_ids.end());
                trace.records.push_back(std::move(r));
            }
        }
        out.push_back(std::move(trace));
    }
    return out;
}

}  // namespace moesim
