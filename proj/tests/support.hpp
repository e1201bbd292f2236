#pragma once

#include <vector>

#include "moesim/core.hpp"

namespace moesim::testing {

// tokens[t][l] is the expert set of token t at layer l.
inline PromptTrace make_trace(std::uint64_t prompt_id, const std::vector<std::vector<std::vector<ExpertId>>>& tokens) {
    PromptTrace trace;
    trace.prompt_id = prompt_id;
    for (std::size_t t = 0; t < tokens.size(); ++t)
        for (std::size_t l = 0; l < tokens[t].size(); ++l) {
            TokenRecord r;
            r.prompt_id = prompt_id;
            r.token_index = t;
            r.layer_id = static_cast<LayerId>(l);
            r.expert_ids = tokens[t][l];
            trace.records.push_back(r);
        }
    return trace;
}

}  // namespace moesim::testing
