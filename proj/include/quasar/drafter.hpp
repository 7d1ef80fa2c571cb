#pragma once

#include <span>
#include <vector>

#include "quasar/distribution.hpp"
#include "quasar/errors.hpp"
#include "quasar/model.hpp"

namespace quasar {

// Prompt-lookup drafting: find the longest recent n-gram match of the
// context suffix and propose the tokens that followed it last time. Free:
// no model call, and the implied proposal distribution is one-hot.

struct DrafterConfig {
    int k_min = 1;
    int k_max = 4;
    int gamma = 5;  // max tokens proposed per step

    void validate() const {
        if (k_min < 1) throw range_error("drafter: k_min must be >= 1");
        if (k_max < k_min) throw range_error("drafter: k_max must be >= k_min");
        if (gamma < 1) throw range_error("drafter: gamma must be >= 1");
    }
};

struct DraftProposal {
    std::vector<Token> tokens;  // up to gamma continuation tokens
    int match_len = 0;          // n-gram length that matched, 0 if none
    int match_pos = -1;         // start of the matched occurrence in context

    bool empty() const { return tokens.empty(); }
};

// Scan k from k_max down to k_min; for each k find the most recent earlier
// occurrence of the length-k context suffix, and take the tokens that follow
// it (at most gamma, clipped at the end of the context). Self-match of the
// suffix with itself does not count.
DraftProposal propose(std::span<const Token> context, const DrafterConfig& config);

// the drafter's implied per-position distribution: one-hot at the proposal
Distribution draft_distribution(const DraftProposal& proposal, int position,
                                int vocab_size);

}  // namespace quasar
