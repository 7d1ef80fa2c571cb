#include "quasar/drafter.hpp"

#include <algorithm>

namespace quasar {

DraftProposal propose(std::span<const Token> context, const DrafterConfig& config) {
    config.validate();
    DraftProposal proposal;
    size_t n = context.size();
    for (int k = config.k_max; k >= config.k_min; --k) {
        size_t kk = static_cast<size_t>(k);
        if (n < 2 * kk) continue;  // need the suffix plus a disjoint earlier occurrence
        std::span<const Token> suffix = context.subspan(n - kk, kk);
        // scan most recent first; occurrence must end before the suffix starts
        for (size_t m = n - 2 * kk + 1; m-- > 0;) {
            if (!std::equal(suffix.begin(), suffix.end(), context.begin() + m)) continue;
            proposal.match_len = k;
            proposal.match_pos = static_cast<int64_t>(m);
            size_t start = m + kk;
            size_t len = std::min<size_t>(static_cast<size_t>(config.gamma), n - start);
            proposal.tokens.assign(context.begin() + start, context.begin() + start + len);
            return proposal;
        }
    }
    return proposal;
}

Distribution draft_distribution(const DraftProposal& proposal, int position,
                                int vocab_size) {
    if (position < 0 || static_cast<size_t>(position) >= proposal.tokens.size())
        throw range_error("draft_distribution: position " + std::to_string(position) +
                          " out of range for proposal of " +
                          std::to_string(proposal.tokens.size()) + " tokens");
    return Distribution::one_hot(static_cast<size_t>(vocab_size),
                                 proposal.tokens[static_cast<size_t>(position)]);
}

}  // namespace quasar
