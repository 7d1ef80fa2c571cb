#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "quasar/distribution.hpp"
#include "quasar/drafter.hpp"
#include "quasar/model.hpp"
#include "quasar/quant.hpp"

namespace quasar {

// The speculative decoding loop: draft -> one parallel verifier forward ->
// rejection sampling -> residual resample (or bonus token) -> cache rollback.
// Output distribution is provably identical to the verifier's own sampling
// distribution; step_output_distribution below is the exact oracle used to
// test that claim.

struct SamplingConfig {
    double temperature = 0.0;
    uint64_t seed = 0;
};

struct VerificationOutcome {
    int n_accepted = 0;                     // in [0, |draft|]
    std::vector<Token> emitted;             // accepted prefix + one final token
    std::optional<int> rejection_index;     // index into proposal.tokens, if rejected
    std::optional<Token> corrective_token;  // set on rejection
    std::optional<Token> bonus_token;       // set when every draft was accepted
};

struct DecodeMetrics {
    uint64_t steps = 0;         // decode verifier passes (prefill excluded)
    uint64_t total_tokens = 0;  // newly generated tokens
    double mean_acceptance_length = 0.0;  // L = total_tokens / steps
    double acceptance_rate = 0.0;         // alpha = accepted / proposed drafts
    uint64_t drafted_tokens = 0;
    uint64_t accepted_tokens = 0;
    double draft_time_s = 0.0;
    double verify_time_s = 0.0;
    double other_time_s = 0.0;  // prefill, sampling, bookkeeping
    uint64_t weight_bytes_loaded = 0;  // decode-phase weight traffic
    double tokens_per_second = 0.0;
};

// dispatches to forward() or quantized_forward(); non-owning
class Verifier {
  public:
    explicit Verifier(const ModelWeights& w) : fp_(&w) {}
    explicit Verifier(const QuantizedModel& qm) : q_(&qm) {}

    const ModelConfig& config() const { return fp_ ? fp_->config : q_->config; }
    bool quantized() const { return q_ != nullptr; }

    LogitsBlock forward_block(std::span<const Token> tokens, KVCache& cache,
                              ByteCounter* counter = nullptr) const {
        return fp_ ? forward(*fp_, tokens, cache, counter)
                   : quantized_forward(*q_, tokens, cache, counter);
    }

  private:
    const ModelWeights* fp_ = nullptr;
    const QuantizedModel* q_ = nullptr;
};

struct GenerateResult {
    std::vector<Token> tokens;  // generated tokens only, prompt not included
    DecodeMetrics metrics;
    std::vector<VerificationOutcome> step_outcomes;  // speculative runs only
};

// norm(max(0, p - q)), the corrective distribution after a rejection.
// Throws domain_error when p == q (rejection there has probability zero).
Distribution residual_distribution(const Distribution& p, const Distribution& q);

// One verification round. p_list must hold |proposal| + 1 distributions: one
// per draft position plus the bonus position. q is one-hot at each drafted
// token. temperature == 0 uses the greedy limit (accept iff draft == argmax)
// and consumes no randomness.
VerificationOutcome verify_and_accept(std::span<const Distribution> p_list,
                                      const DraftProposal& proposal,
                                      const SamplingConfig& sampling, PhiloxRng& rng);

GenerateResult speculative_generate(const Verifier& verifier, const DrafterConfig& drafter,
                                    std::span<const Token> prompt, int max_new_tokens,
                                    const SamplingConfig& sampling);

// drafts with a second (smaller) model decoding greedily instead of n-gram
// lookup; verification is unchanged
GenerateResult speculative_generate_with_draft_model(const Verifier& verifier,
                                                     const ModelWeights& draft_model,
                                                     int gamma,
                                                     std::span<const Token> prompt,
                                                     int max_new_tokens,
                                                     const SamplingConfig& sampling);

GenerateResult vanilla_generate(const Verifier& verifier, std::span<const Token> prompt,
                                int max_new_tokens, const SamplingConfig& sampling);

// Exact distribution over the token sequences one verification step can emit,
// with r integrated out analytically. q_list may be any distributions (not
// just one-hot). Tractable only for small vocab / short drafts.
std::map<std::vector<Token>, double> step_output_distribution(
    std::span<const Distribution> p_list, std::span<const Distribution> q_list);
constexpr int kOracleMaxVocab = 16;
constexpr int kOracleMaxGamma = 3;

// P(emitted[position] = t | emitted length > position) from an oracle result
std::vector<double> step_marginal(const std::map<std::vector<Token>, double>& dist,
                                  size_t position, int vocab_size);

}  // namespace quasar
