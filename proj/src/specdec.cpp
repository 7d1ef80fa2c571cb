#include "quasar/specdec.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <string>

#include "quasar/numerics.hpp"

namespace quasar {

Distribution residual_distribution(const Distribution& p, const Distribution& q) {
    if (p.size() != q.size())
        throw shape_error("residual_distribution: vocab " + std::to_string(p.size()) + " vs " +
                          std::to_string(q.size()));
    std::vector<double> r(p.size());
    double mass = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        r[i] = std::max(0.0, p[i] - q[i]);
        mass += r[i];
    }
    if (mass <= 0.0)
        throw domain_error("residual_distribution: p equals q, residual is degenerate");
    return Distribution(std::move(r));
}

VerificationOutcome verify_and_accept(std::span<const Distribution> p_list,
                                      const DraftProposal& proposal,
                                      const SamplingConfig& sampling, PhiloxRng& rng) {
    size_t n_draft = proposal.tokens.size();
    if (p_list.size() != n_draft + 1)
        throw shape_error("verify_and_accept: " + std::to_string(p_list.size()) +
                          " distributions for " + std::to_string(n_draft) + " draft tokens");
    bool greedy = sampling.temperature == 0.0;

    VerificationOutcome out;
    for (size_t i = 0; i < n_draft; ++i) {
        Token drafted = proposal.tokens[i];
        const Distribution& p = p_list[i];
        if (drafted < 0 || static_cast<size_t>(drafted) >= p.size())
            throw vocab_error("verify_and_accept: draft token outside vocab");

        bool accept;
        if (greedy) {
            accept = drafted == p.argmax();
        } else {
            // one-hot q: min(1, p/q) at the drafted token is just p
            accept = rng.next_double() < p[static_cast<size_t>(drafted)];
        }
        if (accept) {
            ++out.n_accepted;
            out.emitted.push_back(drafted);
            continue;
        }
        out.rejection_index = static_cast<int>(i);
        Token corrective;
        if (greedy) {
            corrective = p.argmax();
        } else {
            Distribution residual =
                residual_distribution(p, Distribution::one_hot(p.size(), drafted));
            corrective = sample(residual, rng);
        }
        out.corrective_token = corrective;
        out.emitted.push_back(corrective);
        return out;
    }

    const Distribution& p_bonus = p_list[n_draft];
    Token bonus = greedy ? p_bonus.argmax() : sample(p_bonus, rng);
    out.bonus_token = bonus;
    out.emitted.push_back(bonus);
    return out;
}

// ---- generation loops --------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// Shared engine. The context always satisfies: cache length == emitted
// context length - 1; the final context token is "pending" and gets
// re-forwarded at the start of the next step, which is what makes rollback
// after a rejection trivial.
struct DraftCallbacks {
    // returns the proposal for the current context
    std::function<DraftProposal(std::span<const Token> context)> propose;
    // invoked after each step so a stateful drafter can roll back with us
    std::function<void(const std::vector<Token>& context)> sync;
};

GenerateResult generate_loop(const Verifier& verifier, std::span<const Token> prompt,
                             int max_new_tokens, const SamplingConfig& sampling,
                             const DraftCallbacks* draft) {
    const ModelConfig& cfg = verifier.config();
    if (prompt.empty()) throw input_error("generate: empty prompt");
    if (max_new_tokens < 1) throw range_error("generate: max_new_tokens must be >= 1");
    if (static_cast<int>(prompt.size()) + max_new_tokens > cfg.max_seq_len)
        throw capacity_error("generate: prompt of " + std::to_string(prompt.size()) + " + " +
                             std::to_string(max_new_tokens) + " new tokens exceeds max_seq_len " +
                             std::to_string(cfg.max_seq_len));
    if (sampling.temperature < 0.0 || !std::isfinite(sampling.temperature))
        throw range_error("generate: temperature must be finite and >= 0");

    auto run_start = Clock::now();
    GenerateResult result;
    DecodeMetrics& m = result.metrics;
    PhiloxRng rng(sampling.seed);
    KVCache cache(cfg);
    ByteCounter bytes;

    std::vector<Token> context(prompt.begin(), prompt.end());
    // prefill everything but the last prompt token; that one stays pending
    if (prompt.size() > 1)
        verifier.forward_block(prompt.subspan(0, prompt.size() - 1), cache, &bytes);
    uint64_t prefill_bytes = bytes.total();

    double draft_s = 0.0, verify_s = 0.0;
    while (m.total_tokens < static_cast<uint64_t>(max_new_tokens)) {
        // draft
        DraftProposal proposal;
        if (draft) {
            auto t0 = Clock::now();
            proposal = draft->propose(context);
            draft_s += seconds_since(t0);
        }
        // clamp so the verify block fits in the cache
        int room = cfg.max_seq_len - cache.len() - 1;
        if (static_cast<int>(proposal.tokens.size()) > room)
            proposal.tokens.resize(static_cast<size_t>(std::max(0, room)));
        // drafting past max_new_tokens is wasted work; the surplus would be
        // truncated below anyway
        uint64_t remaining = static_cast<uint64_t>(max_new_tokens) - m.total_tokens;
        if (proposal.tokens.size() > remaining)
            proposal.tokens.resize(static_cast<size_t>(remaining));

        // verify: one forward over [pending, draft...]
        auto t1 = Clock::now();
        std::vector<Token> block;
        block.reserve(proposal.tokens.size() + 1);
        block.push_back(context.back());
        block.insert(block.end(), proposal.tokens.begin(), proposal.tokens.end());
        LogitsBlock logits = verifier.forward_block(block, cache, &bytes);

        std::vector<Distribution> p_list;
        p_list.reserve(static_cast<size_t>(logits.rows));
        for (int i = 0; i < logits.rows; ++i)
            p_list.push_back(softmax_temperature(logits.row(i), sampling.temperature));
        VerificationOutcome outcome = verify_and_accept(p_list, proposal, sampling, rng);
        verify_s += seconds_since(t1);

        ++m.steps;
        m.drafted_tokens += proposal.tokens.size();
        m.accepted_tokens += static_cast<uint64_t>(outcome.n_accepted);

        // truncate the final step's surplus, always keeping at least one token
        if (outcome.emitted.size() > remaining)
            outcome.emitted.resize(static_cast<size_t>(remaining));
        m.total_tokens += outcome.emitted.size();
        for (Token t : outcome.emitted) {
            context.push_back(t);
            result.tokens.push_back(t);
        }
        // roll back to the accepted frontier; the new final token is pending
        cache.truncate(static_cast<int>(context.size()) - 1);
        if (draft) {
            result.step_outcomes.push_back(std::move(outcome));
            if (draft->sync) draft->sync(context);
        }
    }

    m.weight_bytes_loaded = bytes.total() - prefill_bytes;
    m.mean_acceptance_length =
        m.steps > 0 ? static_cast<double>(m.total_tokens) / static_cast<double>(m.steps) : 0.0;
    m.acceptance_rate = m.drafted_tokens > 0 ? static_cast<double>(m.accepted_tokens) /
                                                   static_cast<double>(m.drafted_tokens)
                                             : 0.0;
    m.draft_time_s = draft_s;
    m.verify_time_s = verify_s;
    double total_s = seconds_since(run_start);
    m.other_time_s = std::max(0.0, total_s - draft_s - verify_s);
    m.tokens_per_second = total_s > 0.0 ? static_cast<double>(m.total_tokens) / total_s : 0.0;
    return result;
}

}  // namespace

GenerateResult vanilla_generate(const Verifier& verifier, std::span<const Token> prompt,
                                int max_new_tokens, const SamplingConfig& sampling) {
    return generate_loop(verifier, prompt, max_new_tokens, sampling, nullptr);
}

GenerateResult speculative_generate(const Verifier& verifier, const DrafterConfig& drafter,
                                    std::span<const Token> prompt, int max_new_tokens,
                                    const SamplingConfig& sampling) {
    drafter.validate();
    DraftCallbacks cb;
    cb.propose = [&drafter](std::span<const Token> context) {
        return propose(context, drafter);
    };
    return generate_loop(verifier, prompt, max_new_tokens, sampling, &cb);
}

GenerateResult speculative_generate_with_draft_model(const Verifier& verifier,
                                                     const ModelWeights& draft_model,
                                                     int gamma,
                                                     std::span<const Token> prompt,
                                                     int max_new_tokens,
                                                     const SamplingConfig& sampling) {
    if (gamma < 1) throw range_error("generate: gamma must be >= 1");
    draft_model.validate();
    if (draft_model.config.vocab_size != verifier.config().vocab_size)
        throw config_error("draft model vocab differs from verifier vocab");

    KVCache draft_cache(draft_model.config);
    DraftCallbacks cb;
    cb.propose = [&](std::span<const Token> context) {
        DraftProposal proposal;
        int want_cache = static_cast<int>(context.size()) - 1;
        if (draft_cache.len() > want_cache) draft_cache.truncate(want_cache);
        // catch up on context the draft model has not seen yet, except the
        // pending token which starts the greedy chain
        if (draft_cache.len() < want_cache)
            forward(draft_model, context.subspan(static_cast<size_t>(draft_cache.len()),
                                                 static_cast<size_t>(want_cache) -
                                                     static_cast<size_t>(draft_cache.len())),
                    draft_cache);
        Token cursor = context.back();
        for (int i = 0; i < gamma; ++i) {
            if (draft_cache.len() + 1 > draft_model.config.max_seq_len) break;
            LogitsBlock logits = forward(draft_model, std::span<const Token>(&cursor, 1),
                                         draft_cache);
            cursor = static_cast<Token>(
                softmax_temperature(logits.row(0), 0.0).argmax());
            proposal.tokens.push_back(cursor);
        }
        return proposal;
    };
    cb.sync = [&](const std::vector<Token>& context) {
        int want_cache = static_cast<int>(context.size()) - 1;
        if (draft_cache.len() > want_cache) draft_cache.truncate(want_cache);
    };
    return generate_loop(verifier, prompt, max_new_tokens, sampling, &cb);
}

// ---- analytic oracle ----------------------------------------------------------

std::map<std::vector<Token>, double> step_output_distribution(
    std::span<const Distribution> p_list, std::span<const Distribution> q_list) {
    if (p_list.size() != q_list.size() + 1)
        throw shape_error("step_output_distribution: need one more p than q");
    if (q_list.size() > static_cast<size_t>(kOracleMaxGamma))
        throw capacity_error("step_output_distribution: gamma > " +
                             std::to_string(kOracleMaxGamma));
    size_t vocab = p_list[0].size();
    if (vocab > static_cast<size_t>(kOracleMaxVocab))
        throw capacity_error("step_output_distribution: vocab > " +
                             std::to_string(kOracleMaxVocab));
    for (const Distribution& p : p_list)
        if (p.size() != vocab) throw shape_error("step_output_distribution: vocab mismatch");
    for (const Distribution& q : q_list)
        if (q.size() != vocab) throw shape_error("step_output_distribution: vocab mismatch");

    std::map<std::vector<Token>, double> out;
    std::vector<Token> prefix;

    // walk the accept tree: at position i the drafter draws t ~ q_i, the
    // verifier accepts with min(1, p_i(t)/q_i(t)); rejection emits from the
    // residual and stops; surviving all positions emits from p_{gamma+1}
    std::function<void(size_t, double)> recurse = [&](size_t i, double prob) {
        if (i == q_list.size()) {
            const Distribution& bonus = p_list[i];
            for (size_t t = 0; t < vocab; ++t) {
                if (bonus[t] <= 0.0) continue;
                prefix.push_back(static_cast<Token>(t));
                out[prefix] += prob * bonus[t];
                prefix.pop_back();
            }
            return;
        }
        const Distribution& p = p_list[i];
        const Distribution& q = q_list[i];

        // rejection mass and the residual depend only on (p, q), not on t
        double reject_mass = 0.0;
        std::vector<double> residual(vocab);
        double residual_mass = 0.0;
        for (size_t t = 0; t < vocab; ++t) {
            reject_mass += q[t] * (1.0 - std::min(1.0, q[t] > 0.0 ? p[t] / q[t] : 1.0));
            residual[t] = std::max(0.0, p[t] - q[t]);
            residual_mass += residual[t];
        }
        if (reject_mass > 0.0 && residual_mass > 0.0) {
            for (size_t t = 0; t < vocab; ++t) {
                if (residual[t] <= 0.0) continue;
                prefix.push_back(static_cast<Token>(t));
                out[prefix] += prob * reject_mass * residual[t] / residual_mass;
                prefix.pop_back();
            }
        }
        for (size_t t = 0; t < vocab; ++t) {
            if (q[t] <= 0.0) continue;
            double accept = std::min(1.0, p[t] / q[t]);
            if (accept <= 0.0) continue;
            prefix.push_back(static_cast<Token>(t));
            recurse(i + 1, prob * q[t] * accept);
            prefix.pop_back();
        }
    };
    recurse(0, 1.0);
    return out;
}

std::vector<double> step_marginal(const std::map<std::vector<Token>, double>& dist,
                                  size_t position, int vocab_size) {
    std::vector<double> marginal(static_cast<size_t>(vocab_size), 0.0);
    double mass = 0.0;
    for (const auto& [seq, prob] : dist) {
        if (seq.size() <= position) continue;
        marginal[static_cast<size_t>(seq[position])] += prob;
        mass += prob;
    }
    if (mass > 0.0)
        for (double& v : marginal) v /= mass;
    return marginal;
}

}  // namespace quasar
