#include "transformer.hpp"

#include <cmath>
#include <string>

namespace quasar::detail {

namespace {

constexpr float kNormEps = 1e-5f;

// rmsnorm with learned gains, row-wise
MatrixF rmsnorm(const MatrixF& x, const std::vector<float>& gains) {
    MatrixF out(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i) {
        double sum_sq = 0.0;
        for (int j = 0; j < x.cols; ++j) {
            double v = x.at(i, j);
            sum_sq += v * v;
        }
        float inv_rms = 1.0f / std::sqrt(static_cast<float>(sum_sq / x.cols) + kNormEps);
        for (int j = 0; j < x.cols; ++j)
            out.at(i, j) = x.at(i, j) * inv_rms * gains[static_cast<size_t>(j)];
    }
    return out;
}

inline float gelu(float x) {
    return 0.5f * x * (1.0f + std::erf(x * 0.70710678118654752f));
}

// rotate adjacent pairs within each head; pos is the absolute position.
// pair i uses theta_i = 10000^(-2i/head_dim). An odd trailing dim (head_dim
// odd) is left unrotated.
void apply_rope(float* row, int d_model, int n_heads, int pos) {
    int head_dim = d_model / n_heads;
    for (int h = 0; h < n_heads; ++h) {
        float* v = row + h * head_dim;
        for (int i = 0; 2 * i + 1 < head_dim; ++i) {
            double theta = std::pow(10000.0, -2.0 * i / head_dim);
            double angle = static_cast<double>(pos) * theta;
            float c = static_cast<float>(std::cos(angle));
            float s = static_cast<float>(std::sin(angle));
            float a = v[2 * i];
            float b = v[2 * i + 1];
            v[2 * i] = a * c - b * s;
            v[2 * i + 1] = a * s + b * c;
        }
    }
}

}  // namespace

MatrixF run_transformer(const ForwardPlan& plan, std::span<const Token> tokens,
                        KVCache& cache) {
    const ModelConfig& cfg = *plan.config;
    int n = static_cast<int>(tokens.size());
    if (n == 0) throw input_error("forward: empty token block");
    int base = cache.len();
    if (base + n > cfg.max_seq_len)
        throw capacity_error("forward: " + std::to_string(base + n) + " tokens exceed max_seq_len " +
                             std::to_string(cfg.max_seq_len));
    for (Token t : tokens)
        if (t < 0 || t >= cfg.vocab_size)
            throw vocab_error("forward: token " + std::to_string(t) + " outside vocab of " +
                              std::to_string(cfg.vocab_size));

    auto apply = [&](int layer, LinearKind kind, const MatrixF& x) {
        if (plan.observer) plan.observer->on_linear_input(layer, kind, x);
        return plan.linear(layer, kind, x);
    };

    // token embedding
    MatrixF x(n, cfg.d_model);
    for (int i = 0; i < n; ++i) {
        std::span<const float> e = plan.token_embedding->row(tokens[static_cast<size_t>(i)]);
        std::copy(e.begin(), e.end(), x.row(i).begin());
    }

    int head_dim = cfg.head_dim();
    float attn_scale = 1.0f / std::sqrt(static_cast<float>(head_dim));

    for (int layer = 0; layer < cfg.n_layers; ++layer) {
        // attention block
        MatrixF normed = rmsnorm(x, *plan.attn_norms[static_cast<size_t>(layer)]);
        MatrixF q = apply(layer, LinearKind::wq, normed);
        MatrixF k = apply(layer, LinearKind::wk, normed);
        MatrixF v = apply(layer, LinearKind::wv, normed);

        for (int i = 0; i < n; ++i) {
            apply_rope(q.row(i).data(), cfg.d_model, cfg.n_heads, base + i);
            apply_rope(k.row(i).data(), cfg.d_model, cfg.n_heads, base + i);
            std::copy(k.row(i).begin(), k.row(i).end(), cache.key_row(layer, base + i));
            std::copy(v.row(i).begin(), v.row(i).end(), cache.value_row(layer, base + i));
        }

        MatrixF attn_out(n, cfg.d_model);
        std::vector<float> scores;
        for (int i = 0; i < n; ++i) {
            int ctx = base + i + 1;  // causal: attend to positions [0, base+i]
            scores.resize(static_cast<size_t>(ctx));
            for (int h = 0; h < cfg.n_heads; ++h) {
                const float* qv = q.row(i).data() + h * head_dim;
                float max_score = -1e30f;
                for (int j = 0; j < ctx; ++j) {
                    const float* kv = cache.key_row(layer, j) + h * head_dim;
                    float dot = 0.0f;
                    for (int t = 0; t < head_dim; ++t) dot += qv[t] * kv[t];
                    float s = dot * attn_scale;
                    scores[static_cast<size_t>(j)] = s;
                    if (s > max_score) max_score = s;
                }
                float denom = 0.0f;
                for (int j = 0; j < ctx; ++j) {
                    float e = std::exp(scores[static_cast<size_t>(j)] - max_score);
                    scores[static_cast<size_t>(j)] = e;
                    denom += e;
                }
                float inv_denom = 1.0f / denom;
                float* out = attn_out.row(i).data() + h * head_dim;
                for (int j = 0; j < ctx; ++j) {
                    float wgt = scores[static_cast<size_t>(j)] * inv_denom;
                    const float* vv = cache.value_row(layer, j) + h * head_dim;
                    for (int t = 0; t < head_dim; ++t) out[t] += wgt * vv[t];
                }
            }
        }

        MatrixF proj = apply(layer, LinearKind::wo, attn_out);
        for (size_t idx = 0; idx < x.data.size(); ++idx) x.data[idx] += proj.data[idx];

        // mlp block
        MatrixF normed2 = rmsnorm(x, *plan.mlp_norms[static_cast<size_t>(layer)]);
        MatrixF up = apply(layer, LinearKind::w_up, normed2);
        for (float& u : up.data) u = gelu(u);
        MatrixF down = apply(layer, LinearKind::w_down, up);
        for (size_t idx = 0; idx < x.data.size(); ++idx) x.data[idx] += down.data[idx];
    }

    cache.advance(n);

    MatrixF fin = rmsnorm(x, *plan.final_norm);
    return apply(-1, LinearKind::head, fin);
}

}  // namespace quasar::detail
