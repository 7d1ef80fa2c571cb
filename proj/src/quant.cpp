#include "quasar/quant.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "transformer.hpp"

namespace quasar {

namespace {

int kind_index(LinearKind kind) {
    switch (kind) {
        case LinearKind::wq: return 0;
        case LinearKind::wk: return 1;
        case LinearKind::wv: return 2;
        case LinearKind::wo: return 3;
        case LinearKind::w_up: return 4;
        case LinearKind::w_down: return 5;
        case LinearKind::head: return -1;
    }
    return -1;
}

int linear_input_dim(const ModelConfig& c, int kind_idx) {
    return kind_idx == 5 ? c.d_ff : c.d_model;  // only w_down reads d_ff wide
}

// observer that folds per-channel |x| maxima into CalibrationStats
struct StatsObserver : ForwardObserver {
    CalibrationStats* stats;
    explicit StatsObserver(CalibrationStats* s) : stats(s) {}

    void on_linear_input(int layer, LinearKind kind, const MatrixF& input) override {
        LinearStats& ls = kind == LinearKind::head
                              ? stats->head
                              : stats->layers[static_cast<size_t>(layer)]
                                    [static_cast<size_t>(kind_index(kind))];
        for (int i = 0; i < input.rows; ++i)
            for (int j = 0; j < input.cols; ++j) {
                float a = std::fabs(input.at(i, j));
                float& m = ls.max_abs[static_cast<size_t>(j)];
                if (a > m) m = a;
            }
    }
};

// per-input-channel |W| maxima of a weight stored d_out x d_in
std::vector<float> weight_column_max(const MatrixF& w) {
    std::vector<float> m(static_cast<size_t>(w.cols), 0.0f);
    for (int i = 0; i < w.rows; ++i)
        for (int j = 0; j < w.cols; ++j)
            m[static_cast<size_t>(j)] = std::max(m[static_cast<size_t>(j)],
                                                 std::fabs(w.at(i, j)));
    return m;
}

std::vector<float> smoothing_for(const std::vector<float>& act_max,
                                 const std::vector<float>& w_max, float alpha) {
    std::vector<float> s(act_max.size(), 1.0f);
    for (size_t j = 0; j < act_max.size(); ++j) {
        if (act_max[j] <= 0.0f || w_max[j] <= 0.0f) continue;  // dead channel: identity
        double v = std::pow(static_cast<double>(act_max[j]), static_cast<double>(alpha)) /
                   std::pow(static_cast<double>(w_max[j]), 1.0 - static_cast<double>(alpha));
        s[j] = static_cast<float>(v);
    }
    return s;
}

QuantizedLinear quantize_linear(const MatrixF& w_out_in, std::span<const float> s) {
    if (s.size() != static_cast<size_t>(w_out_in.cols))
        throw shape_error("quantize_linear: smoothing size " + std::to_string(s.size()) +
                          " vs d_in " + std::to_string(w_out_in.cols));
    for (float v : s)
        if (!(v > 0.0f)) throw range_error("quantize_linear: smoothing factors must be positive");

    MatrixF smoothed(w_out_in.rows, w_out_in.cols);
    for (int i = 0; i < w_out_in.rows; ++i)
        for (int j = 0; j < w_out_in.cols; ++j)
            smoothed.at(i, j) = w_out_in.at(i, j) / s[static_cast<size_t>(j)];

    QuantizedLinear ql;
    ql.delta_w = compute_step_size(smoothed, ScaleGranularity::per_row);
    ql.weights = quantize_symmetric(smoothed, ql.delta_w, ScaleGranularity::per_row);
    ql.smoothing.assign(s.begin(), s.end());
    return ql;
}

}  // namespace

CalibrationStats calibrate(const ModelWeights& w,
                           const std::vector<std::vector<Token>>& corpus) {
    w.validate();
    CalibrationStats stats;
    stats.layers.resize(static_cast<size_t>(w.config.n_layers));
    for (auto& layer : stats.layers)
        for (int k = 0; k < kLinearsPerLayer; ++k)
            layer[static_cast<size_t>(k)].max_abs.assign(
                static_cast<size_t>(linear_input_dim(w.config, k)), 0.0f);
    stats.head.max_abs.assign(static_cast<size_t>(w.config.d_model), 0.0f);

    StatsObserver observer(&stats);
    for (const std::vector<Token>& seq : corpus) {
        if (seq.empty()) continue;
        if (static_cast<int>(seq.size()) > w.config.max_seq_len)
            throw capacity_error("calibrate: sequence of " + std::to_string(seq.size()) +
                                 " tokens exceeds max_seq_len");
        KVCache cache(w.config);
        forward(w, seq, cache, nullptr, &observer);
        ++stats.sample_count;
    }
    return stats;
}

SmoothingFactors compute_smoothing(const CalibrationStats& stats, const ModelWeights& w,
                                   float alpha) {
    if (!(alpha >= 0.0f && alpha <= 1.0f))
        throw range_error("compute_smoothing: alpha must be in [0, 1]");
    w.validate();
    if (stats.layers.size() != static_cast<size_t>(w.config.n_layers))
        throw shape_error("compute_smoothing: stats cover " +
                          std::to_string(stats.layers.size()) + " layers, model has " +
                          std::to_string(w.config.n_layers));

    SmoothingFactors out;
    out.alpha = alpha;
    out.layers.resize(stats.layers.size());
    for (size_t l = 0; l < stats.layers.size(); ++l) {
        const LayerWeights& lw = w.layers[l];
        const MatrixF* mats[kLinearsPerLayer] = {&lw.wq, &lw.wk, &lw.wv,
                                                 &lw.wo, &lw.w_up, &lw.w_down};
        for (int k = 0; k < kLinearsPerLayer; ++k) {
            const LinearStats& ls = stats.layers[l][static_cast<size_t>(k)];
            if (ls.max_abs.size() != static_cast<size_t>(mats[k]->cols))
                throw shape_error("compute_smoothing: stats dim mismatch");
            out.layers[l][static_cast<size_t>(k)] =
                smoothing_for(ls.max_abs, weight_column_max(*mats[k]), alpha);
        }
    }
    // head weights are stored in x out; its input channels are the rows
    MatrixF head_t = transpose(w.output_head);
    if (stats.head.max_abs.size() != static_cast<size_t>(head_t.cols))
        throw shape_error("compute_smoothing: head stats dim mismatch");
    out.head = smoothing_for(stats.head.max_abs, weight_column_max(head_t), alpha);
    return out;
}

QuantizedModel smooth_and_quantize(const ModelWeights& w, const SmoothingFactors& s) {
    w.validate();
    if (s.layers.size() != static_cast<size_t>(w.config.n_layers))
        throw shape_error("smooth_and_quantize: smoothing covers " +
                          std::to_string(s.layers.size()) + " layers, model has " +
                          std::to_string(w.config.n_layers));

    QuantizedModel qm;
    qm.config = w.config;
    qm.token_embedding = w.token_embedding;
    qm.final_norm = w.final_norm;
    qm.smoothing_alpha = s.alpha;
    qm.layers.resize(static_cast<size_t>(w.config.n_layers));
    for (size_t l = 0; l < qm.layers.size(); ++l) {
        const LayerWeights& lw = w.layers[l];
        QuantizedLayer& ql = qm.layers[l];
        ql.attn_norm = lw.attn_norm;
        ql.mlp_norm = lw.mlp_norm;
        ql.wq = quantize_linear(lw.wq, s.layers[l][0]);
        ql.wk = quantize_linear(lw.wk, s.layers[l][1]);
        ql.wv = quantize_linear(lw.wv, s.layers[l][2]);
        ql.wo = quantize_linear(lw.wo, s.layers[l][3]);
        ql.w_up = quantize_linear(lw.w_up, s.layers[l][4]);
        ql.w_down = quantize_linear(lw.w_down, s.layers[l][5]);
    }
    // head quantizes in its matmul orientation (d_out=vocab rows)
    qm.head = quantize_linear(transpose(w.output_head), s.head);
    return qm;
}

std::pair<MatrixI8, std::vector<float>> quantize_activations(const MatrixF& x,
                                                             std::span<const float> s) {
    if (s.size() != static_cast<size_t>(x.cols))
        throw shape_error("quantize_activations: smoothing size " + std::to_string(s.size()) +
                          " vs " + std::to_string(x.cols) + " channels");
    for (float v : s)
        if (!(v > 0.0f))
            throw range_error("quantize_activations: smoothing factors must be positive");

    MatrixI8 codes(x.rows, x.cols);
    std::vector<float> delta_x(static_cast<size_t>(x.rows));
    for (int i = 0; i < x.rows; ++i) {
        float m = 0.0f;
        for (int j = 0; j < x.cols; ++j)
            m = std::max(m, std::fabs(x.at(i, j) * s[static_cast<size_t>(j)]));
        float delta = m > 0.0f ? m / 127.0f : 1.0f / 127.0f;
        delta_x[static_cast<size_t>(i)] = delta;
        for (int j = 0; j < x.cols; ++j) {
            float scaled = std::round(x.at(i, j) * s[static_cast<size_t>(j)] / delta);
            scaled = std::clamp(scaled, -127.0f, 127.0f);
            codes.at(i, j) = static_cast<int8_t>(scaled);
        }
    }
    return {std::move(codes), std::move(delta_x)};
}

MatrixF apply_quantized_linear(const QuantizedLinear& ql, const MatrixF& x,
                               ByteCounter* counter) {
    auto [codes, delta_x] = quantize_activations(x, ql.smoothing);
    MatrixI8 xt = transpose(codes);               // d_in x tokens
    MatrixI32 acc = gemm_i8(ql.weights, xt);      // d_out x tokens
    if (counter) counter->int8_weight_bytes += ql.weights.data.size();
    MatrixF y = dequantize(acc, ql.delta_w, delta_x);
    return transpose(y);  // tokens x d_out
}

LogitsBlock quantized_forward(const QuantizedModel& qm, std::span<const Token> tokens,
                              KVCache& cache, ByteCounter* counter) {
    detail::ForwardPlan plan;
    plan.config = &qm.config;
    plan.token_embedding = &qm.token_embedding;
    plan.final_norm = &qm.final_norm;
    for (const QuantizedLayer& l : qm.layers) {
        plan.attn_norms.push_back(&l.attn_norm);
        plan.mlp_norms.push_back(&l.mlp_norm);
    }
    plan.linear = [&qm, counter](int layer, LinearKind kind, const MatrixF& x) {
        const QuantizedLinear* ql = nullptr;
        if (kind == LinearKind::head) {
            ql = &qm.head;
        } else {
            const QuantizedLayer& l = qm.layers[static_cast<size_t>(layer)];
            switch (kind) {
                case LinearKind::wq: ql = &l.wq; break;
                case LinearKind::wk: ql = &l.wk; break;
                case LinearKind::wv: ql = &l.wv; break;
                case LinearKind::wo: ql = &l.wo; break;
                case LinearKind::w_up: ql = &l.w_up; break;
                case LinearKind::w_down: ql = &l.w_down; break;
                default: break;
            }
        }
        return apply_quantized_linear(*ql, x, counter);
    };
    return detail::run_transformer(plan, tokens, cache);
}

// ---- serialization -----------------------------------------------------------
// layout: "QZQ1" | u32 version | u32 x6 config | f32 alpha | per layer:
// attn_norm, four attn linears, mlp_norm, two mlp linears | final norm | head.
// each linear is smoothing (f32 x d_in), delta_w (f32 x d_out), codes
// (i8 x d_out*d_in). embedding stays f32.

namespace {

constexpr char kQuantMagic[4] = {'Q', 'Z', 'Q', '1'};
constexpr uint32_t kQuantVersion = 1;

void write_u32q(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32q(std::istream& in, const char* what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw format_error(std::string("truncated file reading ") + what);
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
           static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

void write_floats(std::ostream& out, const float* p, size_t n) {
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * 4));
}

void read_floats(std::istream& in, float* p, size_t n, const char* what) {
    if (!in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * 4)))
        throw format_error(std::string("truncated file reading ") + what);
}

void write_linear(std::ostream& out, const QuantizedLinear& ql) {
    write_floats(out, ql.smoothing.data(), ql.smoothing.size());
    write_floats(out, ql.delta_w.data(), ql.delta_w.size());
    out.write(reinterpret_cast<const char*>(ql.weights.data.data()),
              static_cast<std::streamsize>(ql.weights.data.size()));
}

QuantizedLinear read_linear(std::istream& in, int d_out, int d_in, const char* what) {
    QuantizedLinear ql;
    ql.smoothing.assign(static_cast<size_t>(d_in), 0.0f);
    read_floats(in, ql.smoothing.data(), ql.smoothing.size(), what);
    ql.delta_w.assign(static_cast<size_t>(d_out), 0.0f);
    read_floats(in, ql.delta_w.data(), ql.delta_w.size(), what);
    ql.weights = MatrixI8(d_out, d_in);
    if (!in.read(reinterpret_cast<char*>(ql.weights.data.data()),
                 static_cast<std::streamsize>(ql.weights.data.size())))
        throw format_error(std::string("truncated file reading ") + what);
    for (float s : ql.smoothing)
        if (!(s > 0.0f)) throw format_error(std::string(what) + ": non-positive smoothing factor");
    for (float d : ql.delta_w)
        if (!(d > 0.0f)) throw format_error(std::string(what) + ": non-positive step size");
    return ql;
}

}  // namespace

void save_quantized(const QuantizedModel& qm, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open " + path + " for writing");
    out.write(kQuantMagic, 4);
    write_u32q(out, kQuantVersion);
    write_u32q(out, static_cast<uint32_t>(qm.config.vocab_size));
    write_u32q(out, static_cast<uint32_t>(qm.config.d_model));
    write_u32q(out, static_cast<uint32_t>(qm.config.n_layers));
    write_u32q(out, static_cast<uint32_t>(qm.config.n_heads));
    write_u32q(out, static_cast<uint32_t>(qm.config.d_ff));
    write_u32q(out, static_cast<uint32_t>(qm.config.max_seq_len));
    write_floats(out, &qm.smoothing_alpha, 1);
    write_floats(out, qm.token_embedding.data.data(), qm.token_embedding.data.size());
    for (const QuantizedLayer& l : qm.layers) {
        write_floats(out, l.attn_norm.data(), l.attn_norm.size());
        write_linear(out, l.wq);
        write_linear(out, l.wk);
        write_linear(out, l.wv);
        write_linear(out, l.wo);
        write_floats(out, l.mlp_norm.data(), l.mlp_norm.size());
        write_linear(out, l.w_up);
        write_linear(out, l.w_down);
    }
    write_floats(out, qm.final_norm.data(), qm.final_norm.size());
    write_linear(out, qm.head);
    if (!out) throw io_error("write failed for " + path);
}

QuantizedModel load_quantized(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path);
    char magic[4];
    if (!in.read(magic, 4)) throw format_error("truncated file reading magic");
    if (std::memcmp(magic, kQuantMagic, 4) != 0)
        throw format_error("bad magic, not a quantized model file");
    uint32_t version = read_u32q(in, "version");
    if (version != kQuantVersion)
        throw format_error("unsupported quantized model version " + std::to_string(version));

    QuantizedModel qm;
    qm.config.vocab_size = static_cast<int>(read_u32q(in, "config"));
    qm.config.d_model = static_cast<int>(read_u32q(in, "config"));
    qm.config.n_layers = static_cast<int>(read_u32q(in, "config"));
    qm.config.n_heads = static_cast<int>(read_u32q(in, "config"));
    qm.config.d_ff = static_cast<int>(read_u32q(in, "config"));
    qm.config.max_seq_len = static_cast<int>(read_u32q(in, "config"));
    try {
        qm.config.validate();
    } catch (const config_error& e) {
        throw format_error(std::string("inconsistent header: ") + e.what());
    }
    read_floats(in, &qm.smoothing_alpha, 1, "alpha");

    int d = qm.config.d_model;
    qm.token_embedding = MatrixF(qm.config.vocab_size, d);
    read_floats(in, qm.token_embedding.data.data(), qm.token_embedding.data.size(), "embedding");
    qm.layers.resize(static_cast<size_t>(qm.config.n_layers));
    for (QuantizedLayer& l : qm.layers) {
        l.attn_norm.assign(static_cast<size_t>(d), 0.0f);
        read_floats(in, l.attn_norm.data(), l.attn_norm.size(), "attn_norm");
        l.wq = read_linear(in, d, d, "wq");
        l.wk = read_linear(in, d, d, "wk");
        l.wv = read_linear(in, d, d, "wv");
        l.wo = read_linear(in, d, d, "wo");
        l.mlp_norm.assign(static_cast<size_t>(d), 0.0f);
        read_floats(in, l.mlp_norm.data(), l.mlp_norm.size(), "mlp_norm");
        l.w_up = read_linear(in, qm.config.d_ff, d, "w_up");
        l.w_down = read_linear(in, d, qm.config.d_ff, "w_down");
    }
    qm.final_norm.assign(static_cast<size_t>(d), 0.0f);
    read_floats(in, qm.final_norm.data(), qm.final_norm.size(), "final_norm");
    qm.head = read_linear(in, qm.config.vocab_size, d, "head");
    char extra;
    if (in.read(&extra, 1)) throw format_error("trailing data after payload");
    return qm;
}

}  // namespace quasar
