#include "quasar/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "quasar/rng.hpp"
#include "transformer.hpp"

namespace quasar {

void ModelConfig::validate() const {
    if (vocab_size < 2) throw config_error("config: vocab_size must be >= 2");
    if (d_model < 1) throw config_error("config: d_model must be positive");
    if (n_layers < 1) throw config_error("config: n_layers must be positive");
    if (n_heads < 1) throw config_error("config: n_heads must be positive");
    if (d_ff < 1) throw config_error("config: d_ff must be positive");
    if (max_seq_len < 1) throw config_error("config: max_seq_len must be positive");
    if (d_model % n_heads != 0)
        throw config_error("config: d_model " + std::to_string(d_model) +
                           " not divisible by n_heads " + std::to_string(n_heads));
}

namespace {

void check_shape(const MatrixF& m, int rows, int cols, const char* name) {
    if (m.rows != rows || m.cols != cols)
        throw config_error(std::string("weights: ") + name + " has shape " +
                           std::to_string(m.rows) + "x" + std::to_string(m.cols) +
                           ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
}

void check_vec(const std::vector<float>& v, size_t n, const char* name) {
    if (v.size() != n)
        throw config_error(std::string("weights: ") + name + " has " +
                           std::to_string(v.size()) + " entries, expected " + std::to_string(n));
}

}  // namespace

void ModelWeights::validate() const {
    config.validate();
    int d = config.d_model;
    check_shape(token_embedding, config.vocab_size, d, "token_embedding");
    if (static_cast<int>(layers.size()) != config.n_layers)
        throw config_error("weights: layer count mismatch");
    for (const LayerWeights& l : layers) {
        check_vec(l.attn_norm, static_cast<size_t>(d), "attn_norm");
        check_shape(l.wq, d, d, "wq");
        check_shape(l.wk, d, d, "wk");
        check_shape(l.wv, d, d, "wv");
        check_shape(l.wo, d, d, "wo");
        check_vec(l.mlp_norm, static_cast<size_t>(d), "mlp_norm");
        check_shape(l.w_up, config.d_ff, d, "w_up");
        check_shape(l.w_down, d, config.d_ff, "w_down");
    }
    check_vec(final_norm, static_cast<size_t>(d), "final_norm");
    check_shape(output_head, d, config.vocab_size, "output_head");
}

// ---- kv cache --------------------------------------------------------------

KVCache::KVCache(const ModelConfig& config) {
    config.validate();
    max_len_ = config.max_seq_len;
    d_model_ = config.d_model;
    size_t per_layer = static_cast<size_t>(max_len_) * d_model_;
    keys_.assign(static_cast<size_t>(config.n_layers), std::vector<float>(per_layer, 0.0f));
    values_ = keys_;
}

void KVCache::truncate(int new_len) {
    if (new_len < 0 || new_len > len_)
        throw range_error("kv cache: truncate to " + std::to_string(new_len) +
                          " outside [0, " + std::to_string(len_) + "]");
    len_ = new_len;
}

void KVCache::advance(int n) { len_ += n; }

// ---- init ------------------------------------------------------------------

ModelWeights generate_synthetic_weights(const ModelConfig& config, uint64_t seed) {
    config.validate();
    ModelWeights w;
    w.config = config;
    PhiloxRng rng(seed);

    auto fill = [&rng](MatrixF& m, int rows, int cols, double std_dev) {
        m = MatrixF(rows, cols);
        for (float& v : m.data) v = static_cast<float>(rng.next_gaussian() * std_dev);
    };

    int d = config.d_model;
    double scale_in = 1.0 / std::sqrt(static_cast<double>(d));
    double scale_ff = 1.0 / std::sqrt(static_cast<double>(config.d_ff));
    // residual-branch outputs get an extra depth factor, gpt-2 style, so the
    // stream variance stays bounded as layers stack up
    double residual = 1.0 / std::sqrt(2.0 * config.n_layers);

    fill(w.token_embedding, config.vocab_size, d, 1.0);
    w.layers.resize(static_cast<size_t>(config.n_layers));
    for (LayerWeights& l : w.layers) {
        l.attn_norm.assign(static_cast<size_t>(d), 1.0f);
        fill(l.wq, d, d, scale_in);
        fill(l.wk, d, d, scale_in);
        fill(l.wv, d, d, scale_in);
        fill(l.wo, d, d, scale_in * residual);
        l.mlp_norm.assign(static_cast<size_t>(d), 1.0f);
        fill(l.w_up, config.d_ff, d, scale_in);
        fill(l.w_down, d, config.d_ff, scale_ff * residual);
    }
    w.final_norm.assign(static_cast<size_t>(d), 1.0f);
    fill(w.output_head, d, config.vocab_size, scale_in);
    return w;
}

// ---- serialization ----------------------------------------------------------
// layout: "QZR1" | u32 version | u32 x6 config | f32 tensors in a fixed order
// (embedding, per layer: attn_norm wq wk wv wo mlp_norm w_up w_down,
// final norm, output head). little endian throughout.

namespace {

constexpr char kWeightsMagic[4] = {'Q', 'Z', 'R', '1'};
constexpr uint32_t kWeightsVersion = 1;

void write_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& in, const char* what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw format_error(std::string("truncated file reading ") + what);
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
           static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

void write_f32s(std::ostream& out, const float* data, size_t n) {
    static_assert(sizeof(float) == 4);
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 4));
}

void read_f32s(std::istream& in, float* data, size_t n, const char* what) {
    if (!in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * 4)))
        throw format_error(std::string("truncated file reading ") + what);
}

void write_config(std::ostream& out, const ModelConfig& c) {
    write_u32(out, static_cast<uint32_t>(c.vocab_size));
    write_u32(out, static_cast<uint32_t>(c.d_model));
    write_u32(out, static_cast<uint32_t>(c.n_layers));
    write_u32(out, static_cast<uint32_t>(c.n_heads));
    write_u32(out, static_cast<uint32_t>(c.d_ff));
    write_u32(out, static_cast<uint32_t>(c.max_seq_len));
}

ModelConfig read_config(std::istream& in) {
    ModelConfig c;
    c.vocab_size = static_cast<int>(read_u32(in, "config"));
    c.d_model = static_cast<int>(read_u32(in, "config"));
    c.n_layers = static_cast<int>(read_u32(in, "config"));
    c.n_heads = static_cast<int>(read_u32(in, "config"));
    c.d_ff = static_cast<int>(read_u32(in, "config"));
    c.max_seq_len = static_cast<int>(read_u32(in, "config"));
    try {
        c.validate();
    } catch (const config_error& e) {
        throw format_error(std::string("inconsistent header: ") + e.what());
    }
    return c;
}

void check_magic_version(std::istream& in, const char expect[4], const char* kind) {
    char magic[4];
    if (!in.read(magic, 4)) throw format_error(std::string("truncated file reading magic"));
    if (std::memcmp(magic, expect, 4) != 0)
        throw format_error(std::string("bad magic, not a ") + kind + " file");
    uint32_t version = read_u32(in, "version");
    if (version != kWeightsVersion)
        throw format_error("unsupported " + std::string(kind) + " version " +
                           std::to_string(version));
}

void expect_eof(std::istream& in) {
    char extra;
    if (in.read(&extra, 1)) throw format_error("trailing data after payload");
}

}  // namespace

void save_weights(const ModelWeights& w, const std::string& path) {
    w.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open " + path + " for writing");
    out.write(kWeightsMagic, 4);
    write_u32(out, kWeightsVersion);
    write_config(out, w.config);
    write_f32s(out, w.token_embedding.data.data(), w.token_embedding.data.size());
    for (const LayerWeights& l : w.layers) {
        write_f32s(out, l.attn_norm.data(), l.attn_norm.size());
        write_f32s(out, l.wq.data.data(), l.wq.data.size());
        write_f32s(out, l.wk.data.data(), l.wk.data.size());
        write_f32s(out, l.wv.data.data(), l.wv.data.size());
        write_f32s(out, l.wo.data.data(), l.wo.data.size());
        write_f32s(out, l.mlp_norm.data(), l.mlp_norm.size());
        write_f32s(out, l.w_up.data.data(), l.w_up.data.size());
        write_f32s(out, l.w_down.data.data(), l.w_down.data.size());
    }
    write_f32s(out, w.final_norm.data(), w.final_norm.size());
    write_f32s(out, w.output_head.data.data(), w.output_head.data.size());
    if (!out) throw io_error("write failed for " + path);
}

ModelWeights load_weights(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path);
    check_magic_version(in, kWeightsMagic, "weights");
    ModelWeights w;
    w.config = read_config(in);
    int d = w.config.d_model;

    auto read_mat = [&in](MatrixF& m, int rows, int cols, const char* what) {
        m = MatrixF(rows, cols);
        read_f32s(in, m.data.data(), m.data.size(), what);
    };
    auto read_vec = [&in](std::vector<float>& v, size_t n, const char* what) {
        v.assign(n, 0.0f);
        read_f32s(in, v.data(), n, what);
    };

    read_mat(w.token_embedding, w.config.vocab_size, d, "embedding");
    w.layers.resize(static_cast<size_t>(w.config.n_layers));
    for (LayerWeights& l : w.layers) {
        read_vec(l.attn_norm, static_cast<size_t>(d), "attn_norm");
        read_mat(l.wq, d, d, "wq");
        read_mat(l.wk, d, d, "wk");
        read_mat(l.wv, d, d, "wv");
        read_mat(l.wo, d, d, "wo");
        read_vec(l.mlp_norm, static_cast<size_t>(d), "mlp_norm");
        read_mat(l.w_up, w.config.d_ff, d, "w_up");
        read_mat(l.w_down, d, w.config.d_ff, "w_down");
    }
    read_vec(w.final_norm, static_cast<size_t>(d), "final_norm");
    read_mat(w.output_head, d, w.config.vocab_size, "output_head");
    expect_eof(in);
    return w;
}

// ---- forward -----------------------------------------------------------------

LogitsBlock forward(const ModelWeights& w, std::span<const Token> tokens, KVCache& cache,
                    ByteCounter* counter, ForwardObserver* observer) {
    detail::ForwardPlan plan;
    plan.config = &w.config;
    plan.token_embedding = &w.token_embedding;
    plan.final_norm = &w.final_norm;
    for (const LayerWeights& l : w.layers) {
        plan.attn_norms.push_back(&l.attn_norm);
        plan.mlp_norms.push_back(&l.mlp_norm);
    }
    plan.observer = observer;
    plan.linear = [&w, counter](int layer, LinearKind kind, const MatrixF& x) {
        const MatrixF* weight = nullptr;
        if (kind == LinearKind::head) {
            weight = &w.output_head;
        } else {
            const LayerWeights& l = w.layers[static_cast<size_t>(layer)];
            switch (kind) {
                case LinearKind::wq: weight = &l.wq; break;
                case LinearKind::wk: weight = &l.wk; break;
                case LinearKind::wv: weight = &l.wv; break;
                case LinearKind::wo: weight = &l.wo; break;
                case LinearKind::w_up: weight = &l.w_up; break;
                case LinearKind::w_down: weight = &l.w_down; break;
                default: break;
            }
        }
        if (counter) counter->f32_weight_bytes += weight->data.size() * sizeof(float);
        // head is stored in x out; the rest are out x in
        if (kind == LinearKind::head) return gemm_f(x, *weight);
        return gemm_f(x, transpose(*weight));
    };
    return detail::run_transformer(plan, tokens, cache);
}

ModelWeights drop_layers(const ModelWeights& w, double retain_fraction) {
    if (!(retain_fraction > 0.0) || retain_fraction > 1.0)
        throw range_error("drop_layers: retain_fraction must be in (0, 1]");
    w.validate();
    int keep = static_cast<int>(std::llround(retain_fraction * w.config.n_layers));
    keep = std::max(1, std::min(keep, w.config.n_layers));
    ModelWeights out = w;
    out.layers.resize(static_cast<size_t>(keep));
    out.config.n_layers = keep;
    return out;
}

}  // namespace quasar
