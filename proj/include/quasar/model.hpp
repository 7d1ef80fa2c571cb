#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "quasar/errors.hpp"
#include "quasar/numerics.hpp"

namespace quasar {

using Token = int32_t;

struct ModelConfig {
    int vocab_size = 0;
    int d_model = 0;
    int n_layers = 0;
    int n_heads = 0;
    int d_ff = 0;
    int max_seq_len = 0;

    int head_dim() const { return d_model / n_heads; }
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

struct LayerWeights {
    std::vector<float> attn_norm;  // d_model rmsnorm gains
    MatrixF wq, wk, wv, wo;        // each d_model x d_model, stored out x in
    std::vector<float> mlp_norm;   // d_model
    MatrixF w_up;                  // d_ff x d_model
    MatrixF w_down;                // d_model x d_ff
};

struct ModelWeights {
    ModelConfig config;
    MatrixF token_embedding;  // vocab x d_model
    std::vector<LayerWeights> layers;
    std::vector<float> final_norm;  // d_model
    MatrixF output_head;            // d_model x vocab (note: in x out, unlike the rest)

    void validate() const;
};

// Counts weight bytes streamed through matmuls, split by element width.
// Embedding lookups and norm gains are excluded: the model is linear-weight
// dominated and that is the quantity the bandwidth model cares about.
struct ByteCounter {
    std::atomic<uint64_t> f32_weight_bytes{0};
    std::atomic<uint64_t> int8_weight_bytes{0};

    uint64_t total() const { return f32_weight_bytes + int8_weight_bytes; }
    void reset() {
        f32_weight_bytes = 0;
        int8_weight_bytes = 0;
    }
};

enum class LinearKind { wq, wk, wv, wo, w_up, w_down, head };

// Hook invoked with the input activations of every linear layer during a
// forward pass; this is how calibration observes the model without owning
// a second copy of the forward logic. layer == -1 for the output head.
struct ForwardObserver {
    virtual ~ForwardObserver() = default;
    virtual void on_linear_input(int layer, LinearKind kind, const MatrixF& input) = 0;
};

// Per-layer key/value rows for incremental decoding. Rows are written by
// forward passes and rolled back with truncate() when speculative tokens
// are rejected. Storage is preallocated to max_seq_len.
class KVCache {
  public:
    explicit KVCache(const ModelConfig& config);

    int len() const { return len_; }
    int max_len() const { return max_len_; }
    int n_layers() const { return static_cast<int>(keys_.size()); }

    // drop every entry at position >= new_len
    void truncate(int new_len);

    // -- used by forward implementations --
    float* key_row(int layer, int pos) { return keys_[layer].data() + static_cast<size_t>(pos) * d_model_; }
    float* value_row(int layer, int pos) { return values_[layer].data() + static_cast<size_t>(pos) * d_model_; }
    const float* key_row(int layer, int pos) const { return keys_[layer].data() + static_cast<size_t>(pos) * d_model_; }
    const float* value_row(int layer, int pos) const { return values_[layer].data() + static_cast<size_t>(pos) * d_model_; }
    void advance(int n);  // commit n freshly written rows

  private:
    int len_ = 0;
    int max_len_ = 0;
    int d_model_ = 0;
    std::vector<std::vector<float>> keys_;    // per layer, max_len x d_model
    std::vector<std::vector<float>> values_;  // per layer
};

using LogitsBlock = MatrixF;  // rows = input positions, cols = vocab

// Random init, deterministic in (config, seed). Residual-branch projections
// are scaled down with depth so deep stacks stay stable.
ModelWeights generate_synthetic_weights(const ModelConfig& config, uint64_t seed);

// binary f32 checkpoint, magic "QZR1"
void save_weights(const ModelWeights& w, const std::string& path);
ModelWeights load_weights(const std::string& path);

// One forward pass over `tokens` appended after the cache contents.
// Returns one logit row per input token. Extends the cache by tokens.size().
LogitsBlock forward(const ModelWeights& w, std::span<const Token> tokens, KVCache& cache,
                    ByteCounter* counter = nullptr, ForwardObserver* observer = nullptr);

// Keep the first round(retain_fraction * n_layers) layers (at least one),
// embedding/head/final norm untouched. retain_fraction in (0, 1].
ModelWeights drop_layers(const ModelWeights& w, double retain_fraction);

}  // namespace quasar
