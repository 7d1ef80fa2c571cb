#pragma once

#include <array>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "quasar/model.hpp"
#include "quasar/numerics.hpp"

namespace quasar {

// W8A8 post-training quantization with activation-aware smoothing: per input
// channel j, s_j = max|X_j|^alpha / max|W_j|^(1-alpha). Weight columns are
// divided by s offline; activations are multiplied by s on the fly while
// being quantized, so the float product is unchanged and outlier channels
// move from the (hard) activation side to the (easy) weight side.

// running per-input-channel |activation| maxima for one linear layer
struct LinearStats {
    std::vector<float> max_abs;
};

// index by [layer][kind] for the six in-layer linears, plus the head
constexpr int kLinearsPerLayer = 6;  // wq wk wv wo w_up w_down

struct CalibrationStats {
    std::vector<std::array<LinearStats, kLinearsPerLayer>> layers;
    LinearStats head;
    uint64_t sample_count = 0;  // sequences observed
};

struct SmoothingFactors {
    std::vector<std::array<std::vector<float>, kLinearsPerLayer>> layers;
    std::vector<float> head;
    float alpha = 0.5f;  // recorded so checkpoints are self-describing
};

struct QuantizedLinear {
    MatrixI8 weights;             // d_out x d_in, already smoothed
    std::vector<float> delta_w;   // per output channel
    std::vector<float> smoothing; // per input channel, applied to activations
};

struct QuantizedLayer {
    std::vector<float> attn_norm;
    QuantizedLinear wq, wk, wv, wo;
    std::vector<float> mlp_norm;
    QuantizedLinear w_up, w_down;
};

struct QuantizedModel {
    ModelConfig config;
    MatrixF token_embedding;
    std::vector<QuantizedLayer> layers;
    std::vector<float> final_norm;
    QuantizedLinear head;  // d_out = vocab_size, d_in = d_model
    float smoothing_alpha = 0.5f;
};

// Run the float model over the corpus and record per-channel activation
// maxima at every linear input. Stats only grow: calibrating on more data
// can only widen the ranges.
CalibrationStats calibrate(const ModelWeights& w,
                           const std::vector<std::vector<Token>>& corpus);

// alpha in [0, 1]; channels where either max is zero get s = 1
SmoothingFactors compute_smoothing(const CalibrationStats& stats, const ModelWeights& w,
                                   float alpha);

QuantizedModel smooth_and_quantize(const ModelWeights& w, const SmoothingFactors& s);

// Scale rows by s elementwise, then quantize each row (token) symmetrically.
// Returns the int8 codes and the per-row step sizes.
std::pair<MatrixI8, std::vector<float>> quantize_activations(const MatrixF& x,
                                                             std::span<const float> s);

// one quantized linear: quantize activations, int8 matmul, dequantize
MatrixF apply_quantized_linear(const QuantizedLinear& ql, const MatrixF& x,
                               ByteCounter* counter = nullptr);

// same contract as forward(); int8 weights are the only weight bytes touched
LogitsBlock quantized_forward(const QuantizedModel& qm, std::span<const Token> tokens,
                              KVCache& cache, ByteCounter* counter = nullptr);

// binary checkpoint, magic "QZQ1"
void save_quantized(const QuantizedModel& qm, const std::string& path);
QuantizedModel load_quantized(const std::string& path);

}  // namespace quasar
