#pragma once

// Internal: the transformer forward skeleton shared by the f32 and the
// quantized model. All structure (norm placement, rope, causal attention,
// residual wiring) lives here exactly once; the two models differ only in
// how a linear layer is applied.

#include <functional>
#include <span>
#include <vector>

#include "quasar/model.hpp"

namespace quasar::detail {

struct ForwardPlan {
    const ModelConfig* config = nullptr;
    const MatrixF* token_embedding = nullptr;
    std::vector<const std::vector<float>*> attn_norms;  // per layer
    std::vector<const std::vector<float>*> mlp_norms;   // per layer
    const std::vector<float>* final_norm = nullptr;
    // input: tokens x d_in activations; returns tokens x d_out
    std::function<MatrixF(int layer, LinearKind kind, const MatrixF& x)> linear;
    ForwardObserver* observer = nullptr;
};

MatrixF run_transformer(const ForwardPlan& plan, std::span<const Token> tokens,
                        KVCache& cache);

}  // namespace quasar::detail
