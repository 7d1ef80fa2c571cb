#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "quasar/distribution.hpp"
#include "quasar/errors.hpp"

namespace quasar {

// Dense row-major matrices. Everything at this scale fits in memory, so the
// kernels below favor fixed, platform-independent evaluation order over
// speed: no fast-math, no reductions whose order depends on thread count.

struct MatrixF {
    int rows = 0;
    int cols = 0;
    std::vector<float> data;

    MatrixF() = default;
    MatrixF(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0f) {}

    float& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    float at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
    std::span<const float> row(int r) const {
        return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)};
    }
    std::span<float> row(int r) {
        return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)};
    }
};

struct MatrixI8 {
    int rows = 0;
    int cols = 0;
    std::vector<int8_t> data;

    MatrixI8() = default;
    MatrixI8(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0) {}

    int8_t& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    int8_t at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
};

struct MatrixI32 {
    int rows = 0;
    int cols = 0;
    std::vector<int32_t> data;

    MatrixI32() = default;
    MatrixI32(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0) {}

    int32_t& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    int32_t at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
};

enum class ScaleGranularity {
    per_tensor,
    per_row,
    per_column,
};

// plain f32 matmul, deterministic accumulation order
MatrixF gemm_f(const MatrixF& a, const MatrixF& b);

// int8 x int8 -> int32 matmul with exact accumulation. The inner dimension
// is capped so 127*127*k cannot overflow i32.
MatrixI32 gemm_i8(const MatrixI8& a, const MatrixI8& b);
constexpr int kGemmI8MaxInnerDim = 130000;

// symmetric uniform quantization step sizes: delta = max|v| / 127 per group,
// with 1/127 substituted for all-zero groups so codes stay well defined
std::vector<float> compute_step_size(const MatrixF& m, ScaleGranularity g);

// q = clamp(round_half_away_from_zero(v / delta), -127, 127)
MatrixI8 quantize_symmetric(const MatrixF& m, std::span<const float> deltas,
                            ScaleGranularity g);

// y[i][k] = c[i][k] * delta_w[i] * delta_x[k]
MatrixF dequantize(const MatrixI32& c, std::span<const float> delta_w,
                   std::span<const float> delta_x);

// temperature softmax over logits, computed in double. temperature == 0 is
// the greedy limit: one-hot at the argmax, lowest index on ties.
Distribution softmax_temperature(std::span<const float> logits, double temperature);

MatrixF transpose(const MatrixF& m);
MatrixI8 transpose(const MatrixI8& m);

}  // namespace quasar
