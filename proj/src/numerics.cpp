#include "quasar/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace quasar {

namespace {

void check_group_count(size_t got, size_t want, const char* what) {
    if (got != want)
        throw shape_error(std::string(what) + ": expected " + std::to_string(want) +
                          " step sizes, got " + std::to_string(got));
}

}  // namespace

MatrixF gemm_f(const MatrixF& a, const MatrixF& b) {
    if (a.cols != b.rows)
        throw shape_error("gemm_f: inner dimensions " + std::to_string(a.cols) + " vs " +
                          std::to_string(b.rows));
    MatrixF c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        const float* arow = a.data.data() + static_cast<size_t>(i) * a.cols;
        float* crow = c.data.data() + static_cast<size_t>(i) * b.cols;
        for (int j = 0; j < a.cols; ++j) {
            float aij = arow[j];
            if (aij == 0.0f) continue;
            const float* brow = b.data.data() + static_cast<size_t>(j) * b.cols;
            for (int k = 0; k < b.cols; ++k) crow[k] += aij * brow[k];
        }
    }
    return c;
}

MatrixI32 gemm_i8(const MatrixI8& a, const MatrixI8& b) {
    if (a.cols != b.rows)
        throw shape_error("gemm_i8: inner dimensions " + std::to_string(a.cols) + " vs " +
                          std::to_string(b.rows));
    if (a.cols > kGemmI8MaxInnerDim)
        throw capacity_error("gemm_i8: inner dimension " + std::to_string(a.cols) +
                             " exceeds " + std::to_string(kGemmI8MaxInnerDim) +
                             " (i32 accumulator bound)");
    MatrixI32 c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        const int8_t* arow = a.data.data() + static_cast<size_t>(i) * a.cols;
        int32_t* crow = c.data.data() + static_cast<size_t>(i) * b.cols;
        for (int j = 0; j < a.cols; ++j) {
            int32_t aij = arow[j];
            if (aij == 0) continue;
            const int8_t* brow = b.data.data() + static_cast<size_t>(j) * b.cols;
            for (int k = 0; k < b.cols; ++k) crow[k] += aij * brow[k];
        }
    }
    return c;
}

std::vector<float> compute_step_size(const MatrixF& m, ScaleGranularity g) {
    if (m.rows == 0 || m.cols == 0) throw shape_error("compute_step_size: empty matrix");
    auto finish = [](float max_abs) {
        return max_abs > 0.0f ? max_abs / 127.0f : 1.0f / 127.0f;
    };
    std::vector<float> out;
    switch (g) {
        case ScaleGranularity::per_tensor: {
            float m_abs = 0.0f;
            for (float v : m.data) m_abs = std::max(m_abs, std::fabs(v));
            out.push_back(finish(m_abs));
            break;
        }
        case ScaleGranularity::per_row: {
            out.reserve(m.rows);
            for (int i = 0; i < m.rows; ++i) {
                float m_abs = 0.0f;
                for (int j = 0; j < m.cols; ++j) m_abs = std::max(m_abs, std::fabs(m.at(i, j)));
                out.push_back(finish(m_abs));
            }
            break;
        }
        case ScaleGranularity::per_column: {
            std::vector<float> m_abs(m.cols, 0.0f);
            for (int i = 0; i < m.rows; ++i)
                for (int j = 0; j < m.cols; ++j)
                    m_abs[j] = std::max(m_abs[j], std::fabs(m.at(i, j)));
            out.reserve(m.cols);
            for (float v : m_abs) out.push_back(finish(v));
            break;
        }
    }
    return out;
}

MatrixI8 quantize_symmetric(const MatrixF& m, std::span<const float> deltas,
                            ScaleGranularity g) {
    size_t want = g == ScaleGranularity::per_tensor ? 1
                  : g == ScaleGranularity::per_row  ? static_cast<size_t>(m.rows)
                                                    : static_cast<size_t>(m.cols);
    check_group_count(deltas.size(), want, "quantize_symmetric");
    for (float d : deltas)
        if (!(d > 0.0f)) throw range_error("quantize_symmetric: step sizes must be positive");

    MatrixI8 q(m.rows, m.cols);
    for (int i = 0; i < m.rows; ++i) {
        for (int j = 0; j < m.cols; ++j) {
            float delta = g == ScaleGranularity::per_tensor ? deltas[0]
                          : g == ScaleGranularity::per_row  ? deltas[static_cast<size_t>(i)]
                                                            : deltas[static_cast<size_t>(j)];
            float scaled = std::round(m.at(i, j) / delta);  // half away from zero
            scaled = std::clamp(scaled, -127.0f, 127.0f);
            q.at(i, j) = static_cast<int8_t>(scaled);
        }
    }
    return q;
}

MatrixF dequantize(const MatrixI32& c, std::span<const float> delta_w,
                   std::span<const float> delta_x) {
    check_group_count(delta_w.size(), static_cast<size_t>(c.rows), "dequantize rows");
    check_group_count(delta_x.size(), static_cast<size_t>(c.cols), "dequantize cols");
    MatrixF y(c.rows, c.cols);
    for (int i = 0; i < c.rows; ++i)
        for (int k = 0; k < c.cols; ++k)
            y.at(i, k) = static_cast<float>(c.at(i, k)) * delta_w[static_cast<size_t>(i)] *
                         delta_x[static_cast<size_t>(k)];
    return y;
}

Distribution softmax_temperature(std::span<const float> logits, double temperature) {
    if (logits.empty()) throw shape_error("softmax_temperature: empty logits");
    if (temperature < 0.0 || !std::isfinite(temperature))
        throw range_error("softmax_temperature: temperature must be finite and >= 0");
    for (float v : logits)
        if (!std::isfinite(v)) throw input_error("softmax_temperature: non-finite logit");

    if (temperature == 0.0) {
        size_t best = 0;
        for (size_t i = 1; i < logits.size(); ++i)
            if (logits[i] > logits[best]) best = i;
        return Distribution::one_hot(logits.size(), static_cast<int>(best));
    }

    double max_logit = logits[0];
    for (float v : logits) max_logit = std::max(max_logit, static_cast<double>(v));
    std::vector<double> w(logits.size());
    for (size_t i = 0; i < logits.size(); ++i)
        w[i] = std::exp((static_cast<double>(logits[i]) - max_logit) / temperature);
    return Distribution(std::move(w));
}

MatrixF transpose(const MatrixF& m) {
    MatrixF t(m.cols, m.rows);
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) t.at(j, i) = m.at(i, j);
    return t;
}

MatrixI8 transpose(const MatrixI8& m) {
    MatrixI8 t(m.cols, m.rows);
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) t.at(j, i) = m.at(i, j);
    return t;
}

}  // namespace quasar
