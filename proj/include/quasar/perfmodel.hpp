#pragma once

#include <json.hpp>

#include "quasar/errors.hpp"

namespace quasar {

// Analytical roofline model of speculative decoding throughput. Verification
// of a memory-bound model costs the time to stream its weights once plus a
// compute term; speculation amortizes that cost over gamma*alpha+1 expected
// tokens per step. Weight bytes only — no kv-cache or activation traffic.

struct PerfParams {
    double param_count = 0.0;          // M, parameters
    double bytes_per_weight = 0.0;     // 4 f32, 2 bf16, 1 int8
    double bandwidth_bytes_per_s = 0.0;
    double t_compute_s = 0.0;
    double t_draft_s = 0.0;
    int gamma = 0;                     // 0 models vanilla decoding
    double acceptance_rate = 0.0;      // alpha in [0, 1]

    void validate() const;
};

// T_verify = M * bytes / BW + t_compute
double verify_latency(const PerfParams& p);

// S = (gamma * alpha + 1) / (t_draft + T_verify), tokens per second
double throughput(const PerfParams& p);

// throughput(quantized) / throughput(baseline)
double speedup_ratio(const PerfParams& quantized, const PerfParams& baseline);

// json field names are shared with the bench report schema
PerfParams perf_params_from_json(const nlohmann::json& j);
nlohmann::ordered_json perf_params_to_json(const PerfParams& p);

}  // namespace quasar
