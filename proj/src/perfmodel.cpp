#include "quasar/perfmodel.hpp"

#include <cmath>

namespace quasar {

void PerfParams::validate() const {
    if (!(param_count > 0.0)) throw range_error("perf: param_count must be positive");
    if (!(bytes_per_weight > 0.0)) throw range_error("perf: bytes_per_weight must be positive");
    if (!(bandwidth_bytes_per_s > 0.0)) throw range_error("perf: bandwidth must be positive");
    if (!(t_compute_s >= 0.0)) throw range_error("perf: t_compute_s must be >= 0");
    if (!(t_draft_s >= 0.0)) throw range_error("perf: t_draft_s must be >= 0");
    if (gamma < 0) throw range_error("perf: gamma must be >= 0");
    if (!(acceptance_rate >= 0.0 && acceptance_rate <= 1.0))
        throw range_error("perf: acceptance_rate must be in [0, 1]");
}

double verify_latency(const PerfParams& p) {
    p.validate();
    return p.param_count * p.bytes_per_weight / p.bandwidth_bytes_per_s + p.t_compute_s;
}

double throughput(const PerfParams& p) {
    double latency = p.t_draft_s + verify_latency(p);
    if (!(latency > 0.0)) throw domain_error("perf: zero total latency");
    return (p.gamma * p.acceptance_rate + 1.0) / latency;
}

double speedup_ratio(const PerfParams& quantized, const PerfParams& baseline) {
    return throughput(quantized) / throughput(baseline);
}

PerfParams perf_params_from_json(const nlohmann::json& j) {
    PerfParams p;
    try {
        p.param_count = j.at("param_count").get<double>();
        p.bytes_per_weight = j.at("bytes_per_weight").get<double>();
        p.bandwidth_bytes_per_s = j.at("bandwidth_bytes_per_s").get<double>();
        p.t_compute_s = j.value("t_compute_s", 0.0);
        p.t_draft_s = j.value("t_draft_s", 0.0);
        p.gamma = j.value("gamma", 0);
        p.acceptance_rate = j.value("acceptance_rate", 0.0);
    } catch (const nlohmann::json::exception& e) {
        throw input_error(std::string("perf params: ") + e.what());
    }
    p.validate();
    return p;
}

nlohmann::ordered_json perf_params_to_json(const PerfParams& p) {
    return nlohmann::ordered_json{{"param_count", p.param_count},
                                  {"bytes_per_weight", p.bytes_per_weight},
                                  {"bandwidth_bytes_per_s", p.bandwidth_bytes_per_s},
                                  {"t_compute_s", p.t_compute_s},
                                  {"t_draft_s", p.t_draft_s},
                                  {"gamma", p.gamma},
                                  {"acceptance_rate", p.acceptance_rate}};
}

}  // namespace quasar
