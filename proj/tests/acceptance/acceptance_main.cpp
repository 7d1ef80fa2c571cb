// End-to-end acceptance checks. Each numbered check prints one [PASS]/[FAIL]
// line; the process exits nonzero if any check fails. Slow matrix runs use
// the bundled corpora and a fixed tiny model so the whole binary finishes in
// a few minutes on one desktop core (4 workers for the big matrices).
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "quasar/bench.hpp"
#include "quasar/perfmodel.hpp"
#include "quasar/quant.hpp"
#include "quasar/specdec.hpp"
#include "quasar/tokenizer.hpp"

using namespace quasar;

namespace {

struct Harness {
    int failures = 0;

    void run(int number, const std::string& title, const std::function<std::string()>& body) {
        try {
            std::string detail = body();
            std::printf("[PASS] %d) %s: %s\n", number, title.c_str(), detail.c_str());
        } catch (const std::exception& e) {
            ++failures;
            std::printf("[FAIL] %d) %s: %s\n", number, title.c_str(), e.what());
        }
        std::fflush(stdout);
    }
};

struct check_failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& msg) {
    if (!ok) throw check_failure(msg);
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

// ---- shared fixture: the reference model pair used by checks 2 and 5-9 ----

struct Fixture {
    std::filesystem::path dir;
    std::string corpora = QUASAR_CORPORA_DIR;
    std::string weights_path, quantized_path;
    ModelWeights weights;
    QuantizedModel quantized;

    Fixture() {
        dir = std::filesystem::temp_directory_path() /
              ("quasar_acceptance_" + std::to_string(::getpid()));
        std::filesystem::create_directories(dir);

        ModelConfig cfg;
        cfg.vocab_size = ByteTokenizer::kVocabSize;
        cfg.d_model = 64;
        cfg.n_layers = 4;
        cfg.n_heads = 4;
        cfg.d_ff = 256;
        cfg.max_seq_len = 512;
        weights = generate_synthetic_weights(cfg, 1);
        weights_path = (dir / "model.qzr1").string();
        save_weights(weights, weights_path);

        auto cal = ingest_corpus(corpora + "/distinct.txt");
        quantized = smooth_and_quantize(weights, compute_smoothing(calibrate(weights, cal),
                                                                   weights, 0.5f));
        quantized_path = (dir / "model.qzq1").string();
        save_quantized(quantized, quantized_path);
    }
    ~Fixture() { std::filesystem::remove_all(dir); }

    RunConfig matrix_config() const {
        RunConfig cfg;
        cfg.weights_path = weights_path;
        cfg.quantized_weights_path = quantized_path;
        cfg.corpus_path = corpora + "/repetitive.txt";
        cfg.temperatures = {0.0};
        cfg.max_new_tokens = 64;
        cfg.seed = 0;
        cfg.no_timings = true;
        cfg.jobs = 4;
        return cfg;
    }
};

double summary_L(const RunReport& report, Method m, int gamma, int k_min, int k_max,
                 double retain) {
    for (const CellSummary& s : report.summary) {
        if (s.method == m && s.gamma == gamma && s.k_min == k_min && s.k_max == k_max &&
            s.retain_fraction == retain)
            return s.mean_acceptance_length;
    }
    throw check_failure("summary cell not found for " + method_name(m));
}

// ---- 1: the exact step-output oracle matches the verifier distribution ----

std::string check_lossless_oracle() {
    PhiloxRng rng(101, 0);
    auto random_dist = [&](int vocab, bool one_hot) {
        if (one_hot) return Distribution::one_hot(vocab, static_cast<int>(rng.next_u64() %
                                                                          vocab));
        std::vector<double> w(vocab);
        for (double& v : w) v = -std::log(1.0 - rng.next_double());
        // occasionally zero one entry so boundary cases get exercised
        if (rng.next_u64() % 4 == 0) w[rng.next_u64() % vocab] = 0.0;
        double total = 0.0;
        for (double v : w) total += v;
        if (total == 0.0) w[0] = 1.0;
        return Distribution(std::move(w));
    };

    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        int vocab = 2 + static_cast<int>(rng.next_u64() % 7);  // 2..8
        int gamma = 1 + static_cast<int>(rng.next_u64() % 3);  // 1..3

        std::vector<Distribution> p_list, q_list;
        for (int t = 0; t <= gamma; ++t) {
            // p stays strictly positive so every position stays reachable
            std::vector<double> w(vocab);
            for (double& v : w) v = 0.01 - std::log(1.0 - rng.next_double());
            p_list.emplace_back(std::move(w));
        }
        for (int t = 0; t < gamma; ++t)
            q_list.push_back(random_dist(vocab, rng.next_u64() % 3 == 0));

        auto dist = step_output_distribution(p_list, q_list);
        for (int t = 0; t <= gamma; ++t) {
            std::vector<double> marginal = step_marginal(dist, t, vocab);
            for (int v = 0; v < vocab; ++v)
                worst = std::max(worst, std::abs(marginal[v] - p_list[t][v]));
        }
    }
    require(worst < 1e-12, "marginal deviation " + fmt(worst) + " >= 1e-12");
    return "max marginal deviation " + fmt(worst) + " over 1000 random (p, q) pairs";
}

// ---- 2: greedy speculative decode is token-for-token vanilla ----

std::string check_greedy_equivalence(const Fixture& fx) {
    auto prompts = ingest_corpus(fx.corpora + "/repetitive.txt");
    require(prompts.size() >= 100, "need >= 100 prompts");
    const int max_new = 64;
    const SamplingConfig greedy{0.0, 0};
    const DrafterConfig drafter{1, 4, 5};

    auto t0 = std::chrono::steady_clock::now();
    Verifier fp(fx.weights);
    for (const auto& prompt : prompts) {
        auto base = vanilla_generate(fp, prompt, max_new, greedy);
        auto spec = speculative_generate(fp, drafter, prompt, max_new, greedy);
        require(base.tokens == spec.tokens, "f32 token mismatch");
    }
    double f32_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    Verifier q(fx.quantized);
    size_t q_prompts = 25;
    for (size_t i = 0; i < q_prompts; ++i) {
        auto base = vanilla_generate(q, prompts[i], max_new, greedy);
        auto spec = speculative_generate(q, drafter, prompts[i], max_new, greedy);
        require(base.tokens == spec.tokens, "quantized token mismatch");
    }

    require(f32_s < 60.0, "f32 sweep took " + fmt(f32_s) + "s (budget 60s)");
    return fmt(static_cast<double>(prompts.size())) + " f32 prompts in " + fmt(f32_s) +
           "s + " + fmt(static_cast<double>(q_prompts)) + " quantized prompts, all equal";
}

// ---- 3: sampled verification matches the analytic distribution ----

std::string check_monte_carlo() {
    const int vocab = 3;
    std::vector<Distribution> p_list = {Distribution({0.5, 0.3, 0.2}),
                                        Distribution({0.1, 0.6, 0.3}),
                                        Distribution({0.25, 0.25, 0.5})};
    DraftProposal proposal;
    proposal.tokens = {0, 1};
    proposal.match_len = 1;
    proposal.match_pos = 0;
    std::vector<Distribution> q_list = {Distribution::one_hot(vocab, 0),
                                        Distribution::one_hot(vocab, 1)};

    auto oracle = step_output_distribution(p_list, q_list);

    const int n = 100000;
    PhiloxRng rng(7, 0);
    SamplingConfig sampling{1.0, 7};
    std::map<std::vector<Token>, int> counts;
    for (int i = 0; i < n; ++i) ++counts[verify_and_accept(p_list, proposal, sampling, rng).emitted];

    int total = 0;
    double worst_sigma = 0.0;
    for (const auto& [seq, count] : counts) {
        total += count;
        auto it = oracle.find(seq);
        require(it != oracle.end(), "sampled a sequence outside the oracle support");
        double p = it->second;
        double sigma = std::sqrt(p * (1.0 - p) / n);
        double dev = std::abs(static_cast<double>(count) / n - p);
        worst_sigma = std::max(worst_sigma, dev / sigma);
        require(dev <= 3.0 * sigma, "sequence frequency off by " + fmt(dev / sigma) + " sigma");
    }
    require(total == n, "lost samples");
    return fmt(static_cast<double>(counts.size())) + " outcomes over 100000 draws, worst " +
           fmt(worst_sigma) + " sigma";
}

// ---- 4: smoothing identity and the int8 linear error bound ----

std::string check_quantization_bounds() {
    // (a) the smoothing transform preserves X W^T to 1e-12 in double
    double worst_rel = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        ModelConfig cfg;
        cfg.vocab_size = 32;
        cfg.d_model = 16;
        cfg.n_layers = 1;
        cfg.n_heads = 2;
        cfg.d_ff = 24;
        cfg.max_seq_len = 32;
        ModelWeights w = generate_synthetic_weights(cfg, 1000 + trial);
        PhiloxRng rng(2000 + trial, 0);

        CalibrationStats stats;
        stats.layers.resize(1);
        stats.sample_count = 1;
        auto fill = [&](LinearStats& ls, int d_in) {
            ls.max_abs.resize(d_in);
            // spread over orders of magnitude to mimic outlier channels
            for (float& v : ls.max_abs)
                v = static_cast<float>(std::exp(3.0 * rng.next_gaussian()));
        };
        for (int k = 0; k < kLinearsPerLayer; ++k) {
            int d_in = (k == static_cast<int>(LinearKind::w_down)) ? cfg.d_ff : cfg.d_model;
            fill(stats.layers[0][k], d_in);
        }
        fill(stats.head, cfg.d_model);

        SmoothingFactors s = compute_smoothing(stats, w, 0.5f);

        auto check_linear = [&](const MatrixF& wm, const std::vector<float>& sv) {
            const int rows = 3;
            MatrixF x(rows, wm.cols);
            for (float& v : x.data) v = static_cast<float>(rng.next_gaussian());
            for (int r = 0; r < rows; ++r) {
                for (int i = 0; i < wm.rows; ++i) {
                    double plain = 0.0, smoothed = 0.0, scale = 0.0;
                    for (int j = 0; j < wm.cols; ++j) {
                        double xv = x.at(r, j), wv = wm.at(i, j), sj = sv[j];
                        plain += xv * wv;
                        smoothed += (xv * sj) * (wv / sj);
                        scale += std::abs(xv * wv);
                    }
                    double rel = std::abs(smoothed - plain) / std::max(scale, 1e-30);
                    worst_rel = std::max(worst_rel, rel);
                }
            }
        };
        const LayerWeights& lw = w.layers[0];
        const auto& sl = s.layers[0];
        check_linear(lw.wq, sl[0]);
        check_linear(lw.wk, sl[1]);
        check_linear(lw.wv, sl[2]);
        check_linear(lw.wo, sl[3]);
        check_linear(lw.w_up, sl[4]);
        check_linear(lw.w_down, sl[5]);
        check_linear(transpose(w.output_head), s.head);  // head is stored in x out
    }
    require(worst_rel < 1e-12, "smoothing identity drift " + fmt(worst_rel));

    // (b) per-element int8 linear error bound, 1000 random layers
    PhiloxRng rng(40, 0);
    double worst_frac = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        int d_in = 8 + static_cast<int>(rng.next_u64() % 89);   // 8..96
        int d_out = 4 + static_cast<int>(rng.next_u64() % 61);  // 4..64
        int rows = 1 + static_cast<int>(rng.next_u64() % 6);

        MatrixF w(d_out, d_in), x(rows, d_in);
        double w_scale = std::exp(2.0 * rng.next_gaussian());
        double x_scale = std::exp(2.0 * rng.next_gaussian());
        for (float& v : w.data) v = static_cast<float>(w_scale * rng.next_gaussian());
        for (float& v : x.data) v = static_cast<float>(x_scale * rng.next_gaussian());

        auto dw = compute_step_size(w, ScaleGranularity::per_row);
        auto dx = compute_step_size(x, ScaleGranularity::per_row);
        MatrixI8 wc = quantize_symmetric(w, dw, ScaleGranularity::per_row);
        MatrixI8 xc = quantize_symmetric(x, dx, ScaleGranularity::per_row);

        for (int r = 0; r < rows; ++r) {
            double sum_abs_xt = 0.0;
            for (int j = 0; j < d_in; ++j)
                sum_abs_xt += std::abs(static_cast<double>(xc.at(r, j)) * dx[r]);
            for (int i = 0; i < d_out; ++i) {
                double exact = 0.0, acc = 0.0, sum_abs_wt = 0.0;
                for (int j = 0; j < d_in; ++j) {
                    exact += static_cast<double>(x.at(r, j)) * w.at(i, j);
                    acc += static_cast<double>(xc.at(r, j)) * wc.at(i, j);
                    sum_abs_wt += std::abs(static_cast<double>(wc.at(i, j)) * dw[i]);
                }
                double y_q = acc * dx[r] * dw[i];
                double bound = 0.5 * dw[i] * sum_abs_xt + 0.5 * dx[r] * sum_abs_wt +
                               d_in * dw[i] * dx[r] * 0.25;
                require(std::abs(y_q - exact) <= bound,
                        "int8 error " + fmt(std::abs(y_q - exact)) + " above bound " +
                            fmt(bound));
                if (bound > 0.0) worst_frac = std::max(worst_frac, std::abs(y_q - exact) / bound);
            }
        }
    }
    return "identity drift " + fmt(worst_rel) + "; tightest bound margin " +
           fmt(worst_frac) + " of allowance";
}

// ---- 5: quantization cuts weight traffic to exactly one quarter ----

std::string check_byte_traffic(const Fixture& fx) {
    auto prompt = ByteTokenizer::encode("the quick brown fox");
    const SamplingConfig greedy{0.0, 0};
    Verifier fp(fx.weights);
    Verifier q(fx.quantized);
    auto base = vanilla_generate(fp, prompt, 16, greedy);
    auto quant = vanilla_generate(q, prompt, 16, greedy);
    require(base.metrics.steps == quant.metrics.steps, "step counts differ");
    require(base.metrics.weight_bytes_loaded == 4 * quant.metrics.weight_bytes_loaded,
            "byte ratio is not exactly 4:1");

    PerfParams quantized{1.0e9, 1.0, 50.0e9, 0.0, 0.0, 0, 0.0};
    PerfParams baseline = quantized;
    baseline.bytes_per_weight = 2.0;
    double ratio = verify_latency(quantized) / verify_latency(baseline);
    require(ratio == 0.5, "latency ratio " + fmt(ratio) + " != 0.5");
    require(speedup_ratio(quantized, baseline) == 2.0, "speedup not exactly 2");
    return fmt(static_cast<double>(base.metrics.weight_bytes_loaded)) + " vs " +
           fmt(static_cast<double>(quant.metrics.weight_bytes_loaded)) +
           " bytes/run (4:1), halved-traffic latency ratio exactly 0.5";
}

// ---- 6: acceptance length is reproduced by both speculative methods ----

std::string check_acceptance_length(const Fixture& fx) {
    RunConfig cfg = fx.matrix_config();
    cfg.methods = {Method::ngram_bf, Method::quasar};
    cfg.gammas = {5};
    cfg.k_ranges = {{1, 4}};
    RunReport report = run_matrix(cfg);
    double l_ngram = summary_L(report, Method::ngram_bf, 5, 1, 4, 0.0);
    double l_quasar = summary_L(report, Method::quasar, 5, 1, 4, 0.0);
    require(l_ngram > 1.2, "ngram L " + fmt(l_ngram) + " <= 1.2");
    require(l_quasar > 1.2, "quasar L " + fmt(l_quasar) + " <= 1.2");
    require(std::abs(l_quasar - l_ngram) < 0.15,
            "|L gap| " + fmt(std::abs(l_quasar - l_ngram)) + " >= 0.15");
    return "L ngram " + fmt(l_ngram) + ", L quasar " + fmt(l_quasar) + ", gap " +
           fmt(std::abs(l_quasar - l_ngram));
}

// ---- 7: acceptance length collapses as the drafter is pruned ----

std::string check_pruning_collapse(const Fixture& fx) {
    RunConfig cfg = fx.matrix_config();
    cfg.methods = {Method::pruned_drafter};
    cfg.gammas = {5};
    cfg.retain_fractions = {1.0, 0.75, 0.5};
    RunReport report = run_matrix(cfg);
    double l100 = summary_L(report, Method::pruned_drafter, 5, 0, 0, 1.0);
    double l75 = summary_L(report, Method::pruned_drafter, 5, 0, 0, 0.75);
    double l50 = summary_L(report, Method::pruned_drafter, 5, 0, 0, 0.5);
    require(l100 >= l75 && l75 >= l50, "L not non-increasing: " + fmt(l100) + ", " +
                                           fmt(l75) + ", " + fmt(l50));
    require(l100 >= l75 && l100 >= l50, "full drafter is not the maximum");
    return "L = " + fmt(l100) + " / " + fmt(l75) + " / " + fmt(l50) +
           " at retain 1.0 / 0.75 / 0.5";
}

// ---- 8: L grows monotonically with gamma across the (K, gamma) grid ----

std::string check_sensitivity_grid(const Fixture& fx) {
    RunConfig cfg = fx.matrix_config();
    cfg.methods = {Method::ngram_bf};
    cfg.gammas = {3, 5, 7, 9};
    cfg.k_ranges = {{1, 3}, {2, 4}, {3, 5}};
    cfg.no_timings = false;  // wall-clock columns are informational here
    RunReport report = run_matrix(cfg);

    std::ostringstream detail;
    for (auto [k_min, k_max] : cfg.k_ranges) {
        double prev = 0.0;
        detail << "K(" << k_min << "," << k_max << "):";
        for (int gamma : cfg.gammas) {
            double l = summary_L(report, Method::ngram_bf, gamma, k_min, k_max, 0.0);
            require(l >= prev - 1e-9, "L not monotone in gamma at K(" +
                                          std::to_string(k_min) + "," +
                                          std::to_string(k_max) + ")");
            prev = l;
            detail << " " << fmt(l);
        }
        detail << "  ";
    }
    return detail.str();
}

// ---- 9: fixed seeds give byte-identical reports ----

std::string check_determinism(const Fixture& fx) {
    RunConfig cfg = fx.matrix_config();
    cfg.methods = {Method::vanilla, Method::ngram_bf, Method::quasar};
    cfg.corpus_path = fx.corpora + "/distinct.txt";
    cfg.temperatures = {0.0, 0.7};  // exercise the stochastic sampling path too
    cfg.max_new_tokens = 16;
    cfg.jobs = 1;
    cfg.no_timings = true;
    std::string first = report_to_json(run_matrix(cfg));
    std::string second = report_to_json(run_matrix(cfg));
    require(first == second, "reports differ between runs");
    return fmt(static_cast<double>(first.size())) + " byte report identical across two runs";
}

}  // namespace

int main() {
    Harness h;
    Fixture fx;

    h.run(1, "rejection-sampling losslessness oracle", [] { return check_lossless_oracle(); });
    h.run(2, "greedy speculative equals vanilla", [&] { return check_greedy_equivalence(fx); });
    h.run(3, "monte carlo verification frequencies", [] { return check_monte_carlo(); });
    h.run(4, "smoothing identity and int8 error bound",
          [] { return check_quantization_bounds(); });
    h.run(5, "quarter-traffic weight loading", [&] { return check_byte_traffic(fx); });
    h.run(6, "acceptance length on the repetitive corpus",
          [&] { return check_acceptance_length(fx); });
    h.run(7, "pruned-drafter acceptance collapse", [&] { return check_pruning_collapse(fx); });
    h.run(8, "gamma sensitivity grid", [&] { return check_sensitivity_grid(fx); });
    h.run(9, "byte-identical reports under fixed seeds", [&] { return check_determinism(fx); });

    if (h.failures == 0) {
        std::printf("all 9 checks passed\n");
        return 0;
    }
    std::printf("%d check(s) failed\n", h.failures);
    return 1;
}
