#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "quasar/errors.hpp"
#include "quasar/rng.hpp"

namespace quasar {

// A probability vector over the vocabulary. Normalized on construction;
// probabilities are kept in double so downstream accept/reject math is not
// at the mercy of f32 rounding.
class Distribution {
  public:
    explicit Distribution(std::vector<double> weights) : p_(std::move(weights)) {
        if (p_.empty()) throw shape_error("distribution: empty weight vector");
        double total = 0.0;
        for (double w : p_) {
            if (!(w >= 0.0)) throw domain_error("distribution: negative or nan weight");
            total += w;
        }
        if (!(total > 0.0) || !std::isfinite(total))
            throw domain_error("distribution: weights must have positive finite mass");
        for (double& w : p_) w /= total;
    }

    static Distribution one_hot(size_t vocab_size, int token) {
        if (vocab_size == 0) throw shape_error("distribution: empty vocab");
        if (token < 0 || static_cast<size_t>(token) >= vocab_size)
            throw vocab_error("distribution: one-hot token out of range");
        std::vector<double> w(vocab_size, 0.0);
        w[static_cast<size_t>(token)] = 1.0;
        Distribution d;
        d.p_ = std::move(w);
        return d;
    }

    double operator[](size_t i) const { return p_[i]; }
    size_t size() const { return p_.size(); }
    const std::vector<double>& probs() const { return p_; }

    // lowest index wins ties, everywhere, so greedy decode is reproducible
    int argmax() const {
        size_t best = 0;
        for (size_t i = 1; i < p_.size(); ++i)
            if (p_[i] > p_[best]) best = i;
        return static_cast<int>(best);
    }

  private:
    Distribution() = default;
    std::vector<double> p_;
};

// inverse-cdf sampling; consumes exactly one double from the stream
inline int sample(const Distribution& dist, PhiloxRng& rng) {
    double r = rng.next_double();
    double acc = 0.0;
    for (size_t i = 0; i < dist.size(); ++i) {
        acc += dist[i];
        if (r < acc) return static_cast<int>(i);
    }
    // guard against accumulated rounding: return last index with mass
    for (size_t i = dist.size(); i-- > 0;)
        if (dist[i] > 0.0) return static_cast<int>(i);
    return 0;
}

}  // namespace quasar
