#include "abkt/waveform.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace abkt {

void RotaryConfig::validate() const {
    if (!(base > 0.0)) {
        throw std::invalid_argument("RotaryConfig: base must be positive");
    }
    if (head_dim <= 0 || head_dim % 2 != 0) {
        throw std::invalid_argument("RotaryConfig: head_dim must be a positive even integer");
    }
    if (max_context < 2) {
        throw std::invalid_argument("RotaryConfig: max_context must be at least 2");
    }
    if (!(train_base > 0.0)) {
        throw std::invalid_argument("RotaryConfig: train_base must be positive");
    }
    if (base < train_base) {
        throw std::invalid_argument(
            "RotaryConfig: base below train_base would produce out-of-distribution positions");
    }
}

double upper_bound(int distance, const RotaryConfig& cfg) {
    cfg.validate();
    if (distance < 0 || distance >= cfg.max_context) {
        throw std::invalid_argument("upper_bound: distance out of [0, max_context)");
    }
    const int half = cfg.head_dim / 2;
    double sum = 0.0;
    for (int j = 0; j < half; ++j) {
        const double theta = std::pow(cfg.base, -2.0 * j / cfg.head_dim);
        sum += 2.0 * std::cos(distance * theta);
    }
    return sum;
}

UpperBoundCurve curve(const RotaryConfig& cfg) {
    cfg.validate();
    UpperBoundCurve out;
    out.config = cfg;
    out.values.resize(static_cast<size_t>(cfg.max_context));
    const int half = cfg.head_dim / 2;
    // One pass per frequency keeps the scan cache-friendly.
    for (int j = 0; j < half; ++j) {
        const double theta = std::pow(cfg.base, -2.0 * j / cfg.head_dim);
        for (int s = 0; s < cfg.max_context; ++s) {
            out.values[static_cast<size_t>(s)] += 2.0 * std::cos(s * theta);
        }
    }
    return out;
}

int window_length(int init_period, int k) {
    if (init_period < 1 || k < 1) {
        throw std::invalid_argument("window_length: init_period and k must be positive");
    }
    double w = init_period;
    for (int i = 1; i < k; ++i) {
        w *= 1.5;
    }
    const double floored = std::floor(w);
    if (floored < 2.0) {
        return 2;
    }
    return static_cast<int>(floored);
}

namespace {

std::vector<int> scan_extrema(const UpperBoundCurve& c, int n, int init_period,
                              bool maximize) {
    c.config.validate();
    if (n < 1) {
        throw std::invalid_argument("extrema scan: n must be at least 1");
    }
    if (init_period < 2) {
        throw std::invalid_argument("extrema scan: init_period must be at least 2");
    }
    const int limit = static_cast<int>(c.values.size());
    std::vector<int> out;
    out.reserve(static_cast<size_t>(n));
    int prev = 0;
    for (int k = 1; k <= n; ++k) {
        const int w = window_length(init_period, k);
        const int lo = out.empty() ? 0 : prev + 1;
        const int hi = lo + w;  // exclusive
        if (hi > limit) {
            throw std::runtime_error(
                "extrema scan: window " + std::to_string(k) + " reaches position " +
                std::to_string(hi) + " past max_context " + std::to_string(limit) +
                "; (n, init_period) infeasible for this config");
        }
        int best = lo;
        for (int s = lo + 1; s < hi; ++s) {
            const double v = c.values[static_cast<size_t>(s)];
            const double b = c.values[static_cast<size_t>(best)];
            if (maximize ? (v > b) : (v < b)) {
                best = s;
            }
        }
        out.push_back(best);
        prev = best;
    }
    return out;
}

}  // namespace

std::vector<int> find_peaks(const UpperBoundCurve& c, int n, int init_period) {
    return scan_extrema(c, n, init_period, true);
}

std::vector<int> find_troughs(const UpperBoundCurve& c, int n, int init_period) {
    return scan_extrema(c, n, init_period, false);
}

std::vector<int> find_peaks(const RotaryConfig& cfg, int n, int init_period) {
    return find_peaks(curve(cfg), n, init_period);
}

std::vector<int> find_troughs(const RotaryConfig& cfg, int n, int init_period) {
    return find_troughs(curve(cfg), n, init_period);
}

ExtremaSet extrema(const UpperBoundCurve& c, int n, int init_period) {
    ExtremaSet out;
    out.base = c.config.base;
    out.peaks = find_peaks(c, n, init_period);
    out.troughs = find_troughs(c, n, init_period);
    return out;
}

ExtremaSet extrema(const RotaryConfig& cfg, int n, int init_period) {
    return extrema(curve(cfg), n, init_period);
}

}  // namespace abkt
