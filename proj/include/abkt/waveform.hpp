#pragma once

#include <vector>

namespace abkt {

// Rotary-embedding configuration. `base` is the rotary angle base in effect,
// `train_base` the base the model was pre-trained with.
struct RotaryConfig {
    double base = 10000.0;
    int head_dim = 128;       // must be even
    int max_context = 4096;   // maximum pre-trained context length, >= 2
    double train_base = 10000.0;

    // Throws std::invalid_argument on any violated field constraint.
    void validate() const;
};

// Upper bound of the pre-softmax attention score at one relative distance:
//   sum_{j=0}^{d/2-1} 2*cos(distance * base^(-2j/d))
// Pure and deterministic. Requires 0 <= distance < cfg.max_context.
double upper_bound(int distance, const RotaryConfig& cfg);

struct UpperBoundCurve {
    RotaryConfig config;
    std::vector<double> values;  // values[s] = upper_bound(s, config)
};

UpperBoundCurve curve(const RotaryConfig& cfg);

// Windowed extremum scans. The k-th window has floor(init_period * 1.5^(k-1))
// positions (never fewer than 2); the first window starts at distance 0, each
// later window starts just past the previous extremum. A window reaching past
// max_context throws: (n, init_period) is infeasible for this config.
// Ties inside a window resolve to the smallest position.
std::vector<int> find_peaks(const UpperBoundCurve& c, int n, int init_period);
std::vector<int> find_troughs(const UpperBoundCurve& c, int n, int init_period);
std::vector<int> find_peaks(const RotaryConfig& cfg, int n, int init_period);
std::vector<int> find_troughs(const RotaryConfig& cfg, int n, int init_period);

// Length of the k-th search window (1-based): floor(init_period * 1.5^(k-1)),
// clamped below at 2.
int window_length(int init_period, int k);

struct ExtremaSet {
    double base = 0.0;
    std::vector<int> peaks;    // strictly increasing
    std::vector<int> troughs;  // strictly increasing
};

ExtremaSet extrema(const UpperBoundCurve& c, int n, int init_period);
ExtremaSet extrema(const RotaryConfig& cfg, int n, int init_period);

}  // namespace abkt
