#pragma once

#include <functional>
#include <span>
#include <vector>

namespace abkt {

// Probability vector over the vocabulary: entries >= 0, summing to 1
// within 1e-6.
struct TokenDistribution {
    std::vector<double> probs;

    void validate() const;  // throws std::invalid_argument
    int argmax() const;     // ties resolve to the lowest token id
};

// Next-token distribution at the final position of `tokens`, evaluated with
// the given rotary base. The ensemble is generic over this hook so oracle
// models can stand in for the transformer in tests.
using ForwardFn =
    std::function<TokenDistribution(std::span<const int> tokens, double base)>;

// Confidence weights: alpha'_j = max_v p_j(v), alpha = softmax(alpha').
std::vector<double> confidence(const std::vector<TokenDistribution>& runs);

// Entrywise convex combination of the run distributions.
TokenDistribution mix(const std::vector<TokenDistribution>& runs,
                      const std::vector<double>& weights);

struct EnsembleStep {
    std::vector<TokenDistribution> per_run;  // one per base, in base order
    std::vector<double> confidences;         // alpha, sums to 1
    TokenDistribution mixed;
    int chosen_token = -1;
};

// One decoding step: evaluate the identical context under every base,
// confidence-weight, mix, and pick the argmax. A failed run fails the step.
// With `parallel`, runs execute concurrently; results are joined by run index
// so the outcome matches sequential evaluation exactly.
EnsembleStep decode_step(const ForwardFn& forward, std::span<const int> context,
                         std::span<const double> bases, bool parallel = true);

struct DecodeResult {
    std::vector<int> tokens;          // generated tokens (stop token included)
    std::vector<EnsembleStep> steps;  // one record per generated token
    bool truncated = false;           // context hit max_context mid-generation
};

// Greedy autoregressive decoding: every generated token is appended to the
// shared context. Halts at stop_token, max_new_tokens, or context overflow
// (pass stop_token = -1 to disable the stop check).
DecodeResult decode_sequence(const ForwardFn& forward, std::vector<int> context,
                             std::span<const double> bases, int max_new_tokens,
                             int stop_token, int max_context, bool parallel = true);

}  // namespace abkt
