#include "abkt/ensemble.hpp"

#include <cmath>
#include <future>
#include <stdexcept>
#include <string>

namespace abkt {

void TokenDistribution::validate() const {
    if (probs.empty()) {
        throw std::invalid_argument("TokenDistribution: empty probability vector");
    }
    double sum = 0.0;
    for (double v : probs) {
        if (!(v >= 0.0)) {  // also rejects NaN
            throw std::invalid_argument("TokenDistribution: negative or non-finite entry");
        }
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
        throw std::invalid_argument("TokenDistribution: entries sum to " +
                                    std::to_string(sum) + ", expected 1");
    }
}

int TokenDistribution::argmax() const {
    int best = 0;
    for (int i = 1; i < static_cast<int>(probs.size()); ++i) {
        if (probs[static_cast<size_t>(i)] > probs[static_cast<size_t>(best)]) {
            best = i;
        }
    }
    return best;
}

std::vector<double> confidence(const std::vector<TokenDistribution>& runs) {
    if (runs.empty()) {
        throw std::invalid_argument("confidence: no run distributions");
    }
    std::vector<double> raw;
    raw.reserve(runs.size());
    for (const auto& d : runs) {
        d.validate();
        raw.push_back(d.probs[static_cast<size_t>(d.argmax())]);
    }
    double mx = raw[0];
    for (double v : raw) {
        mx = std::max(mx, v);
    }
    double z = 0.0;
    std::vector<double> alpha(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) {
        alpha[i] = std::exp(raw[i] - mx);
        z += alpha[i];
    }
    for (double& a : alpha) {
        a /= z;
    }
    return alpha;
}

TokenDistribution mix(const std::vector<TokenDistribution>& runs,
                      const std::vector<double>& weights) {
    if (runs.empty()) {
        throw std::invalid_argument("mix: no run distributions");
    }
    if (runs.size() != weights.size()) {
        throw std::invalid_argument("mix: " + std::to_string(runs.size()) +
                                    " distributions but " + std::to_string(weights.size()) +
                                    " weights");
    }
    double wsum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) {
            throw std::invalid_argument("mix: negative weight");
        }
        wsum += w;
    }
    if (std::abs(wsum - 1.0) > 1e-6) {
        throw std::invalid_argument("mix: weights sum to " + std::to_string(wsum) +
                                    ", expected 1");
    }
    const size_t vocab = runs[0].probs.size();
    TokenDistribution out;
    out.probs.assign(vocab, 0.0);
    for (size_t j = 0; j < runs.size(); ++j) {
        runs[j].validate();
        if (runs[j].probs.size() != vocab) {
            throw std::invalid_argument("mix: distribution length mismatch");
        }
        for (size_t v = 0; v < vocab; ++v) {
            out.probs[v] += weights[j] * runs[j].probs[v];
        }
    }
    return out;
}

EnsembleStep decode_step(const ForwardFn& forward, std::span<const int> context,
                         std::span<const double> bases, bool parallel) {
    if (bases.empty()) {
        throw std::invalid_argument("decode_step: empty base set");
    }
    if (context.empty()) {
        throw std::invalid_argument("decode_step: empty context");
    }
    EnsembleStep step;
    step.per_run.resize(bases.size());
    if (parallel && bases.size() > 1) {
        std::vector<std::future<TokenDistribution>> futs;
        futs.reserve(bases.size());
        for (size_t j = 0; j < bases.size(); ++j) {
            futs.push_back(std::async(std::launch::async,
                                      [&, j] { return forward(context, bases[j]); }));
        }
        for (size_t j = 0; j < bases.size(); ++j) {
            step.per_run[j] = futs[j].get();  // rethrows any run failure
        }
    } else {
        for (size_t j = 0; j < bases.size(); ++j) {
            step.per_run[j] = forward(context, bases[j]);
        }
    }
    step.confidences = confidence(step.per_run);
    step.mixed = mix(step.per_run, step.confidences);
    step.chosen_token = step.mixed.argmax();
    return step;
}

DecodeResult decode_sequence(const ForwardFn& forward, std::vector<int> context,
                             std::span<const double> bases, int max_new_tokens,
                             int stop_token, int max_context, bool parallel) {
    if (max_new_tokens < 1) {
        throw std::invalid_argument("decode_sequence: max_new_tokens must be at least 1");
    }
    DecodeResult out;
    for (int i = 0; i < max_new_tokens; ++i) {
        if (static_cast<int>(context.size()) >= max_context) {
            out.truncated = true;
            break;
        }
        EnsembleStep step = decode_step(forward, context, bases, parallel);
        const int token = step.chosen_token;
        out.tokens.push_back(token);
        out.steps.push_back(std::move(step));
        context.push_back(token);
        if (stop_token >= 0 && token == stop_token) {
            break;
        }
    }
    return out;
}

}  // namespace abkt
