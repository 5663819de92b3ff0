#include "abkt/base_search.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <set>
#include <stdexcept>

namespace abkt {

SearchSpace build_space(double b_min, double b_max, double stride) {
    if (!(b_min > 0.0)) {
        throw std::invalid_argument("build_space: b_min must be positive");
    }
    if (!(b_max > b_min)) {
        throw std::invalid_argument("build_space: b_max must exceed b_min");
    }
    if (!(stride > 0.0)) {
        throw std::invalid_argument("build_space: stride must be positive");
    }
    // Grid points are exact constructions; the count tolerates representation
    // error in the division only.
    const int count = static_cast<int>(std::floor((b_max - b_min) / stride + 1e-9));
    if (count < 1) {
        throw std::invalid_argument("build_space: stride larger than the search range");
    }
    SearchSpace space;
    space.b_min = b_min;
    space.b_max = b_max;
    space.stride = stride;
    space.candidates.reserve(static_cast<size_t>(count));
    for (int i = 1; i <= count; ++i) {
        space.candidates.push_back(b_min + i * stride);
    }
    return space;
}

PairingStrategy pairing_from_string(const std::string& name) {
    if (name == "nearest") return PairingStrategy::kNearest;
    if (name == "indexwise") return PairingStrategy::kIndexwise;
    throw std::invalid_argument("unknown pairing strategy '" + name +
                                "' (expected 'nearest' or 'indexwise')");
}

std::string to_string(PairingStrategy s) {
    return s == PairingStrategy::kNearest ? "nearest" : "indexwise";
}

namespace {

double nearest_sum(const std::vector<int>& from, const std::vector<int>& to) {
    // `to` is sorted ascending.
    double sum = 0.0;
    for (int x : from) {
        auto it = std::lower_bound(to.begin(), to.end(), x);
        double best = std::abs(x - (it == to.end() ? to.back() : *it));
        if (it != to.begin()) {
            best = std::min(best, static_cast<double>(std::abs(x - *(it - 1))));
        }
        sum += best;
    }
    return sum;
}

double indexwise_sum(const std::vector<int>& a, const std::vector<int>& b) {
    const size_t m = std::min(a.size(), b.size());
    double sum = 0.0;
    for (size_t i = 0; i < m; ++i) {
        sum += std::abs(a[i] - b[i]);
    }
    return sum;
}

void merge_sorted_unique(std::vector<int>& dst, const std::vector<int>& add) {
    dst.insert(dst.end(), add.begin(), add.end());
    std::sort(dst.begin(), dst.end());
    dst.erase(std::unique(dst.begin(), dst.end()), dst.end());
}

}  // namespace

double interleave_distance(const ExtremaSet& candidate, const BaseSet& accumulated,
                           PairingStrategy strategy) {
    if (candidate.peaks.empty() || candidate.troughs.empty()) {
        throw std::invalid_argument("interleave_distance: candidate extrema are empty");
    }
    if (accumulated.accumulated_peaks.empty() || accumulated.accumulated_troughs.empty()) {
        throw std::invalid_argument("interleave_distance: accumulated extrema are empty");
    }
    if (strategy == PairingStrategy::kNearest) {
        return nearest_sum(candidate.peaks, accumulated.accumulated_troughs) +
               nearest_sum(candidate.troughs, accumulated.accumulated_peaks);
    }
    return indexwise_sum(candidate.peaks, accumulated.accumulated_troughs) +
           indexwise_sum(candidate.troughs, accumulated.accumulated_peaks);
}

SearchResult search_bases(const SearchSpace& space, const RotaryConfig& config,
                          const SearchOptions& opts) {
    config.validate();
    if (space.candidates.empty()) {
        throw std::invalid_argument("search_bases: empty search space");
    }
    if (space.b_min < config.train_base) {
        throw std::invalid_argument(
            "search_bases: b_min below train_base would produce out-of-distribution positions");
    }
    if (space.b_min != config.train_base) {
        throw std::invalid_argument("search_bases: b_min must equal train_base");
    }
    if (opts.n_bases < 1) {
        throw std::invalid_argument("search_bases: n_bases must be at least 1");
    }
    if (static_cast<size_t>(opts.n_bases) > 1 + space.candidates.size()) {
        throw std::invalid_argument("search_bases: n_bases exceeds 1 + |candidates|");
    }

    auto extrema_for = [&](double base) {
        RotaryConfig c = config;
        c.base = base;
        return extrema(c, opts.n_extrema, opts.init_period);
    };

    SearchResult result;
    const ExtremaSet train = extrema_for(config.train_base);
    result.set.bases.push_back(config.train_base);
    result.set.accumulated_peaks = train.peaks;
    result.set.accumulated_troughs = train.troughs;
    std::sort(result.set.accumulated_peaks.begin(), result.set.accumulated_peaks.end());
    std::sort(result.set.accumulated_troughs.begin(), result.set.accumulated_troughs.end());

    // Candidate extrema do not change across rounds; compute them once.
    std::vector<ExtremaSet> cand_extrema;
    cand_extrema.reserve(space.candidates.size());
    for (double b : space.candidates) {
        cand_extrema.push_back(extrema_for(b));
    }

    std::vector<bool> taken(space.candidates.size(), false);
    while (static_cast<int>(result.set.bases.size()) < opts.n_bases) {
        SearchRound round;
        int best_idx = -1;
        double best_dist = 0.0;
        for (size_t i = 0; i < space.candidates.size(); ++i) {
            if (taken[i]) {
                continue;
            }
            const double d = interleave_distance(cand_extrema[i], result.set, opts.pairing);
            round.distances.emplace_back(space.candidates[i], d);
            if (best_idx < 0 || d < best_dist) {  // ties keep the smaller base
                best_idx = static_cast<int>(i);
                best_dist = d;
            }
        }
        taken[static_cast<size_t>(best_idx)] = true;
        round.admitted = space.candidates[static_cast<size_t>(best_idx)];
        result.set.bases.push_back(round.admitted);
        merge_sorted_unique(result.set.accumulated_peaks,
                            cand_extrema[static_cast<size_t>(best_idx)].peaks);
        merge_sorted_unique(result.set.accumulated_troughs,
                            cand_extrema[static_cast<size_t>(best_idx)].troughs);
        result.rounds.push_back(std::move(round));
    }
    return result;
}

}  // namespace abkt
