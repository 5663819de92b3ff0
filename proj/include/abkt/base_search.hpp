#pragma once

#include <string>
#include <vector>

#include "abkt/waveform.hpp"

namespace abkt {

// Discrete base search space: candidates b_min + i*stride for integer i with
// 0 < i <= (b_max - b_min)/stride. b_min itself is not a candidate.
struct SearchSpace {
    double b_min = 0.0;
    double b_max = 0.0;
    double stride = 0.0;
    std::vector<double> candidates;  // ascending grid points
};

SearchSpace build_space(double b_min, double b_max, double stride);

// How candidate extrema are matched against the accumulated ones.
//   kNearest:   each candidate peak pairs with its nearest accumulated trough
//               (and each candidate trough with its nearest accumulated peak).
//   kIndexwise: sorted lists paired index by index over the shorter length.
enum class PairingStrategy { kNearest, kIndexwise };

PairingStrategy pairing_from_string(const std::string& name);
std::string to_string(PairingStrategy s);

// The searched collection of rotary bases plus the accumulated extrema that
// drove the selection. bases[0] is always the training base.
struct BaseSet {
    std::vector<double> bases;
    std::vector<int> accumulated_peaks;    // sorted, unique
    std::vector<int> accumulated_troughs;  // sorted, unique
};

// Matching cost between a candidate's extrema and the accumulated set; lower
// means better interleaving. Throws if any extrema list is empty.
double interleave_distance(const ExtremaSet& candidate, const BaseSet& accumulated,
                           PairingStrategy strategy);

struct SearchOptions {
    int n_bases = 2;
    int n_extrema = 5;
    int init_period = 64;
    PairingStrategy pairing = PairingStrategy::kNearest;
};

struct SearchRound {
    double admitted = 0.0;
    // (candidate base, distance) for every candidate still in play this round,
    // in ascending base order.
    std::vector<std::pair<double, double>> distances;
};

struct SearchResult {
    BaseSet set;
    std::vector<SearchRound> rounds;
};

// Greedy interleaving search: start from {train_base}, each round admit the
// remaining candidate with the minimum interleave distance (ties: smallest
// base) and fold its extrema into the accumulated peak/trough sets.
SearchResult search_bases(const SearchSpace& space, const RotaryConfig& config,
                          const SearchOptions& opts);

}  // namespace abkt
