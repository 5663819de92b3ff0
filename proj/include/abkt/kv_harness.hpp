#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "abkt/ensemble.hpp"
#include "abkt/waveform.hpp"

namespace abkt {

// Reserved token ids for the synthetic retrieval prompt. Keys and values draw
// only from [first_symbol, vocab_size); pad never appears in supervised
// targets.
struct KvVocabLayout {
    int vocab_size = 64;
    int pad = 0;
    int sep = 1;          // between a key and its value
    int comma = 2;        // between consecutive pairs
    int query_mark = 3;   // opens the query tail
    int answer_mark = 4;  // closes the query tail; generation starts after it
    int first_symbol = 5;

    int n_symbols() const { return vocab_size - first_symbol; }
    void validate() const;
};

enum class Placement { kPeak, kTrough, kUnconstrained };

// One synthetic key-value retrieval instance. The rendered prompt is
//   [pad x lead] k1 SEP v1 COMMA k2 SEP v2 ... kK SEP vK [pad x mid]
//   QUERY key(target) ANSWER
// reordered so the target pair's last token lands exactly at target_position,
// with the leading padding absorbing placement differences so total_length
// never changes.
struct KvTask {
    std::vector<std::pair<std::vector<int>, std::vector<int>>> pairs;  // (key, value)
    int target_index = 0;     // index into `pairs`
    int target_position = 0;  // absolute index of the target pair's last token
    Placement placement = Placement::kUnconstrained;
    int total_length = 0;  // rendered prompt length, exact
    KvVocabLayout vocab;
    int key_len = 8;
    int value_len = 8;
};

// Tokens occupied by one rendered pair: key SEP value.
int kv_pair_length(const KvTask& task);
// Tokens in the query tail: QUERY key ANSWER.
int kv_query_length(const KvTask& task);
// Smallest total_length that can hold K pairs plus the query tail.
int kv_min_total_length(int k_pairs, int key_len, int value_len);

// K pairs with pairwise-distinct keys and values, a uniformly chosen target,
// and an unconstrained default placement. Deterministic in `seed`.
KvTask generate_task(int k_pairs, std::uint64_t seed, const KvVocabLayout& vocab,
                     int key_len, int value_len, int total_length);

// Same task with the target pair's last token anchored at `position`.
// Throws if no reordering plus padding can realize the placement.
KvTask place_target(const KvTask& task, int position,
                    Placement placement = Placement::kUnconstrained);

std::vector<int> render_prompt(const KvTask& task);  // length == total_length
const std::vector<int>& target_value(const KvTask& task);

// Peak chosen closest to the midpoint of [window_lo, window_hi] plus the
// trough nearest to that peak (ties to the smaller position).
struct PeakTroughPick {
    int peak = 0;
    int trough = 0;
};
PeakTroughPick peak_trough_positions_for(double base, const RotaryConfig& cfg,
                                         int window_lo, int window_hi, int n_extrema,
                                         int init_period);

struct SampleRecord {
    Placement placement = Placement::kUnconstrained;
    int position = 0;
    bool correct = false;
};

struct RetrievalReport {
    int n_samples = 0;
    int n_correct = 0;
    double accuracy = 0.0;
    std::vector<SampleRecord> records;
};

double placement_accuracy(const RetrievalReport& report, Placement placement);

// Decode each task's value with the ensemble (a single base degenerates to
// plain greedy decoding) and score exact match of the value token sequence.
RetrievalReport evaluate(const ForwardFn& forward, const std::vector<KvTask>& tasks,
                         std::span<const double> bases, int max_context);

}  // namespace abkt
