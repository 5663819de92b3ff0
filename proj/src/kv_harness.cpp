#include "abkt/kv_harness.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <stdexcept>
#include <string>

namespace abkt {

void KvVocabLayout::validate() const {
    const int ids[] = {pad, sep, comma, query_mark, answer_mark};
    std::set<int> uniq(std::begin(ids), std::end(ids));
    if (uniq.size() != 5) {
        throw std::invalid_argument("KvVocabLayout: reserved token ids must be distinct");
    }
    for (int id : ids) {
        if (id < 0 || id >= first_symbol) {
            throw std::invalid_argument(
                "KvVocabLayout: reserved ids must lie below first_symbol");
        }
    }
    if (first_symbol >= vocab_size) {
        throw std::invalid_argument("KvVocabLayout: no symbol ids left for keys/values");
    }
}

int kv_pair_length(const KvTask& task) { return task.key_len + 1 + task.value_len; }

int kv_query_length(const KvTask& task) { return 1 + task.key_len + 1; }

int kv_min_total_length(int k_pairs, int key_len, int value_len) {
    const int pair_len = key_len + 1 + value_len;
    return k_pairs * pair_len + (k_pairs - 1) + (1 + key_len + 1);
}

namespace {

struct Layout {
    int slot = 0;  // pairs rendered before the target pair
    int lead = 0;  // padding tokens before the pair block
    int mid = 0;   // padding tokens between the pair block and the query
};

Layout compute_layout(const KvTask& task) {
    const int k = static_cast<int>(task.pairs.size());
    const int pair_len = kv_pair_length(task);
    const int block_len = k * pair_len + (k - 1);
    const int tail_len = kv_query_length(task);
    const int p = task.target_position;
    if (p < pair_len - 1) {
        throw std::invalid_argument("kv layout: target_position " + std::to_string(p) +
                                    " cannot fit a whole pair before it");
    }
    Layout lay;
    lay.slot = std::min(k - 1, (p - (pair_len - 1)) / (pair_len + 1));
    lay.lead = p - (pair_len - 1) - lay.slot * (pair_len + 1);
    lay.mid = task.total_length - tail_len - lay.lead - block_len;
    if (lay.mid < 0) {
        throw std::invalid_argument(
            "kv layout: placement at " + std::to_string(p) + " does not fit in total_length " +
            std::to_string(task.total_length));
    }
    return lay;
}

void validate_task(const KvTask& task) {
    task.vocab.validate();
    if (task.pairs.empty()) {
        throw std::invalid_argument("KvTask: no pairs");
    }
    if (task.key_len < 1 || task.value_len < 1) {
        throw std::invalid_argument("KvTask: key_len and value_len must be positive");
    }
    if (task.target_index < 0 ||
        task.target_index >= static_cast<int>(task.pairs.size())) {
        throw std::invalid_argument("KvTask: target_index out of range");
    }
    if (task.target_position < 0 || task.target_position >= task.total_length) {
        throw std::invalid_argument("KvTask: target_position outside the prompt");
    }
}

}  // namespace

KvTask generate_task(int k_pairs, std::uint64_t seed, const KvVocabLayout& vocab,
                     int key_len, int value_len, int total_length) {
    vocab.validate();
    if (k_pairs < 1) {
        throw std::invalid_argument("generate_task: k_pairs must be positive");
    }
    if (key_len < 1 || value_len < 1) {
        throw std::invalid_argument("generate_task: key_len and value_len must be positive");
    }
    if (total_length < kv_min_total_length(k_pairs, key_len, value_len)) {
        throw std::invalid_argument(
            "generate_task: total_length " + std::to_string(total_length) +
            " below minimum " +
            std::to_string(kv_min_total_length(k_pairs, key_len, value_len)) + " for K=" +
            std::to_string(k_pairs));
    }

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> symbol(vocab.first_symbol, vocab.vocab_size - 1);
    auto draw_distinct = [&](int len, int count) {
        std::set<std::vector<int>> seen;
        std::vector<std::vector<int>> out;
        int attempts = 0;
        while (static_cast<int>(out.size()) < count) {
            if (++attempts > 1000 * count) {
                throw std::runtime_error(
                    "generate_task: cannot draw enough distinct strings; vocabulary too small");
            }
            std::vector<int> s(static_cast<size_t>(len));
            for (int& t : s) {
                t = symbol(rng);
            }
            if (seen.insert(s).second) {
                out.push_back(std::move(s));
            }
        }
        return out;
    };

    KvTask task;
    task.vocab = vocab;
    task.key_len = key_len;
    task.value_len = value_len;
    task.total_length = total_length;
    const auto keys = draw_distinct(key_len, k_pairs);
    const auto values = draw_distinct(value_len, k_pairs);
    for (int i = 0; i < k_pairs; ++i) {
        task.pairs.emplace_back(keys[static_cast<size_t>(i)], values[static_cast<size_t>(i)]);
    }
    std::uniform_int_distribution<int> pick_target(0, k_pairs - 1);
    task.target_index = pick_target(rng);
    task.placement = Placement::kUnconstrained;
    // Natural order, no leading padding.
    const int pair_len = kv_pair_length(task);
    task.target_position = task.target_index * (pair_len + 1) + pair_len - 1;
    compute_layout(task);  // sanity: the default placement always fits
    return task;
}

KvTask place_target(const KvTask& task, int position, Placement placement) {
    validate_task(task);
    KvTask out = task;
    out.target_position = position;
    out.placement = placement;
    validate_task(out);
    compute_layout(out);  // throws if the placement is impossible
    return out;
}

std::vector<int> render_prompt(const KvTask& task) {
    validate_task(task);
    const Layout lay = compute_layout(task);
    const auto& vocab = task.vocab;

    std::vector<int> order;  // pair indices in render order
    order.reserve(task.pairs.size());
    for (int i = 0; i < static_cast<int>(task.pairs.size()); ++i) {
        if (i != task.target_index) {
            order.push_back(i);
        }
    }
    order.insert(order.begin() + lay.slot, task.target_index);

    std::vector<int> tokens;
    tokens.reserve(static_cast<size_t>(task.total_length));
    tokens.insert(tokens.end(), static_cast<size_t>(lay.lead), vocab.pad);
    for (size_t r = 0; r < order.size(); ++r) {
        if (r > 0) {
            tokens.push_back(vocab.comma);
        }
        const auto& [key, value] = task.pairs[static_cast<size_t>(order[r])];
        tokens.insert(tokens.end(), key.begin(), key.end());
        tokens.push_back(vocab.sep);
        tokens.insert(tokens.end(), value.begin(), value.end());
    }
    tokens.insert(tokens.end(), static_cast<size_t>(lay.mid), vocab.pad);
    tokens.push_back(vocab.query_mark);
    const auto& target_key = task.pairs[static_cast<size_t>(task.target_index)].first;
    tokens.insert(tokens.end(), target_key.begin(), target_key.end());
    tokens.push_back(vocab.answer_mark);

    if (static_cast<int>(tokens.size()) != task.total_length) {
        throw std::logic_error("render_prompt: layout arithmetic produced length " +
                               std::to_string(tokens.size()) + ", expected " +
                               std::to_string(task.total_length));
    }
    return tokens;
}

const std::vector<int>& target_value(const KvTask& task) {
    return task.pairs[static_cast<size_t>(task.target_index)].second;
}

PeakTroughPick peak_trough_positions_for(double base, const RotaryConfig& cfg,
                                         int window_lo, int window_hi, int n_extrema,
                                         int init_period) {
    if (window_lo < 0 || window_hi < window_lo || window_hi >= cfg.max_context) {
        throw std::invalid_argument("peak_trough_positions_for: bad window");
    }
    RotaryConfig c = cfg;
    c.base = base;
    const ExtremaSet ext = extrema(c, n_extrema, init_period);

    const double mid = 0.5 * (window_lo + window_hi);
    PeakTroughPick pick;
    bool found = false;
    double best = 0.0;
    for (int p : ext.peaks) {
        if (p < window_lo || p > window_hi) {
            continue;
        }
        const double d = std::abs(p - mid);
        if (!found || d < best) {
            found = true;
            best = d;
            pick.peak = p;
        }
    }
    if (!found) {
        throw std::runtime_error("peak_trough_positions_for: no peak inside the window");
    }
    bool tfound = false;
    double tbest = 0.0;
    for (int t : ext.troughs) {
        const double d = std::abs(t - pick.peak);
        if (!tfound || d < tbest) {
            tfound = true;
            tbest = d;
            pick.trough = t;
        }
    }
    return pick;
}

double placement_accuracy(const RetrievalReport& report, Placement placement) {
    int n = 0;
    int correct = 0;
    for (const auto& r : report.records) {
        if (r.placement == placement) {
            ++n;
            correct += r.correct ? 1 : 0;
        }
    }
    return n == 0 ? 0.0 : static_cast<double>(correct) / n;
}

RetrievalReport evaluate(const ForwardFn& forward, const std::vector<KvTask>& tasks,
                         std::span<const double> bases, int max_context) {
    if (tasks.empty()) {
        throw std::invalid_argument("evaluate: no tasks");
    }
    RetrievalReport report;
    for (const auto& task : tasks) {
        const std::vector<int> prompt = render_prompt(task);
        if (static_cast<int>(prompt.size()) + task.value_len > max_context) {
            throw std::invalid_argument(
                "evaluate: prompt plus generated value exceeds max_context");
        }
        const DecodeResult dec = decode_sequence(forward, prompt, bases, task.value_len,
                                                 /*stop_token=*/-1, max_context);
        const bool correct = dec.tokens == target_value(task);
        report.records.push_back({task.placement, task.target_position, correct});
        report.n_samples += 1;
        report.n_correct += correct ? 1 : 0;
    }
    report.accuracy = static_cast<double>(report.n_correct) / report.n_samples;
    return report;
}

}  // namespace abkt
