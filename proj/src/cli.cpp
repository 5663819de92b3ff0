#include "abkt/cli.hpp"

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "abkt/base_search.hpp"
#include "abkt/ensemble.hpp"
#include "abkt/kv_harness.hpp"
#include "abkt/numio.hpp"
#include "abkt/toy_model.hpp"
#include "abkt/waveform.hpp"

namespace abkt {

namespace {

using nlohmann::json;

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open output file " + path);
    }
    out << text;
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot read input file " + path);
    }
    return json::parse(in);
}

std::vector<double> read_bases_file(const std::string& path) {
    const json j = read_json_file(path);
    const json& arr = j.is_object() ? j.at("bases") : j;
    if (!arr.is_array() || arr.empty()) {
        throw std::runtime_error("bases file " + path + " holds no base list");
    }
    return arr.get<std::vector<double>>();
}

ForwardFn model_forward(const ModelParams& params) {
    return [&params](std::span<const int> tokens, double base) {
        const Eigen::MatrixXd probs = forward(params, tokens, base);
        TokenDistribution dist;
        const auto last = probs.row(probs.rows() - 1);
        dist.probs.assign(last.data(), last.data() + last.size());
        return dist;
    };
}

// ---- waveform ----------------------------------------------------------

struct WaveformArgs {
    double base = 10000.0;
    int dim = 128;
    int max_context = 4096;
    std::string out = "-";
};

void run_waveform(const WaveformArgs& a) {
    RotaryConfig cfg{a.base, a.dim, a.max_context, a.base};
    const UpperBoundCurve c = curve(cfg);
    std::ostringstream os;
    os << "distance,upper_bound\n";
    for (size_t s = 0; s < c.values.size(); ++s) {
        os << s << ',' << format_double(c.values[s]) << '\n';
    }
    write_text(a.out, os.str());
}

// ---- extrema -----------------------------------------------------------

struct ExtremaArgs {
    double base = 10000.0;
    int dim = 128;
    int max_context = 4096;
    int n = 5;
    int init_period = 64;
    std::string out = "-";
};

void run_extrema(const ExtremaArgs& a) {
    RotaryConfig cfg{a.base, a.dim, a.max_context, a.base};
    const ExtremaSet ext = extrema(cfg, a.n, a.init_period);
    json j{{"base", ext.base}, {"peaks", ext.peaks}, {"troughs", ext.troughs}};
    write_text(a.out, j.dump(2) + "\n");
}

// ---- search ------------------------------------------------------------

struct SearchArgs {
    std::string config_path;
    double b_min = 10000.0;
    double b_max = 30000.0;
    double stride = 500.0;
    int n_bases = 6;
    int n_extrema = 5;
    int init_period = 64;
    int head_dim = 128;
    int max_context = 4096;
    std::string pairing = "nearest";
    std::string out = "-";
};

void run_search(const SearchArgs& a, const CLI::App* cmd) {
    SearchArgs eff = a;
    if (!a.config_path.empty()) {
        const json cfg = read_json_file(a.config_path);
        auto take_d = [&](const char* key, double& slot, const char* flag) {
            if (cfg.contains(key) && cmd->count(flag) == 0) slot = cfg.at(key).get<double>();
        };
        auto take_i = [&](const char* key, int& slot, const char* flag) {
            if (cfg.contains(key) && cmd->count(flag) == 0) slot = cfg.at(key).get<int>();
        };
        take_d("b_min", eff.b_min, "--b-min");
        take_d("b_max", eff.b_max, "--b-max");
        take_d("stride", eff.stride, "--stride");
        take_i("n_bases", eff.n_bases, "--n-bases");
        take_i("n_extrema", eff.n_extrema, "--n-extrema");
        take_i("init_period", eff.init_period, "--init-period");
        take_i("head_dim", eff.head_dim, "--head-dim");
        take_i("max_context", eff.max_context, "--max-context");
        if (cfg.contains("pairing") && cmd->count("--pairing") == 0) {
            eff.pairing = cfg.at("pairing").get<std::string>();
        }
    }
    const SearchSpace space = build_space(eff.b_min, eff.b_max, eff.stride);
    RotaryConfig rc{eff.b_min, eff.head_dim, eff.max_context, eff.b_min};
    SearchOptions opts;
    opts.n_bases = eff.n_bases;
    opts.n_extrema = eff.n_extrema;
    opts.init_period = eff.init_period;
    opts.pairing = pairing_from_string(eff.pairing);
    const SearchResult result = search_bases(space, rc, opts);

    json rounds = json::array();
    for (const auto& r : result.rounds) {
        json distances = json::object();
        for (const auto& [base, d] : r.distances) {
            distances[format_double(base)] = d;
        }
        rounds.push_back(json{{"admitted", r.admitted}, {"distances", distances}});
    }
    json j{{"bases", result.set.bases}, {"rounds", rounds}};
    write_text(eff.out, j.dump(2) + "\n");
}

// ---- train -------------------------------------------------------------

struct TrainArgs {
    int vocab = 64;
    int model_dim = 64;
    int head_dim = 16;
    int heads = 4;
    int layers = 2;
    int max_context = 256;
    double train_base = 10000.0;
    int steps = 200;
    double lr = 1e-3;
    int batch = 8;
    std::uint64_t seed = 0;
    std::string data = "kv";
    std::string corpus_path;
    int kv_pairs = 4;
    int kv_samples = 512;
    int key_len = 4;
    int value_len = 4;
    int total_length = 0;  // 0: derived from kv settings
    std::string out;
    std::string loss_out;
};

std::vector<std::vector<int>> kv_training_corpus(const ModelConfig& cfg,
                                                 const TrainArgs& a) {
    KvVocabLayout vocab;
    vocab.vocab_size = cfg.vocab_size;
    int total = a.total_length;
    if (total == 0) {
        // room for a couple of pair-widths of padding play
        total = kv_min_total_length(a.kv_pairs, a.key_len, a.value_len) +
                2 * (a.key_len + 1 + a.value_len);
    }
    if (total + a.value_len > cfg.max_context) {
        throw std::invalid_argument("train: kv prompt length exceeds max_context");
    }
    std::mt19937_64 rng(a.seed ^ 0xc2b2ae3d27d4eb4full);
    std::vector<std::vector<int>> corpus;
    corpus.reserve(static_cast<size_t>(a.kv_samples));
    for (int i = 0; i < a.kv_samples; ++i) {
        KvTask task = generate_task(a.kv_pairs, rng(), vocab, a.key_len, a.value_len, total);
        // spread target placements over the feasible range
        const int pair_len = kv_pair_length(task);
        const int tail = kv_query_length(task);
        const int block = a.kv_pairs * pair_len + (a.kv_pairs - 1);
        const int spare = total - tail - block;
        const int lo = pair_len - 1;
        const int hi = (a.kv_pairs - 1) * (pair_len + 1) + pair_len - 1 + spare;
        std::uniform_int_distribution<int> place(lo, hi);
        task = place_target(task, place(rng));
        std::vector<int> seq = render_prompt(task);
        const auto& value = target_value(task);
        seq.insert(seq.end(), value.begin(), value.end());
        corpus.push_back(std::move(seq));
    }
    return corpus;
}

std::vector<std::vector<int>> corpus_from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot read corpus file " + path);
    }
    std::vector<std::vector<int>> corpus;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        corpus.push_back(json::parse(line).get<std::vector<int>>());
    }
    if (corpus.empty()) {
        throw std::runtime_error("corpus file " + path + " holds no sequences");
    }
    return corpus;
}

void run_train(const TrainArgs& a) {
    if (a.out.empty()) {
        throw std::invalid_argument("train: --out checkpoint path is required");
    }
    ModelConfig cfg;
    cfg.vocab_size = a.vocab;
    cfg.model_dim = a.model_dim;
    cfg.head_dim = a.head_dim;
    cfg.n_heads = a.heads;
    cfg.n_layers = a.layers;
    cfg.max_context = a.max_context;
    cfg.train_base = a.train_base;
    cfg.validate();

    std::vector<std::vector<int>> corpus;
    if (a.data == "kv") {
        corpus = kv_training_corpus(cfg, a);
    } else if (a.data == "file") {
        corpus = corpus_from_file(a.corpus_path);
    } else {
        throw std::invalid_argument("train: --data must be 'kv' or 'file'");
    }

    TrainOptions opts;
    opts.steps = a.steps;
    opts.learning_rate = a.lr;
    opts.seed = a.seed;
    opts.batch_size = a.batch;
    opts.ignore_token = KvVocabLayout{}.pad;
    const TrainResult result = train(cfg, corpus, opts);

    save_checkpoint(result.params, a.out);
    std::ostringstream os;
    os << "step,loss\n";
    for (size_t i = 0; i < result.loss_trace.size(); ++i) {
        os << (i + 1) << ',' << format_double(result.loss_trace[i]) << '\n';
    }
    write_text(a.loss_out.empty() ? a.out + ".loss.csv" : a.loss_out, os.str());
}

// ---- decode ------------------------------------------------------------

struct DecodeArgs {
    std::string ckpt;
    std::string context_path;
    std::string bases_path;
    double base = 0.0;  // single-base alternative to --bases
    int max_new = 8;
    int stop = -1;
    bool sequential = false;
    std::string out = "-";
};

json step_to_json(const EnsembleStep& s) {
    std::vector<int> top1;
    top1.reserve(s.per_run.size());
    for (const auto& d : s.per_run) {
        top1.push_back(d.argmax());
    }
    return json{{"alpha", s.confidences}, {"per_run_top1", top1}, {"chosen", s.chosen_token}};
}

void run_decode(const DecodeArgs& a) {
    const ModelParams params = load_checkpoint(a.ckpt);
    const std::vector<int> context =
        read_json_file(a.context_path).get<std::vector<int>>();
    std::vector<double> bases;
    if (!a.bases_path.empty()) {
        bases = read_bases_file(a.bases_path);
    } else if (a.base > 0.0) {
        bases.push_back(a.base);
    } else {
        throw std::invalid_argument("decode: provide --bases or --base");
    }
    const DecodeResult dec =
        decode_sequence(model_forward(params), context, bases, a.max_new, a.stop,
                        params.config.max_context, !a.sequential);
    json steps = json::array();
    for (const auto& s : dec.steps) {
        steps.push_back(step_to_json(s));
    }
    json j{{"tokens", dec.tokens}, {"steps", steps}, {"truncated", dec.truncated}};
    write_text(a.out, j.dump(2) + "\n");
}

// ---- eval-kv -----------------------------------------------------------

struct EvalKvArgs {
    std::string ckpt;
    std::string bases_path;
    double base = 0.0;
    double placement_base = 0.0;  // default: first base
    int k_pairs = 4;
    int samples = 50;
    std::uint64_t seed = 0;
    int key_len = 4;
    int value_len = 4;
    int total_length = 0;
    int n_extrema = 5;
    int init_period = 8;
    bool records = false;
    std::string out = "-";
};

void run_eval_kv(const EvalKvArgs& a) {
    const ModelParams params = load_checkpoint(a.ckpt);
    const ModelConfig& mc = params.config;
    std::vector<double> bases;
    if (!a.bases_path.empty()) {
        bases = read_bases_file(a.bases_path);
    } else if (a.base > 0.0) {
        bases.push_back(a.base);
    } else {
        throw std::invalid_argument("eval-kv: provide --bases or --base");
    }

    KvVocabLayout vocab;
    vocab.vocab_size = mc.vocab_size;
    int total = a.total_length;
    if (total == 0) {
        total = kv_min_total_length(a.k_pairs, a.key_len, a.value_len) +
                2 * (a.key_len + 1 + a.value_len);
    }
    if (total + a.value_len > mc.max_context) {
        throw std::invalid_argument("eval-kv: prompt length exceeds the model context");
    }

    const double waveform_base = a.placement_base > 0.0 ? a.placement_base : bases[0];
    RotaryConfig rc{waveform_base, mc.head_dim, mc.max_context, mc.train_base};
    const int lo = static_cast<int>(0.4 * total);
    const int hi = static_cast<int>(0.6 * total);
    const PeakTroughPick pick =
        peak_trough_positions_for(waveform_base, rc, lo, hi, a.n_extrema, a.init_period);

    std::mt19937_64 rng(a.seed ^ 0xa0761d6478bd642full);
    std::vector<KvTask> tasks;
    tasks.reserve(static_cast<size_t>(2 * a.samples));
    for (int i = 0; i < a.samples; ++i) {
        const KvTask base_task =
            generate_task(a.k_pairs, rng(), vocab, a.key_len, a.value_len, total);
        tasks.push_back(place_target(base_task, pick.peak, Placement::kPeak));
        tasks.push_back(place_target(base_task, pick.trough, Placement::kTrough));
    }
    const RetrievalReport report =
        evaluate(model_forward(params), tasks, bases, mc.max_context);

    json j{{"peak_acc", placement_accuracy(report, Placement::kPeak)},
           {"trough_acc", placement_accuracy(report, Placement::kTrough)},
           {"n", a.samples}};
    if (a.records) {
        json recs = json::array();
        for (const auto& r : report.records) {
            recs.push_back(json{{"placement", r.placement == Placement::kPeak ? "peak"
                                              : r.placement == Placement::kTrough
                                                  ? "trough"
                                                  : "unconstrained"},
                                {"position", r.position},
                                {"correct", r.correct}});
        }
        j["records"] = recs;
        j["peak_position"] = pick.peak;
        j["trough_position"] = pick.trough;
    }
    write_text(a.out, j.dump(2) + "\n");
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"rotary attention waveform analysis, base search, and "
                 "multi-base ensemble decoding on a miniature transformer"};
    app.require_subcommand(1);

    WaveformArgs wa;
    auto* wave = app.add_subcommand("waveform", "emit the upper-bound curve as CSV");
    wave->add_option("--base", wa.base, "rotary base")->required();
    wave->add_option("--dim", wa.dim, "head dimension (even)")->required();
    wave->add_option("--max-context", wa.max_context, "curve length");
    wave->add_option("-o,--out", wa.out, "output path ('-' = stdout)");

    ExtremaArgs ea;
    auto* ext = app.add_subcommand("extrema", "locate waveform peaks and troughs");
    ext->add_option("--base", ea.base, "rotary base")->required();
    ext->add_option("--dim", ea.dim, "head dimension (even)")->required();
    ext->add_option("--max-context", ea.max_context, "curve length");
    ext->add_option("--n", ea.n, "extrema per kind");
    ext->add_option("--init-period", ea.init_period, "initial search window");
    ext->add_option("-o,--out", ea.out, "output path ('-' = stdout)");

    SearchArgs sa;
    auto* sea = app.add_subcommand("search", "greedy interleaving base search");
    sea->add_option("--config", sa.config_path, "JSON config; flags override its fields");
    sea->add_option("--b-min", sa.b_min, "training base and space minimum");
    sea->add_option("--b-max", sa.b_max, "space maximum");
    sea->add_option("--stride", sa.stride, "grid stride");
    sea->add_option("--n-bases", sa.n_bases, "bases to select (incl. the training base)");
    sea->add_option("--n-extrema", sa.n_extrema, "peaks/troughs per base");
    sea->add_option("--init-period", sa.init_period, "initial search window");
    sea->add_option("--head-dim", sa.head_dim, "head dimension (even)");
    sea->add_option("--max-context", sa.max_context, "context length bound");
    sea->add_option("--pairing", sa.pairing, "nearest | indexwise");
    sea->add_option("-o,--out", sa.out, "output path ('-' = stdout)");

    TrainArgs ta;
    auto* tra = app.add_subcommand("train", "train the miniature transformer");
    tra->add_option("--vocab", ta.vocab, "vocabulary size");
    tra->add_option("--model-dim", ta.model_dim, "model width");
    tra->add_option("--head-dim", ta.head_dim, "attention head width (even)");
    tra->add_option("--heads", ta.heads, "attention heads");
    tra->add_option("--layers", ta.layers, "transformer layers");
    tra->add_option("--max-context", ta.max_context, "maximum sequence length");
    tra->add_option("--train-base", ta.train_base, "rotary base used for training");
    tra->add_option("--steps", ta.steps, "gradient steps");
    tra->add_option("--lr", ta.lr, "learning rate");
    tra->add_option("--batch", ta.batch, "sequences per step");
    tra->add_option("--seed", ta.seed, "RNG seed (required)")->required();
    tra->add_option("--data", ta.data, "'kv' (synthetic retrieval) or 'file'");
    tra->add_option("--corpus", ta.corpus_path, "JSONL token sequences for --data file");
    tra->add_option("--kv-pairs", ta.kv_pairs, "pairs per synthetic sample");
    tra->add_option("--kv-samples", ta.kv_samples, "synthetic corpus size");
    tra->add_option("--key-len", ta.key_len, "key token length");
    tra->add_option("--value-len", ta.value_len, "value token length");
    tra->add_option("--total-length", ta.total_length, "prompt length (0 = derive)");
    tra->add_option("--out", ta.out, "checkpoint path")->required();
    tra->add_option("--loss-out", ta.loss_out, "loss CSV path (default <out>.loss.csv)");

    DecodeArgs da;
    auto* dec = app.add_subcommand("decode", "confidence-weighted multi-base decoding");
    dec->add_option("--ckpt", da.ckpt, "checkpoint path")->required();
    dec->add_option("--context", da.context_path, "JSON token array")->required();
    dec->add_option("--bases", da.bases_path, "bases JSON (search output or array)");
    dec->add_option("--base", da.base, "single rotary base");
    dec->add_option("--max-new", da.max_new, "tokens to generate");
    dec->add_option("--stop", da.stop, "stop token id (-1: none)");
    dec->add_flag("--sequential", da.sequential, "evaluate runs sequentially");
    dec->add_option("-o,--out", da.out, "trace path ('-' = stdout)");

    EvalKvArgs ka;
    auto* ekv = app.add_subcommand("eval-kv", "peak/trough key-value retrieval protocol");
    ekv->add_option("--ckpt", ka.ckpt, "checkpoint path")->required();
    ekv->add_option("--bases", ka.bases_path, "bases JSON (search output or array)");
    ekv->add_option("--base", ka.base, "single rotary base");
    ekv->add_option("--placement-base", ka.placement_base,
                    "waveform base for peak/trough placement (default: first base)");
    ekv->add_option("--k", ka.k_pairs, "pairs per sample");
    ekv->add_option("--samples", ka.samples, "samples (each gets a peak and a trough round)");
    ekv->add_option("--seed", ka.seed, "RNG seed (required)")->required();
    ekv->add_option("--key-len", ka.key_len, "key token length");
    ekv->add_option("--value-len", ka.value_len, "value token length");
    ekv->add_option("--total-length", ka.total_length, "prompt length (0 = derive)");
    ekv->add_option("--n-extrema", ka.n_extrema, "extrema per kind for placement");
    ekv->add_option("--init-period", ka.init_period, "initial waveform search window");
    ekv->add_flag("--records", ka.records, "include per-sample records");
    ekv->add_option("-o,--out", ka.out, "report path ('-' = stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (wave->parsed()) run_waveform(wa);
        if (ext->parsed()) run_extrema(ea);
        if (sea->parsed()) run_search(sa, sea);
        if (tra->parsed()) run_train(ta);
        if (dec->parsed()) run_decode(da);
        if (ekv->parsed()) run_eval_kv(ka);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace abkt
