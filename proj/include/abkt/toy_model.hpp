#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace abkt {

struct ModelConfig {
    int vocab_size = 64;
    int model_dim = 64;
    int head_dim = 16;
    int n_heads = 4;
    int n_layers = 2;
    int max_context = 256;
    double train_base = 10000.0;

    int ffn_dim() const { return 4 * model_dim; }
    void validate() const;  // throws std::invalid_argument
};

struct LayerParams {
    Eigen::VectorXd attn_norm_gain;  // [model_dim]
    Eigen::MatrixXd wq, wk, wv, wo;  // [model_dim, model_dim]
    Eigen::VectorXd mlp_norm_gain;   // [model_dim]
    Eigen::MatrixXd w1;              // [model_dim, ffn_dim]
    Eigen::MatrixXd w2;              // [ffn_dim, model_dim]
};

struct ModelParams {
    ModelConfig config;
    Eigen::MatrixXd embedding;        // [vocab_size, model_dim]
    std::vector<LayerParams> layers;  // n_layers entries
    Eigen::VectorXd final_norm_gain;  // [model_dim]
    Eigen::MatrixXd output;           // [model_dim, vocab_size]
};

// Seeded uniform init scaled by 1/sqrt(fan_in); norm gains start at 1.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);
ModelParams zeros_like(const ModelParams& p);
std::size_t param_count(const ModelParams& p);

// Visits every parameter tensor as a flat (data, size) block, in a fixed
// deterministic order shared by checkpoints and the optimizer.
template <class F>
void visit_params(ModelParams& p, F&& f) {
    f("embedding", p.embedding.data(), p.embedding.size());
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        auto& lp = p.layers[l];
        const std::string prefix = "layer" + std::to_string(l) + ".";
        f(prefix + "attn_norm_gain", lp.attn_norm_gain.data(), lp.attn_norm_gain.size());
        f(prefix + "wq", lp.wq.data(), lp.wq.size());
        f(prefix + "wk", lp.wk.data(), lp.wk.size());
        f(prefix + "wv", lp.wv.data(), lp.wv.size());
        f(prefix + "wo", lp.wo.data(), lp.wo.size());
        f(prefix + "mlp_norm_gain", lp.mlp_norm_gain.data(), lp.mlp_norm_gain.size());
        f(prefix + "w1", lp.w1.data(), lp.w1.size());
        f(prefix + "w2", lp.w2.data(), lp.w2.size());
    }
    f("final_norm_gain", p.final_norm_gain.data(), p.final_norm_gain.size());
    f("output", p.output.data(), p.output.size());
}

// Block-diagonal rotation R_{theta,m}: pairs (2i, 2i+1) rotate by angle
// m * base^(-2i/d) where d = v.size(). Orthogonal, so norm-preserving.
void rotate_inplace(Eigen::Ref<Eigen::VectorXd> v, int position, double base);
Eigen::VectorXd rotate(const Eigen::VectorXd& v, int position, double base);

// Raw pre-softmax scores: score(m, n) = (R_m q_m) . (R_n k_n). Rows index
// positions; no scaling, no mask.
Eigen::MatrixXd attention_scores(const Eigen::MatrixXd& queries,
                                 const Eigen::MatrixXd& keys, double base);

// Causal next-token distributions, one softmax row per position. The rotary
// base is an inference-time argument, not a stored constant.
Eigen::MatrixXd forward(const ModelParams& p, std::span<const int> tokens, double base);

struct LossResult {
    double loss_sum = 0.0;  // summed cross entropy over counted positions
    int count = 0;          // positions whose target != ignore_token
};

// Accumulates d(loss_sum)/dparam into `grads` (same shapes as `p`, not
// cleared here). Training always runs at base = train_base.
LossResult cross_entropy_backward(const ModelParams& p, std::span<const int> tokens,
                                  int ignore_token, ModelParams& grads);

struct TrainOptions {
    int steps = 100;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    int batch_size = 8;
    int ignore_token = -1;  // targets equal to this id carry no loss
};

struct TrainResult {
    ModelParams params;
    std::vector<double> loss_trace;  // mean cross entropy per step
};

// Adam on mean cross entropy over sampled batches. Non-finite loss aborts.
TrainResult train(const ModelConfig& cfg, const std::vector<std::vector<int>>& corpus,
                  const TrainOptions& opts);

// Flat little-endian doubles at `path` plus a JSON sidecar at `path`.json
// describing the config and tensor shapes.
void save_checkpoint(const ModelParams& p, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace abkt
