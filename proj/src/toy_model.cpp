#include "abkt/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace abkt {

namespace {

constexpr double kNormEps = 1e-8;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    return cdf + x * pdf;
}

// y = g .* x / rms(x) per row; returns the per-row rms for the backward pass.
Eigen::VectorXd rms_norm(const Eigen::MatrixXd& x, const Eigen::VectorXd& gain,
                         Eigen::MatrixXd& y) {
    const auto rows = x.rows();
    Eigen::VectorXd rms(rows);
    y.resize(x.rows(), x.cols());
    for (Eigen::Index t = 0; t < rows; ++t) {
        const double ms = x.row(t).squaredNorm() / static_cast<double>(x.cols());
        rms[t] = std::sqrt(ms + kNormEps);
        y.row(t) = x.row(t).cwiseProduct(gain.transpose()) / rms[t];
    }
    return rms;
}

void rms_norm_backward(const Eigen::MatrixXd& x, const Eigen::VectorXd& gain,
                       const Eigen::VectorXd& rms, const Eigen::MatrixXd& dy,
                       Eigen::MatrixXd& dx, Eigen::VectorXd& dgain) {
    const auto n = static_cast<double>(x.cols());
    dx.resize(x.rows(), x.cols());
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
        const double r = rms[t];
        const Eigen::RowVectorXd u = dy.row(t).cwiseProduct(gain.transpose());
        const double dot = u.dot(x.row(t));
        dx.row(t) = u / r - x.row(t) * (dot / (n * r * r * r));
        dgain += (dy.row(t).cwiseProduct(x.row(t)) / r).transpose();
    }
}

void apply_rope_rows(Eigen::MatrixXd& m, int n_heads, int head_dim, double base,
                     bool inverse) {
    const int half = head_dim / 2;
    std::vector<double> theta(static_cast<size_t>(half));
    for (int i = 0; i < half; ++i) {
        theta[static_cast<size_t>(i)] = std::pow(base, -2.0 * i / head_dim);
    }
    for (Eigen::Index t = 0; t < m.rows(); ++t) {
        for (int h = 0; h < n_heads; ++h) {
            const int off = h * head_dim;
            for (int i = 0; i < half; ++i) {
                double angle = static_cast<double>(t) * theta[static_cast<size_t>(i)];
                if (inverse) {
                    angle = -angle;
                }
                const double c = std::cos(angle);
                const double s = std::sin(angle);
                const double a = m(t, off + 2 * i);
                const double b = m(t, off + 2 * i + 1);
                m(t, off + 2 * i) = a * c - b * s;
                m(t, off + 2 * i + 1) = a * s + b * c;
            }
        }
    }
}

struct LayerTrace {
    Eigen::MatrixXd x_in;     // residual stream entering the layer
    Eigen::MatrixXd xn;       // attn rms-norm output
    Eigen::VectorXd xn_rms;
    Eigen::MatrixXd q_rot, k_rot, v;    // post-rope q/k, plain v
    std::vector<Eigen::MatrixXd> attn;  // per-head causal softmax [T x T]
    Eigen::MatrixXd ctx;                // concatenated head outputs
    Eigen::MatrixXd x_mid;              // residual stream after attention
    Eigen::MatrixXd xn2;                // mlp rms-norm output
    Eigen::VectorXd xn2_rms;
    Eigen::MatrixXd pre_act;  // xn2 * w1
    Eigen::MatrixXd hidden;   // gelu(pre_act)
};

struct ForwardTrace {
    Eigen::MatrixXd x0;  // token embeddings
    std::vector<LayerTrace> layers;
    Eigen::MatrixXd x_final;  // residual stream before final norm
    Eigen::VectorXd final_rms;
    Eigen::MatrixXd xf;      // final rms-norm output
    Eigen::MatrixXd logits;  // [T x vocab]
    Eigen::MatrixXd probs;
};

void check_tokens(const ModelConfig& cfg, std::span<const int> tokens) {
    if (tokens.empty()) {
        throw std::invalid_argument("forward: empty token sequence");
    }
    if (static_cast<int>(tokens.size()) > cfg.max_context) {
        throw std::invalid_argument("forward: sequence length " +
                                    std::to_string(tokens.size()) + " exceeds max_context " +
                                    std::to_string(cfg.max_context));
    }
    for (int t : tokens) {
        if (t < 0 || t >= cfg.vocab_size) {
            throw std::invalid_argument("forward: token id " + std::to_string(t) +
                                        " outside vocabulary");
        }
    }
}

ForwardTrace run_forward(const ModelParams& p, std::span<const int> tokens, double base) {
    const ModelConfig& cfg = p.config;
    cfg.validate();
    check_tokens(cfg, tokens);
    if (!(base > 0.0)) {
        throw std::invalid_argument("forward: base must be positive");
    }
    const auto T = static_cast<Eigen::Index>(tokens.size());
    const int hd = cfg.head_dim;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    ForwardTrace tr;
    tr.x0.resize(T, cfg.model_dim);
    for (Eigen::Index t = 0; t < T; ++t) {
        tr.x0.row(t) = p.embedding.row(tokens[static_cast<size_t>(t)]);
    }

    Eigen::MatrixXd x = tr.x0;
    tr.layers.resize(p.layers.size());
    for (size_t l = 0; l < p.layers.size(); ++l) {
        const LayerParams& lp = p.layers[l];
        LayerTrace& lt = tr.layers[l];
        lt.x_in = x;
        lt.xn_rms = rms_norm(x, lp.attn_norm_gain, lt.xn);

        lt.q_rot = lt.xn * lp.wq;
        lt.k_rot = lt.xn * lp.wk;
        lt.v = lt.xn * lp.wv;
        apply_rope_rows(lt.q_rot, cfg.n_heads, hd, base, false);
        apply_rope_rows(lt.k_rot, cfg.n_heads, hd, base, false);

        lt.attn.assign(static_cast<size_t>(cfg.n_heads), Eigen::MatrixXd::Zero(T, T));
        lt.ctx.resize(T, cfg.model_dim);
        for (int h = 0; h < cfg.n_heads; ++h) {
            const auto qh = lt.q_rot.middleCols(h * hd, hd);
            const auto kh = lt.k_rot.middleCols(h * hd, hd);
            const auto vh = lt.v.middleCols(h * hd, hd);
            Eigen::MatrixXd& a = lt.attn[static_cast<size_t>(h)];
            for (Eigen::Index i = 0; i < T; ++i) {
                // causal softmax over positions 0..i
                double mx = -std::numeric_limits<double>::infinity();
                for (Eigen::Index j = 0; j <= i; ++j) {
                    a(i, j) = qh.row(i).dot(kh.row(j)) * scale;
                    mx = std::max(mx, a(i, j));
                }
                double z = 0.0;
                for (Eigen::Index j = 0; j <= i; ++j) {
                    a(i, j) = std::exp(a(i, j) - mx);
                    z += a(i, j);
                }
                for (Eigen::Index j = 0; j <= i; ++j) {
                    a(i, j) /= z;
                }
            }
            lt.ctx.middleCols(h * hd, hd) = a * vh;
        }
        lt.x_mid = x + lt.ctx * lp.wo;

        lt.xn2_rms = rms_norm(lt.x_mid, lp.mlp_norm_gain, lt.xn2);
        lt.pre_act = lt.xn2 * lp.w1;
        lt.hidden = lt.pre_act.unaryExpr([](double v) { return gelu(v); });
        x = lt.x_mid + lt.hidden * lp.w2;
    }

    tr.x_final = x;
    tr.final_rms = rms_norm(x, p.final_norm_gain, tr.xf);
    tr.logits = tr.xf * p.output;
    if (!tr.logits.allFinite()) {
        throw std::runtime_error("forward: non-finite logits (sequence length " +
                                 std::to_string(T) + ", base " + std::to_string(base) + ")");
    }
    tr.probs.resize(T, cfg.vocab_size);
    for (Eigen::Index t = 0; t < T; ++t) {
        const double mx = tr.logits.row(t).maxCoeff();
        Eigen::RowVectorXd e = (tr.logits.row(t).array() - mx).exp();
        tr.probs.row(t) = e / e.sum();
    }
    return tr;
}

}  // namespace

void ModelConfig::validate() const {
    if (vocab_size < 2) {
        throw std::invalid_argument("ModelConfig: vocab_size must be at least 2");
    }
    if (head_dim <= 0 || head_dim % 2 != 0) {
        throw std::invalid_argument("ModelConfig: head_dim must be a positive even integer");
    }
    if (n_heads < 1 || n_layers < 1) {
        throw std::invalid_argument("ModelConfig: n_heads and n_layers must be positive");
    }
    if (model_dim != n_heads * head_dim) {
        throw std::invalid_argument("ModelConfig: model_dim must equal n_heads * head_dim");
    }
    if (max_context < 1) {
        throw std::invalid_argument("ModelConfig: max_context must be positive");
    }
    if (!(train_base > 0.0)) {
        throw std::invalid_argument("ModelConfig: train_base must be positive");
    }
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelParams p;
    p.config = cfg;
    p.embedding.resize(cfg.vocab_size, cfg.model_dim);
    p.layers.resize(static_cast<size_t>(cfg.n_layers));
    for (auto& lp : p.layers) {
        lp.attn_norm_gain = Eigen::VectorXd::Ones(cfg.model_dim);
        lp.wq.resize(cfg.model_dim, cfg.model_dim);
        lp.wk.resize(cfg.model_dim, cfg.model_dim);
        lp.wv.resize(cfg.model_dim, cfg.model_dim);
        lp.wo.resize(cfg.model_dim, cfg.model_dim);
        lp.mlp_norm_gain = Eigen::VectorXd::Ones(cfg.model_dim);
        lp.w1.resize(cfg.model_dim, cfg.ffn_dim());
        lp.w2.resize(cfg.ffn_dim(), cfg.model_dim);
    }
    p.final_norm_gain = Eigen::VectorXd::Ones(cfg.model_dim);
    p.output.resize(cfg.model_dim, cfg.vocab_size);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    auto fill = [&](Eigen::MatrixXd& m, int fan_in) {
        const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                m(i, j) = unit(rng) * s;
            }
        }
    };
    fill(p.embedding, cfg.model_dim);
    for (auto& lp : p.layers) {
        fill(lp.wq, cfg.model_dim);
        fill(lp.wk, cfg.model_dim);
        fill(lp.wv, cfg.model_dim);
        fill(lp.wo, cfg.model_dim);
        fill(lp.w1, cfg.model_dim);
        fill(lp.w2, cfg.ffn_dim());
    }
    fill(p.output, cfg.model_dim);
    return p;
}

ModelParams zeros_like(const ModelParams& p) {
    ModelParams z;
    z.config = p.config;
    z.embedding = Eigen::MatrixXd::Zero(p.embedding.rows(), p.embedding.cols());
    z.layers.resize(p.layers.size());
    for (size_t l = 0; l < p.layers.size(); ++l) {
        const auto& lp = p.layers[l];
        auto& zl = z.layers[l];
        zl.attn_norm_gain = Eigen::VectorXd::Zero(lp.attn_norm_gain.size());
        zl.wq = Eigen::MatrixXd::Zero(lp.wq.rows(), lp.wq.cols());
        zl.wk = Eigen::MatrixXd::Zero(lp.wk.rows(), lp.wk.cols());
        zl.wv = Eigen::MatrixXd::Zero(lp.wv.rows(), lp.wv.cols());
        zl.wo = Eigen::MatrixXd::Zero(lp.wo.rows(), lp.wo.cols());
        zl.mlp_norm_gain = Eigen::VectorXd::Zero(lp.mlp_norm_gain.size());
        zl.w1 = Eigen::MatrixXd::Zero(lp.w1.rows(), lp.w1.cols());
        zl.w2 = Eigen::MatrixXd::Zero(lp.w2.rows(), lp.w2.cols());
    }
    z.final_norm_gain = Eigen::VectorXd::Zero(p.final_norm_gain.size());
    z.output = Eigen::MatrixXd::Zero(p.output.rows(), p.output.cols());
    return z;
}

std::size_t param_count(const ModelParams& p) {
    std::size_t n = 0;
    visit_params(const_cast<ModelParams&>(p),
                 [&](const std::string&, double*, Eigen::Index size) {
                     n += static_cast<std::size_t>(size);
                 });
    return n;
}

void rotate_inplace(Eigen::Ref<Eigen::VectorXd> v, int position, double base) {
    if (v.size() % 2 != 0 || v.size() == 0) {
        throw std::invalid_argument("rotate: vector length must be a positive even number");
    }
    if (!(base > 0.0)) {
        throw std::invalid_argument("rotate: base must be positive");
    }
    if (position < 0) {
        throw std::invalid_argument("rotate: position must be non-negative");
    }
    const int d = static_cast<int>(v.size());
    for (int i = 0; i < d / 2; ++i) {
        const double angle = position * std::pow(base, -2.0 * i / d);
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        const double a = v[2 * i];
        const double b = v[2 * i + 1];
        v[2 * i] = a * c - b * s;
        v[2 * i + 1] = a * s + b * c;
    }
}

Eigen::VectorXd rotate(const Eigen::VectorXd& v, int position, double base) {
    Eigen::VectorXd out = v;
    rotate_inplace(out, position, base);
    return out;
}

Eigen::MatrixXd attention_scores(const Eigen::MatrixXd& queries,
                                 const Eigen::MatrixXd& keys, double base) {
    if (queries.cols() != keys.cols()) {
        throw std::invalid_argument("attention_scores: query/key dimension mismatch");
    }
    if (queries.cols() % 2 != 0 || queries.cols() == 0) {
        throw std::invalid_argument("attention_scores: head dimension must be even");
    }
    Eigen::MatrixXd q = queries;
    Eigen::MatrixXd k = keys;
    apply_rope_rows(q, 1, static_cast<int>(q.cols()), base, false);
    apply_rope_rows(k, 1, static_cast<int>(k.cols()), base, false);
    return q * k.transpose();
}

Eigen::MatrixXd forward(const ModelParams& p, std::span<const int> tokens, double base) {
    return run_forward(p, tokens, base).probs;
}

LossResult cross_entropy_backward(const ModelParams& p, std::span<const int> tokens,
                                  int ignore_token, ModelParams& grads) {
    const ModelConfig& cfg = p.config;
    if (tokens.size() < 2) {
        throw std::invalid_argument("cross_entropy_backward: need at least 2 tokens");
    }
    ForwardTrace tr = run_forward(p, tokens, cfg.train_base);
    const auto T = static_cast<Eigen::Index>(tokens.size());
    const int hd = cfg.head_dim;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    LossResult res;
    Eigen::MatrixXd dlogits = Eigen::MatrixXd::Zero(T, cfg.vocab_size);
    for (Eigen::Index t = 0; t + 1 < T; ++t) {
        const int target = tokens[static_cast<size_t>(t) + 1];
        if (target == ignore_token) {
            continue;
        }
        res.loss_sum -= std::log(std::max(tr.probs(t, target), 1e-300));
        res.count += 1;
        dlogits.row(t) += tr.probs.row(t);
        dlogits(t, target) -= 1.0;
    }
    if (res.count == 0) {
        return res;
    }
    if (!std::isfinite(res.loss_sum)) {
        throw std::runtime_error("cross_entropy_backward: non-finite loss");
    }

    grads.output += tr.xf.transpose() * dlogits;
    Eigen::MatrixXd dxf = dlogits * p.output.transpose();

    Eigen::MatrixXd dx;
    rms_norm_backward(tr.x_final, p.final_norm_gain, tr.final_rms, dxf, dx,
                      grads.final_norm_gain);

    for (int l = static_cast<int>(p.layers.size()) - 1; l >= 0; --l) {
        const LayerParams& lp = p.layers[static_cast<size_t>(l)];
        LayerParams& gl = grads.layers[static_cast<size_t>(l)];
        const LayerTrace& lt = tr.layers[static_cast<size_t>(l)];

        // x = x_mid + hidden * w2
        Eigen::MatrixXd dhidden = dx * lp.w2.transpose();
        gl.w2 += lt.hidden.transpose() * dx;
        Eigen::MatrixXd dpre = dhidden.cwiseProduct(
            lt.pre_act.unaryExpr([](double v) { return gelu_grad(v); }));
        gl.w1 += lt.xn2.transpose() * dpre;
        Eigen::MatrixXd dxn2 = dpre * lp.w1.transpose();

        Eigen::MatrixXd dx_mid;
        rms_norm_backward(lt.x_mid, lp.mlp_norm_gain, lt.xn2_rms, dxn2, dx_mid,
                          gl.mlp_norm_gain);
        dx_mid += dx;  // residual branch

        // x_mid = x_in + ctx * wo
        Eigen::MatrixXd dctx = dx_mid * lp.wo.transpose();
        gl.wo += lt.ctx.transpose() * dx_mid;

        Eigen::MatrixXd dq_rot = Eigen::MatrixXd::Zero(T, cfg.model_dim);
        Eigen::MatrixXd dk_rot = Eigen::MatrixXd::Zero(T, cfg.model_dim);
        Eigen::MatrixXd dv = Eigen::MatrixXd::Zero(T, cfg.model_dim);
        for (int h = 0; h < cfg.n_heads; ++h) {
            const auto qh = lt.q_rot.middleCols(h * hd, hd);
            const auto kh = lt.k_rot.middleCols(h * hd, hd);
            const auto vh = lt.v.middleCols(h * hd, hd);
            const Eigen::MatrixXd& a = lt.attn[static_cast<size_t>(h)];
            const auto dctx_h = dctx.middleCols(h * hd, hd);

            Eigen::MatrixXd da = dctx_h * vh.transpose();
            dv.middleCols(h * hd, hd) = a.transpose() * dctx_h;

            Eigen::MatrixXd ds = Eigen::MatrixXd::Zero(T, T);
            for (Eigen::Index i = 0; i < T; ++i) {
                double dot = 0.0;
                for (Eigen::Index j = 0; j <= i; ++j) {
                    dot += da(i, j) * a(i, j);
                }
                for (Eigen::Index j = 0; j <= i; ++j) {
                    ds(i, j) = a(i, j) * (da(i, j) - dot);
                }
            }
            dq_rot.middleCols(h * hd, hd) = ds * kh * scale;
            dk_rot.middleCols(h * hd, hd) = ds.transpose() * qh * scale;
        }
        // rotations are orthogonal: pull gradients back with the inverse angle
        apply_rope_rows(dq_rot, cfg.n_heads, hd, cfg.train_base, true);
        apply_rope_rows(dk_rot, cfg.n_heads, hd, cfg.train_base, true);

        gl.wq += lt.xn.transpose() * dq_rot;
        gl.wk += lt.xn.transpose() * dk_rot;
        gl.wv += lt.xn.transpose() * dv;
        Eigen::MatrixXd dxn = dq_rot * lp.wq.transpose() + dk_rot * lp.wk.transpose() +
                              dv * lp.wv.transpose();

        Eigen::MatrixXd dx_in;
        rms_norm_backward(lt.x_in, lp.attn_norm_gain, lt.xn_rms, dxn, dx_in,
                          gl.attn_norm_gain);
        dx = dx_in + dx_mid;  // residual branch
    }

    for (Eigen::Index t = 0; t < T; ++t) {
        grads.embedding.row(tokens[static_cast<size_t>(t)]) += dx.row(t);
    }
    return res;
}

TrainResult train(const ModelConfig& cfg, const std::vector<std::vector<int>>& corpus,
                  const TrainOptions& opts) {
    cfg.validate();
    if (opts.steps < 0) {
        throw std::invalid_argument("train: steps must be non-negative");
    }
    if (opts.steps > 0 && corpus.empty()) {
        throw std::invalid_argument("train: empty corpus");
    }
    if (!(opts.learning_rate > 0.0)) {
        throw std::invalid_argument("train: learning rate must be positive");
    }
    if (opts.batch_size < 1) {
        throw std::invalid_argument("train: batch_size must be positive");
    }
    for (const auto& seq : corpus) {
        if (static_cast<int>(seq.size()) > cfg.max_context) {
            throw std::invalid_argument("train: corpus sequence exceeds max_context");
        }
        if (seq.size() < 2) {
            throw std::invalid_argument("train: corpus sequence shorter than 2 tokens");
        }
    }

    TrainResult out;
    out.params = init_params(cfg, opts.seed);
    if (opts.steps == 0) {
        return out;
    }

    ModelParams grads = zeros_like(out.params);
    ModelParams m = zeros_like(out.params);  // Adam first moment
    ModelParams v = zeros_like(out.params);  // Adam second moment
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    auto blocks = [](ModelParams& p) {
        std::vector<std::pair<double*, Eigen::Index>> out_blocks;
        visit_params(p, [&](const std::string&, double* d, Eigen::Index n) {
            out_blocks.emplace_back(d, n);
        });
        return out_blocks;
    };
    const auto pb = blocks(out.params);
    const auto gb = blocks(grads);
    const auto mb = blocks(m);
    const auto vb = blocks(v);

    std::mt19937_64 rng(opts.seed ^ 0x9e3779b97f4a7c15ull);
    std::uniform_int_distribution<size_t> pick(0, corpus.size() - 1);

    for (int step = 1; step <= opts.steps; ++step) {
        for (const auto& [d, n] : gb) {
            std::fill(d, d + n, 0.0);
        }
        double loss_sum = 0.0;
        int count = 0;
        for (int b = 0; b < opts.batch_size; ++b) {
            const auto& seq = corpus[pick(rng)];
            const LossResult r =
                cross_entropy_backward(out.params, seq, opts.ignore_token, grads);
            loss_sum += r.loss_sum;
            count += r.count;
        }
        if (count == 0) {
            throw std::runtime_error("train: batch produced no supervised positions");
        }
        const double loss = loss_sum / count;
        if (!std::isfinite(loss)) {
            throw std::runtime_error("train: diverged (non-finite loss) at step " +
                                     std::to_string(step));
        }
        out.loss_trace.push_back(loss);

        const double inv = 1.0 / count;
        const double c1 = 1.0 - std::pow(beta1, step);
        const double c2 = 1.0 - std::pow(beta2, step);
        for (size_t blk = 0; blk < pb.size(); ++blk) {
            double* w = pb[blk].first;
            double* g = gb[blk].first;
            double* m1 = mb[blk].first;
            double* m2 = vb[blk].first;
            for (Eigen::Index i = 0; i < pb[blk].second; ++i) {
                const double gi = g[i] * inv;
                m1[i] = beta1 * m1[i] + (1.0 - beta1) * gi;
                m2[i] = beta2 * m2[i] + (1.0 - beta2) * gi * gi;
                w[i] -= opts.learning_rate * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + eps);
            }
        }
    }
    return out;
}

}  // namespace abkt
