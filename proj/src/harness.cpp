#include "geora/harness.hpp"

#include "geora/spectral.hpp"

#include <numeric>

namespace geora {

Matrix synth_weight(Index rows, Index cols, double decay_exponent, RandomSource rng) {
    if (!(decay_exponent > 0.0)) {
        throw DomainError("synth_weight: decay exponent must be positive");
    }
    if (rows < 1 || cols < 1) {
        throw DomainError("synth_weight: shape must be positive");
    }
    const Index k = std::min(rows, cols);
    RandomSource left = rng.substream("U");
    RandomSource right = rng.substream("V");
    const Matrix u = random_orthonormal(rows, k, left);
    const Matrix v = random_orthonormal(cols, k, right);
    Vector sigma(k);
    for (Index i = 0; i < k; ++i) {
        sigma(i) = std::pow(static_cast<double>(i + 1), -decay_exponent);
    }
    return u * sigma.asDiagonal() * v.transpose();
}

RegressionTask make_regression_task(const Matrix& w0, const RegressionOptions& opts,
                                    RandomSource rng) {
    if (opts.shift < 0.0) {
        throw DomainError("make_regression_task: shift must be non-negative");
    }
    RegressionTask task;
    const Index samples = opts.samples > 0 ? opts.samples : 4 * w0.cols();
    RandomSource input_rng = rng.substream("inputs");
    task.inputs = gaussian_matrix(w0.cols(), samples, 1.0, input_rng);
    task.target = w0;
    if (opts.shift > 0.0) {
        const auto f = svd(w0);
        const Index skip = std::clamp<Index>(opts.skip, 0, f.size() - 1);
        const Index width = f.size() - skip;
        RandomSource shift_rng = rng.substream("shift");
        const Matrix core = gaussian_matrix(width, width, 1.0, shift_rng);
        Matrix delta = f.u.rightCols(width) * core * f.v.rightCols(width).transpose();
        delta *= opts.shift * frobenius_norm(w0) / frobenius_norm(delta);
        task.target += delta;
    }
    return task;
}

GrpoTask make_grpo_task(const Matrix& w0, const GrpoOptions& opts, RandomSource rng) {
    if (opts.vocab < 2 || opts.length < 1) {
        throw DomainError("make_grpo_task: need vocab >= 2 and length >= 1");
    }
    GrpoTask task;
    task.vocab = opts.vocab;
    task.length = opts.length;
    RandomSource readout_rng = rng.substream("readout");
    task.readout = gaussian_matrix(opts.vocab, w0.rows(), 1.0, readout_rng);
    RandomSource context_rng = rng.substream("contexts");
    task.contexts = gaussian_matrix(w0.cols(), context_count(task), 1.0, context_rng);
    for (Index c = 0; c < task.contexts.cols(); ++c) {
        task.contexts.col(c) *= opts.feature_norm / task.contexts.col(c).norm();
    }
    RandomSource target_rng = rng.substream("target");
    for (Index i = 0; i < opts.length; ++i) {
        task.target.push_back(target_rng.uniform_index(opts.vocab));
    }
    return task;
}

Index context_count(const GrpoTask& task) {
    return 1 + (task.length - 1) * task.vocab;
}

Index context_index(const GrpoTask& task, Index position, Index prev) {
    if (position == 0) {
        return 0;
    }
    return 1 + (position - 1) * task.vocab + prev;
}

Matrix policy_logits(const Matrix& w, const GrpoTask& task) {
    return task.readout * (w * task.contexts);
}

double sequence_reward(const GrpoTask& task, const std::vector<Index>& sequence) {
    return sequence == task.target ? 1.0 : 0.0;
}

Matrix log_softmax_columns(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Index c = 0; c < logits.cols(); ++c) {
        const double peak = logits.col(c).maxCoeff();
        const double lse = peak + std::log((logits.col(c).array() - peak).exp().sum());
        out.col(c) = logits.col(c).array() - lse;
    }
    return out;
}

double kl_divergence(const Matrix& policy_logits, const Matrix& ref_logits) {
    if (policy_logits.rows() != ref_logits.rows() || policy_logits.cols() != ref_logits.cols()) {
        throw DomainError("kl_divergence: logits shapes differ");
    }
    if (policy_logits.cols() == 0) {
        throw DomainError("kl_divergence: no contexts");
    }
    if (!all_finite(policy_logits) || !all_finite(ref_logits)) {
        throw DomainError("kl_divergence: non-finite logits");
    }
    const Matrix lp = log_softmax_columns(policy_logits);
    const Matrix lq = log_softmax_columns(ref_logits);
    double total = 0.0;
    for (Index c = 0; c < lp.cols(); ++c) {
        const double kl = (lp.col(c).array().exp() * (lp.col(c) - lq.col(c)).array()).sum();
        total += std::max(kl, 0.0);
    }
    return total / static_cast<double>(lp.cols());
}

Vector group_advantages(const Vector& rewards, double eps) {
    const double mean = rewards.mean();
    const double var = (rewards.array() - mean).square().mean();
    return (rewards.array() - mean) / std::max(std::sqrt(var), eps);
}

Group sample_group(const Matrix& logits, const GrpoTask& task, Index group_size, RandomSource& rng) {
    const Matrix probs = log_softmax_columns(logits).array().exp();
    Group g;
    g.rewards.resize(group_size);
    for (Index n = 0; n < group_size; ++n) {
        std::vector<Index> seq;
        Index prev = -1;
        for (Index pos = 0; pos < task.length; ++pos) {
            const Index c = context_index(task, pos, prev);
            const double u = rng.uniform();
            double cumulative = 0.0;
            Index token = task.vocab - 1;
            for (Index t = 0; t < task.vocab; ++t) {
                cumulative += probs(t, c);
                if (u < cumulative) {
                    token = t;
                    break;
                }
            }
            seq.push_back(token);
            prev = token;
        }
        g.rewards(n) = sequence_reward(task, seq);
        g.sequences.push_back(std::move(seq));
    }
    g.advantages = group_advantages(g.rewards);
    return g;
}

Objective regression_objective(const Matrix& w, const RegressionTask& task) {
    const double n = static_cast<double>(task.inputs.cols());
    const Matrix residual = (w - task.target) * task.inputs;
    return {0.5 * residual.squaredNorm() / n, residual * task.inputs.transpose() / n};
}

Objective grpo_objective(const Matrix& w, const GrpoTask& task, const Group& group,
                         const Matrix& ref_logits, double kl_beta) {
    const Matrix logits = policy_logits(w, task);
    const Matrix lp = log_softmax_columns(logits);
    const Matrix probs = lp.array().exp();
    Matrix dlogits = Matrix::Zero(logits.rows(), logits.cols());
    const double inv_group = 1.0 / static_cast<double>(group.sequences.size());

    double value = 0.0;
    for (std::size_t g = 0; g < group.sequences.size(); ++g) {
        const double adv = group.advantages(static_cast<Index>(g));
        Index prev = -1;
        for (Index pos = 0; pos < task.length; ++pos) {
            const Index token = group.sequences[g][static_cast<std::size_t>(pos)];
            const Index c = context_index(task, pos, prev);
            value -= inv_group * adv * lp(token, c);
            dlogits.col(c) += inv_group * adv * probs.col(c);
            dlogits(token, c) -= inv_group * adv;
            prev = token;
        }
    }

    if (kl_beta > 0.0) {
        const Matrix lq = log_softmax_columns(ref_logits);
        const double inv_ctx = 1.0 / static_cast<double>(logits.cols());
        for (Index c = 0; c < logits.cols(); ++c) {
            const Vector log_ratio = lp.col(c) - lq.col(c);
            const double kl = probs.col(c).dot(log_ratio);
            value += kl_beta * inv_ctx * kl;
            dlogits.col(c) +=
                kl_beta * inv_ctx * (probs.col(c).array() * (log_ratio.array() - kl)).matrix();
        }
    }
    return {value, task.readout.transpose() * dlogits * task.contexts.transpose()};
}

AdapterGradient adapter_gradient(const AdapterBundle& bundle, const Matrix& dense_grad) {
    const double s = bundle.scale();
    return {s * (bundle.b.transpose() * dense_grad), s * (dense_grad * bundle.a.transpose())};
}

void TrainConfig::validate() const {
    if (steps < 1) {
        throw DomainError("TrainConfig: steps must be >= 1");
    }
    if (!(lr > 0.0)) {
        throw DomainError("TrainConfig: lr must be positive");
    }
    if (kl_beta < 0.0) {
        throw DomainError("TrainConfig: kl_beta must be non-negative");
    }
    if (head_count < 0 || tail_count < 0) {
        throw DomainError("TrainConfig: head/tail counts must be non-negative");
    }
    init.mask.validate();
}

std::string TrainConfig::method_name() const {
    return sparseft ? std::string("sparseft") : std::string(to_string(init.method));
}

std::optional<Index> detect_collapse(const std::vector<StepRecord>& records,
                                     const CollapseRule& rule) {
    const auto n = static_cast<Index>(records.size());
    double peak = 0.0;
    for (Index i = 0; i < n; ++i) {
        const Index lo = std::max<Index>(0, i - rule.smooth_window + 1);
        double smoothed = 0.0;
        for (Index j = lo; j <= i; ++j) {
            smoothed += records[static_cast<std::size_t>(j)].reward_or_loss;
        }
        smoothed /= static_cast<double>(i - lo + 1);
        peak = std::max(peak, smoothed);
        if (i < rule.warmup || peak < rule.min_peak || smoothed >= rule.drop * peak) {
            continue;
        }
        std::vector<double> window;
        for (Index j = std::max<Index>(0, i - rule.median_window); j < i; ++j) {
            window.push_back(records[static_cast<std::size_t>(j)].kl);
        }
        auto mid = window.begin() + static_cast<std::ptrdiff_t>(window.size() / 2);
        std::nth_element(window.begin(), mid, window.end());
        if (records[static_cast<std::size_t>(i)].kl > rule.kl_factor * std::max(*mid, rule.kl_floor)) {
            return i;
        }
    }
    return std::nullopt;
}

namespace {

// Parameter state shared by the adapter and SparseFT branches.
class Trainable {
public:
    Trainable(const Matrix& w0, const TrainConfig& cfg) {
        if (cfg.sparseft) {
            const GeoMatrix geo = geo_matrix(w0, cfg.init.mask);
            support_ = geo.mask;
            weights_ = w0;
        } else {
            bundle_ = init_adapter(w0, cfg.init);
            weights_ = merge(*bundle_);
        }
    }

    const Matrix& weights() const { return weights_; }

    /// Applies one SGD step for the dense gradient and returns the Frobenius
    /// norm of the applied update.
    double step(const Matrix& dense_grad, double lr) {
        if (bundle_) {
            const AdapterGradient g = adapter_gradient(*bundle_, dense_grad);
            bundle_->a -= lr * g.a;
            bundle_->b -= lr * g.b;
            weights_ = merge(*bundle_);
            return lr * std::sqrt(g.a.squaredNorm() + g.b.squaredNorm());
        }
        const Matrix masked =
            support_->bits.select(dense_grad, Matrix::Zero(dense_grad.rows(), dense_grad.cols()));
        weights_ = support_->bits.select(weights_ - lr * masked, weights_);
        return lr * frobenius_norm(masked);
    }

    std::optional<AdapterBundle> take_bundle() { return std::move(bundle_); }
    std::optional<BitMask> take_support() { return std::move(support_); }

private:
    std::optional<AdapterBundle> bundle_;
    std::optional<BitMask> support_;
    Matrix weights_;
};

void finalize_diagnostics(const Matrix& w0, const TrainConfig& cfg, TrainResult& result) {
    TrainLog& log = result.log;
    log.final_nss = nss(result.weights, w0);
    const Matrix delta = result.weights - w0;
    if (frobenius_norm(delta) == 0.0) {
        return;
    }
    const auto f = svd(w0);
    const Index h = cfg.head_count > 0 ? cfg.head_count : cfg.init.rank;
    const Index t = cfg.tail_count > 0 ? cfg.tail_count : cfg.init.rank;
    log.final_alignment = alignment_spectrum(delta, f.v, h, t);
}

}  // namespace

TrainResult train(const Matrix& w0, const ToyTask& task, const TrainConfig& cfg) {
    cfg.validate();
    require_finite(w0, "train");
    const Index k = std::min(w0.rows(), w0.cols());
    const Index h = cfg.head_count > 0 ? cfg.head_count : cfg.init.rank;
    const Index t = cfg.tail_count > 0 ? cfg.tail_count : cfg.init.rank;
    if (h + t > k) {
        throw DomainError("train: head_count + tail_count = " + std::to_string(h + t) +
                          " exceeds min(rows, cols) = " + std::to_string(k));
    }
    const auto* grpo = std::get_if<GrpoTask>(&task);
    if (grpo && cfg.group_size < 2) {
        throw DomainError("train: grpo_toy needs group_size >= 2");
    }

    Trainable params(w0, cfg);
    TrainResult result;
    TrainLog& log = result.log;
    log.records.reserve(static_cast<std::size_t>(cfg.steps));

    Matrix ref_logits;
    RandomSource sampler(cfg.seed, "grpo/sample");
    if (grpo) {
        ref_logits = policy_logits(params.weights(), *grpo);
    }

    for (Index step = 0; step < cfg.steps; ++step) {
        StepRecord rec;
        rec.step = step;
        Objective obj;
        if (grpo) {
            const Matrix logits = policy_logits(params.weights(), *grpo);
            if (!all_finite(logits)) {
                log.abort_reason = "non-finite policy logits at step " + std::to_string(step);
                break;
            }
            rec.kl = kl_divergence(logits, ref_logits);
            const Group group = sample_group(logits, *grpo, cfg.group_size, sampler);
            rec.reward_or_loss = group.rewards.mean();
            obj = grpo_objective(params.weights(), *grpo, group, ref_logits, cfg.kl_beta);
        } else {
            obj = regression_objective(params.weights(), std::get<RegressionTask>(task));
            rec.reward_or_loss = obj.value;
        }
        if (!std::isfinite(obj.value) || !all_finite(obj.grad)) {
            log.abort_reason = "non-finite loss or gradient at step " + std::to_string(step);
            break;
        }
        rec.grad_norm = params.step(obj.grad, cfg.lr);
        log.records.push_back(rec);
    }

    result.weights = params.weights();
    if (log.abort_reason || !all_finite(result.weights)) {
        if (!log.abort_reason) {
            log.abort_reason = "non-finite weights after step " + std::to_string(cfg.steps - 1);
        }
        log.collapsed = true;
        log.collapse_step = static_cast<Index>(log.records.size());
        result.bundle = params.take_bundle();
        result.support = params.take_support();
        return result;
    }

    for (const auto& rec : log.records) {
        log.max_kl = std::max(log.max_kl, rec.kl);
    }
    if (grpo) {
        const Matrix final_logits = policy_logits(result.weights, *grpo);
        log.final_kl = kl_divergence(final_logits, ref_logits);
        log.max_kl = std::max(log.max_kl, log.final_kl);
        const std::size_t tail = std::min<std::size_t>(20, log.records.size());
        double sum = 0.0;
        for (std::size_t i = log.records.size() - tail; i < log.records.size(); ++i) {
            sum += log.records[i].reward_or_loss;
        }
        log.final_reward_or_loss = sum / static_cast<double>(tail);
        log.collapse_step = detect_collapse(log.records);
        log.collapsed = log.collapse_step.has_value();
    } else {
        log.final_reward_or_loss =
            regression_objective(result.weights, std::get<RegressionTask>(task)).value;
    }
    finalize_diagnostics(w0, cfg, result);
    result.bundle = params.take_bundle();
    result.support = params.take_support();
    return result;
}

}  // namespace geora
