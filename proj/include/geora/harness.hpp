#pragma once

#include "geora/adapters.hpp"
#include "geora/diagnostics.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace geora {

/// W = U diag(sigma) V^T with sigma_i = i^(-decay_exponent) (1-based) and
/// random orthonormal U, V drawn from `rng`.
Matrix synth_weight(Index rows, Index cols, double decay_exponent, RandomSource rng);

// ---------------------------------------------------------------------------
// Toy tasks
// ---------------------------------------------------------------------------

/// Least squares on a linear map: loss(W) = ||(W - target) X||_F^2 / (2 N).
struct RegressionTask {
    Matrix target;
    Matrix inputs;  // cols x N
};

struct RegressionOptions {
    /// Number of input samples; 0 means 4 * cols.
    Index samples = 0;
    /// Relative Frobenius size of the target shift; 0 gives target == w0.
    double shift = 0.1;
    /// The shift lives in the singular subspace of w0 past its first `skip`
    /// components.
    Index skip = 16;
};

RegressionTask make_regression_task(const Matrix& w0, const RegressionOptions& opts,
                                    RandomSource rng);

/// Autoregressive token policy with a verifiable exact-match reward.
///
/// The policy over a vocabulary of size V at context c is
/// softmax(readout * W * contexts.col(c)). Contexts enumerate (position,
/// previous token): index 0 is the first position, then 1 + (pos - 1) * V + prev.
/// A sampled sequence earns reward 1 iff it equals `target` exactly.
struct GrpoTask {
    Index vocab = 4;
    Index length = 3;
    std::vector<Index> target;
    Matrix readout;   // vocab x rows
    Matrix contexts;  // cols x context_count
};

struct GrpoOptions {
    Index vocab = 4;
    Index length = 3;
    double feature_norm = 3.0;
};

GrpoTask make_grpo_task(const Matrix& w0, const GrpoOptions& opts, RandomSource rng);

using ToyTask = std::variant<RegressionTask, GrpoTask>;

Index context_count(const GrpoTask& task);
/// prev < 0 denotes the start of the sequence (position 0 only).
Index context_index(const GrpoTask& task, Index position, Index prev);

/// vocab x context_count logits for weights w.
Matrix policy_logits(const Matrix& w, const GrpoTask& task);

double sequence_reward(const GrpoTask& task, const std::vector<Index>& sequence);

/// Log-softmax of every column.
Matrix log_softmax_columns(const Matrix& logits);

/// Mean over contexts (columns) of KL(softmax(policy) || softmax(ref)) in nats.
double kl_divergence(const Matrix& policy_logits, const Matrix& ref_logits);

/// (R - mean) / max(std, eps) with the population standard deviation.
Vector group_advantages(const Vector& rewards, double eps = 1e-6);

struct Group {
    std::vector<std::vector<Index>> sequences;
    Vector rewards;
    Vector advantages;
};

Group sample_group(const Matrix& logits, const GrpoTask& task, Index group_size, RandomSource& rng);

// ---------------------------------------------------------------------------
// Objectives, all expressed as losses to minimize with dense-W gradients.
// ---------------------------------------------------------------------------

struct Objective {
    double value = 0.0;
    Matrix grad;
};

Objective regression_objective(const Matrix& w, const RegressionTask& task);

/// -(1/G) sum_g A_g log pi(seq_g) + kl_beta * KL(pi || pi_ref).
Objective grpo_objective(const Matrix& w, const GrpoTask& task, const Group& group,
                         const Matrix& ref_logits, double kl_beta);

struct AdapterGradient {
    Matrix a;
    Matrix b;
};

/// Chain rule through W = w_res + scale * B A.
AdapterGradient adapter_gradient(const AdapterBundle& bundle, const Matrix& dense_grad);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
    Index steps = 500;
    double lr = 0.05;
    /// Train W directly on the M_Geo support instead of through an adapter.
    bool sparseft = false;
    /// Adapter method, rank, alpha and mask; the mask also defines the
    /// SparseFT support.
    InitSpec init;
    double kl_beta = 0.0;
    Index group_size = 8;
    std::uint64_t seed = 0;
    /// Alignment head/tail sizes; 0 means the adapter rank.
    Index head_count = 0;
    Index tail_count = 0;

    void validate() const;
    std::string method_name() const;
};

struct StepRecord {
    Index step = 0;
    double reward_or_loss = 0.0;
    double kl = 0.0;
    double grad_norm = 0.0;
};

struct TrainLog {
    std::vector<StepRecord> records;
    double final_reward_or_loss = 0.0;
    double final_kl = 0.0;
    double max_kl = 0.0;
    bool collapsed = false;
    std::optional<Index> collapse_step;
    /// Set when a non-finite loss or gradient stopped the run.
    std::optional<std::string> abort_reason;
    double final_nss = 0.0;
    /// Empty when the weights did not move.
    std::optional<AlignmentSpectrum> final_alignment;
};

struct TrainResult {
    std::optional<AdapterBundle> bundle;
    std::optional<BitMask> support;
    Matrix weights;
    TrainLog log;
};

TrainResult train(const Matrix& w0, const ToyTask& task, const TrainConfig& cfg);

/// Reward collapse: the smoothed reward falls below `drop` times its running
/// peak while KL exceeds `kl_factor` times its trailing median. Peaks below
/// `min_peak` don't count, and the median is floored at `kl_floor`, so noise
/// in the sparse-reward warm-up phase is not read as collapse.
struct CollapseRule {
    double drop = 0.5;
    double kl_factor = 10.0;
    double min_peak = 0.25;
    double kl_floor = 1e-3;
    Index smooth_window = 10;
    Index median_window = 50;
    Index warmup = 50;
};

std::optional<Index> detect_collapse(const std::vector<StepRecord>& records,
                                     const CollapseRule& rule = {});

}  // namespace geora
