#include "geora/harness.hpp"
#include "geora/spectral.hpp"
#include "oracles.hpp"

#include <doctest.h>

using namespace geora;

namespace {

double rel_error(const Matrix& a, const Matrix& b) {
    return frobenius_norm(Matrix(a - b)) / std::max(frobenius_norm(b), 1e-12);
}

TrainConfig config(Method m, bool sparseft, Index steps, double lr, Index rank = 4) {
    TrainConfig c;
    c.init.method = m;
    c.init.rank = rank;
    c.init.mask.r_mask = rank;
    c.sparseft = sparseft;
    c.steps = steps;
    c.lr = lr;
    return c;
}

}  // namespace

TEST_CASE("synth_weight") {
    const Matrix a = synth_weight(6, 4, 1.5, RandomSource(3, "w"));
    const Matrix b = synth_weight(6, 4, 1.5, RandomSource(3, "w"));
    CHECK(a == b);
    CHECK(a != synth_weight(6, 4, 1.5, RandomSource(4, "w")));
    CHECK_THROWS_AS(synth_weight(6, 4, -1.0, RandomSource()), DomainError);
    const Vector s = singular_spectrum(synth_weight(5, 8, 2.0, RandomSource(1, "wide")));
    for (Index i = 0; i < 5; ++i) CHECK(std::abs(s(i) - std::pow(i + 1.0, -2.0)) <= 1e-10);
}

TEST_CASE("kl_divergence") {
    const Matrix p{{0.3, 1.0}, {-0.2, 2.0}, {1.5, 0.0}};
    CHECK(kl_divergence(p, p) == 0.0);
    CHECK(std::abs(kl_divergence(Matrix(p.array() + 7.0), p)) <= 1e-15);
    const Matrix uniform{{0.0}, {0.0}};
    const Matrix skew{{std::log(3.0)}, {0.0}};
    CHECK(kl_divergence(uniform, skew) == doctest::Approx(0.143841036225890).epsilon(1e-12));
    CHECK_THROWS_AS(kl_divergence(p, uniform), DomainError);
    Matrix bad = p;
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS(kl_divergence(bad, p), DomainError);
}

TEST_CASE("group_advantages") {
    const Vector a = group_advantages(Vector{{1, 0, 0, 1}});
    CHECK((a - Vector{{1, -1, -1, 1}}).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(group_advantages(Vector{{1, 1, 1}}).isZero(0.0));
}

TEST_CASE("grpo task structure") {
    const Matrix w = synth_weight(6, 5, 1.0, RandomSource(2, "w"));
    const GrpoTask task = make_grpo_task(w, GrpoOptions{}, RandomSource(2, "task"));
    CHECK(context_count(task) == 1 + 2 * 4);
    CHECK(context_index(task, 0, -1) == 0);
    CHECK(context_index(task, 2, 3) == 1 + 4 + 3);
    CHECK(task.target.size() == 3);
    CHECK(sequence_reward(task, task.target) == 1.0);
    std::vector<Index> other = task.target;
    other[1] = (other[1] + 1) % 4;
    CHECK(sequence_reward(task, other) == 0.0);
    for (Index c = 0; c < task.contexts.cols(); ++c)
        CHECK(task.contexts.col(c).norm() == doctest::Approx(3.0).epsilon(1e-12));

    RandomSource rng(5, "sample");
    const Group g = sample_group(policy_logits(w, task), task, 8, rng);
    CHECK(g.sequences.size() == 8);
    for (Index i = 0; i < 8; ++i) CHECK((g.rewards(i) == 0.0 || g.rewards(i) == 1.0));
}

TEST_CASE("regression gradient matches finite differences") {
    RandomSource rng(61, "fd-reg");
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix w0 = gaussian_matrix(6, 5, 1.0, rng);
        RegressionOptions o;
        o.skip = 2;
        o.samples = 7;
        const RegressionTask task = make_regression_task(w0, o, rng.substream(std::to_string(trial)));
        const Matrix w = w0 + gaussian_matrix(6, 5, 0.3, rng);
        const Matrix fd = oracle::finite_difference(
            [&](const Matrix& x) { return regression_objective(x, task).value; }, w);
        CHECK(rel_error(regression_objective(w, task).grad, fd) <= 1e-6);
    }
}

TEST_CASE("grpo gradient matches finite differences") {
    RandomSource rng(62, "fd-grpo");
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix w0 = gaussian_matrix(6, 5, 1.0, rng);
        const GrpoTask task = make_grpo_task(w0, GrpoOptions{}, rng.substream("task" + std::to_string(trial)));
        const Matrix ref = policy_logits(w0, task);
        const Matrix w = w0 + gaussian_matrix(6, 5, 0.2, rng);
        Group group = sample_group(policy_logits(w, task), task, 6, rng);
        // Force a non-degenerate advantage vector so the policy term is exercised.
        group.advantages = gaussian_matrix(6, 1, 1.0, rng);
        const double beta = trial % 2 == 0 ? 0.0 : 0.3;
        const Matrix fd = oracle::finite_difference(
            [&](const Matrix& x) { return grpo_objective(x, task, group, ref, beta).value; }, w);
        CHECK(rel_error(grpo_objective(w, task, group, ref, beta).grad, fd) <= 1e-6);
    }
}

TEST_CASE("adapter chain rule matches finite differences") {
    RandomSource rng(63, "fd-adapter");
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix w0 = gaussian_matrix(6, 5, 1.0, rng);
        InitSpec s;
        s.method = Method::pissa;
        s.rank = 2;
        s.alpha = 3.0;
        AdapterBundle bundle = init_adapter(w0, s);
        // Move off the init point, where B^T G vanishes for a minor-subspace target.
        bundle.a += gaussian_matrix(2, 5, 0.3, rng);
        bundle.b += gaussian_matrix(6, 2, 0.3, rng);
        RegressionOptions o;
        o.skip = 2;
        const RegressionTask task = make_regression_task(w0, o, rng.substream(std::to_string(trial)));
        const AdapterGradient g = adapter_gradient(bundle, regression_objective(merge(bundle), task).grad);
        const Matrix fd_a = oracle::finite_difference(
            [&](const Matrix& a) {
                AdapterBundle c = bundle;
                c.a = a;
                return regression_objective(merge(c), task).value;
            },
            bundle.a);
        const Matrix fd_b = oracle::finite_difference(
            [&](const Matrix& b) {
                AdapterBundle c = bundle;
                c.b = b;
                return regression_objective(merge(c), task).value;
            },
            bundle.b);
        CHECK(rel_error(g.a, fd_a) <= 1e-6);
        CHECK(rel_error(g.b, fd_b) <= 1e-6);
    }
}

TEST_CASE("regression with the target at w0 stays put") {
    const Matrix w0 = synth_weight(8, 6, 1.5, RandomSource(7, "w"));
    RegressionOptions o;
    o.shift = 0.0;
    o.skip = 2;
    const ToyTask task = make_regression_task(w0, o, RandomSource(7, "task"));
    for (Method m : kAllMethods) {
        if (m == Method::random_r) continue;
        const TrainResult r = train(w0, task, config(m, false, 20, 0.1, 2));
        CHECK(r.log.records.size() == 20);
        CHECK(r.log.records.front().reward_or_loss <= 1e-20);
        for (const auto& rec : r.log.records) CHECK(rec.grad_norm <= 1e-10);
    }
    const TrainResult sp = train(w0, task, config(Method::geora, true, 20, 0.1, 2));
    CHECK(sp.log.final_reward_or_loss == 0.0);
    CHECK(sp.weights == w0);
}

TEST_CASE("frozen surfaces stay frozen") {
    const Matrix w0 = synth_weight(12, 10, 1.5, RandomSource(8, "w"));
    RegressionOptions o;
    o.skip = 3;
    const ToyTask task = make_regression_task(w0, o, RandomSource(8, "task"));
    for (Method m : kAllMethods) {
        const TrainConfig cfg = config(m, false, 30, 0.05, 3);
        const AdapterBundle start = init_adapter(w0, cfg.init);
        const TrainResult r = train(w0, task, cfg);
        REQUIRE(r.bundle.has_value());
        CHECK(std::memcmp(r.bundle->w_res.data(), start.w_res.data(),
                          sizeof(double) * static_cast<std::size_t>(start.w_res.size())) == 0);
        const Index changed = (r.bundle->a.array() != start.a.array()).count() +
                              (r.bundle->b.array() != start.b.array()).count();
        CHECK(changed <= 3 * (12 + 10));
    }
    const TrainResult sp = train(w0, task, config(Method::geora, true, 30, 0.05, 3));
    REQUIRE(sp.support.has_value());
    for (Index i = 0; i < w0.rows(); ++i)
        for (Index j = 0; j < w0.cols(); ++j)
            if (!sp.support->bits(i, j)) CHECK(std::memcmp(&sp.weights(i, j), &w0(i, j), sizeof(double)) == 0);
    CHECK((sp.weights.array() != w0.array()).count() > 0);
}

TEST_CASE("training is deterministic and logs every step") {
    const Matrix w0 = synth_weight(10, 8, 1.5, RandomSource(9, "w"));
    const ToyTask task = make_grpo_task(w0, GrpoOptions{}, RandomSource(9, "task"));
    TrainConfig cfg = config(Method::geora, false, 40, 0.05, 3);
    cfg.kl_beta = 0.05;
    const TrainResult a = train(w0, task, cfg), b = train(w0, task, cfg);
    REQUIRE(a.log.records.size() == 40);
    CHECK(a.log.records.front().kl == 0.0);
    for (std::size_t i = 0; i < a.log.records.size(); ++i) {
        CHECK(a.log.records[i].step == static_cast<Index>(i));
        CHECK(a.log.records[i].kl >= 0.0);
        CHECK(a.log.records[i].reward_or_loss == b.log.records[i].reward_or_loss);
        CHECK(a.log.records[i].kl == b.log.records[i].kl);
        CHECK(a.log.records[i].grad_norm == b.log.records[i].grad_norm);
    }
    CHECK(a.weights == b.weights);
}

TEST_CASE("train rejects bad configurations") {
    const Matrix w0 = synth_weight(6, 6, 1.5, RandomSource(1, "w"));
    const ToyTask grpo = make_grpo_task(w0, GrpoOptions{}, RandomSource(1, "task"));
    TrainConfig c = config(Method::pissa, false, 10, 0.05, 2);
    c.steps = 0;
    CHECK_THROWS_AS(train(w0, grpo, c), DomainError);
    c = config(Method::pissa, false, 10, -1.0, 2);
    CHECK_THROWS_AS(train(w0, grpo, c), DomainError);
    c = config(Method::pissa, false, 10, 0.05, 2);
    c.group_size = 1;
    CHECK_THROWS_AS(train(w0, grpo, c), DomainError);
    c = config(Method::pissa, false, 10, 0.05, 2);
    c.head_count = 4;
    c.tail_count = 4;
    CHECK_THROWS_AS(train(w0, grpo, c), DomainError);
}

TEST_CASE("divergence aborts the run and marks it collapsed") {
    const Matrix w0 = synth_weight(8, 8, 1.5, RandomSource(2, "w"));
    RegressionOptions o;
    o.skip = 2;
    const ToyTask task = make_regression_task(w0, o, RandomSource(2, "task"));
    const TrainResult r = train(w0, task, config(Method::pissa, true, 200, 1e3, 2));
    CHECK(r.log.collapsed);
    REQUIRE(r.log.abort_reason.has_value());
    CHECK(r.log.records.size() < 200);
}

TEST_CASE("detect_collapse") {
    std::vector<StepRecord> rising;
    for (Index i = 0; i < 200; ++i) rising.push_back({i, std::min(1.0, i / 100.0), 0.01 * i, 0.1});
    CHECK_FALSE(detect_collapse(rising).has_value());

    std::vector<StepRecord> crash = rising;
    for (Index i = 150; i < 200; ++i) crash[static_cast<std::size_t>(i)] = {i, 0.0, 50.0, 1.0};
    const auto at = detect_collapse(crash);
    REQUIRE(at.has_value());
    CHECK(*at >= 150);

    std::vector<StepRecord> quiet_drop = rising;
    for (Index i = 150; i < 200; ++i) quiet_drop[static_cast<std::size_t>(i)].reward_or_loss = 0.0;
    CHECK_FALSE(detect_collapse(quiet_drop).has_value());

    std::vector<StepRecord> sparse;
    for (Index i = 0; i < 200; ++i) sparse.push_back({i, i % 17 == 0 ? 0.125 : 0.0, i > 60 ? 0.003 : 0.0, 0.0});
    CHECK_FALSE(detect_collapse(sparse).has_value());
}

TEST_CASE("kl_beta reduces drift on the default toy scenario") {
    const Matrix w0 = synth_weight(32, 32, 1.5, RandomSource(0, "weights"));
    const ToyTask task = make_grpo_task(w0, GrpoOptions{}, RandomSource(0, "task"));
    TrainConfig cfg = config(Method::geora, false, 500, 0.05, 16);
    const double free_kl = train(w0, task, cfg).log.final_kl;
    cfg.kl_beta = 0.1;
    const double held_kl = train(w0, task, cfg).log.final_kl;
    CHECK(held_kl <= free_kl);
}
