#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "flamesift/errors.hpp"
#include "flamesift/training.hpp"
#include "test_support.hpp"

using namespace flamesift;
using kernels::Activation;
using testing::random_tensor;

namespace {

NetworkConfig tiny_config(std::uint64_t seed) {
    NetworkConfig c;
    c.input = {1, 8, 8};
    c.seed = seed;
    c.layers = {LayerSpec::conv(2, 3), LayerSpec::pool(2),     LayerSpec::flatten(),
                LayerSpec::dense(6),   LayerSpec::dense(2 * 9), LayerSpec::reshape(2, 3, 3),
                LayerSpec::unpool(2),  LayerSpec::deconv(1, 3, Activation::identity)};
    return c;
}

std::vector<Sample> random_samples(std::size_t n, std::mt19937_64& rng, bool zero_targets) {
    std::vector<Sample> out;
    for (std::size_t i = 0; i < n; ++i) {
        Tensor in = random_tensor({1, 8, 8}, rng);
        Tensor target = zero_targets ? Tensor(Shape{1, 8, 8}) : random_tensor({1, 8, 8}, rng);
        out.push_back({std::move(in), std::move(target)});
    }
    return out;
}

std::vector<const Sample*> pointers(const std::vector<Sample>& s) {
    std::vector<const Sample*> p;
    for (const auto& x : s) p.push_back(&x);
    return p;
}

}  // namespace

TEST_CASE("mse loss") {
    Tensor a(Shape{1, 2, 2}, {1, 0, 0, 1});
    CHECK(mse_loss(a, a) == 0.0);
    CHECK(mse_loss(Tensor(Shape{1, 2, 2}), a) == 0.5);
    CHECK_THROWS_AS(mse_loss(a, Tensor(Shape{1, 1, 4})), ShapeError);

    std::mt19937_64 rng(3);
    std::vector<Tensor> outs, targets;
    for (int i = 0; i < 5; ++i) {
        outs.push_back(random_tensor({2, 3, 4}, rng));
        targets.push_back(random_tensor({2, 3, 4}, rng));
    }
    double oracle = 0.0;
    for (int i = 0; i < 5; ++i) {
        double s = 0.0;
        for (std::size_t z = 0; z < 2; ++z)
            for (std::size_t y = 0; y < 3; ++y)
                for (std::size_t x = 0; x < 4; ++x) s += std::pow(outs[i].at(z, y, x) - targets[i].at(z, y, x), 2);
        oracle += s / 24.0;
    }
    CHECK(std::abs(mse_loss(outs, targets) - oracle / 5.0) < 1e-12);
}

TEST_CASE("mse gradient matches finite differences") {
    std::mt19937_64 rng(4);
    Tensor out = random_tensor({1, 3, 3}, rng);
    const Tensor target = random_tensor({1, 3, 3}, rng);
    const Tensor g = mse_grad(out, target, 4);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double fd = testing::central_diff([&] { return mse_loss(out, target) / 4.0; }, out.data()[i]);
        CHECK(testing::relative_error(g.data()[i], fd) < 1e-8);
    }
}

TEST_CASE("regularization") {
    const LossConfig cfg;
    SUBCASE("zero weights") {
        const Model m = Model::zeros(tiny_config(1));
        CHECK(regularization(m.params(), cfg).total == 0.0);
    }
    SUBCASE("single weight of 3") {
        ParamSet p(1);
        p[0].weights = {3.0};
        p[0].bias = {7.0};
        const Penalty pen = regularization(p, cfg);
        CHECK(pen.group_l2 == 3.0);
        CHECK(pen.l1 == 3.0);
        CHECK(pen.total == doctest::Approx(0.0006).epsilon(1e-14));
    }
    SUBCASE("random two-layer model against a direct sum") {
        std::mt19937_64 rng(5);
        ParamSet p(2);
        p[0].weights = testing::random_vector(12, rng);
        p[0].bias = testing::random_vector(3, rng);
        p[1].weights = testing::random_vector(20, rng);
        double sq = 0.0, ab = 0.0;
        for (const auto& b : p)
            for (double w : b.weights) {
                sq += w * w;
                ab += std::fabs(w);
            }
        const LossConfig c{0.3, 0.7};
        CHECK(std::abs(regularization(p, c).total - (0.3 * std::sqrt(sq) + 0.7 * ab)) < 1e-12);
    }
    SUBCASE("penalty gradient matches finite differences away from zero") {
        std::mt19937_64 rng(6);
        ParamSet p(2);
        p[0].weights = testing::random_vector(10, rng, 0.1, 1.0);
        p[1].weights = testing::random_vector(7, rng, -1.0, -0.1);
        p[1].bias = {0.5};
        const LossConfig c{0.3, 0.7};
        ParamSet g = zeros_like(p);
        add_regularization_grad(p, c, g);
        for (std::size_t k = 0; k < 2; ++k)
            for (std::size_t i = 0; i < p[k].weights.size(); ++i) {
                const double fd = testing::central_diff([&] { return regularization(p, c).total; }, p[k].weights[i]);
                CHECK(testing::relative_error(g[k].weights[i], fd) < 1e-7);
            }
        CHECK(g[1].bias[0] == 0.0);
    }
    SUBCASE("subgradient at zero is zero") {
        ParamSet p(1);
        p[0].weights = {0.0, 0.0};
        ParamSet g = zeros_like(p);
        add_regularization_grad(p, cfg, g);
        CHECK(g[0].weights == std::vector<double>{0.0, 0.0});
        OptimizerState opt = OptimizerState::zeros_for(p, 0.1, 0.9);
        for (int i = 0; i < 5; ++i) nesterov_step(p, g, opt);
        CHECK(p[0].weights == std::vector<double>{0.0, 0.0});
    }
    CHECK_THROWS_AS((LossConfig{-1.0, 0.0}.validate()), ConfigError);
}

TEST_CASE("nesterov step") {
    SUBCASE("zero gradient and velocity leave parameters unchanged") {
        std::mt19937_64 rng(7);
        Model m = Model::build(tiny_config(2));
        const ParamSet before = m.params();
        OptimizerState opt = OptimizerState::zeros_for(m.params(), 0.1, 0.975);
        nesterov_step(m.params(), zeros_like(m.params()), opt);
        CHECK(m.params() == before);
    }
    SUBCASE("scalar quadratic bowl against a reference recurrence") {
        const double alpha = 0.1, mu = 0.9;
        ParamSet w(1);
        w[0].weights = {1.0};
        OptimizerState opt = OptimizerState::zeros_for(w, alpha, mu);
        double rw = 1.0, rv = 0.0;
        for (int t = 0; t < 50; ++t) {
            const ParamSet ahead = lookahead(w, opt);
            ParamSet g(1);
            g[0].weights = {2.0 * ahead[0].weights[0]};
            nesterov_step(w, g, opt);

            const double grad = 2.0 * (rw + mu * rv);
            rv = mu * rv - alpha * grad;
            rw = rw + rv;
            CHECK(std::abs(w[0].weights[0] - rw) < 1e-12);
        }
    }
    SUBCASE("mu = 0 is plain gradient descent") {
        const double alpha = 0.05;
        ParamSet w(1);
        w[0].weights = {1.5};
        OptimizerState opt = OptimizerState::zeros_for(w, alpha, 0.0);
        double ref = 1.5;
        for (int t = 0; t < 100; ++t) {
            ParamSet g(1);
            g[0].weights = {2.0 * lookahead(w, opt)[0].weights[0]};
            nesterov_step(w, g, opt);
            ref = ref - alpha * 2.0 * ref;
            CHECK(std::abs(w[0].weights[0] - ref) < 1e-12);
        }
    }
    SUBCASE("mismatched shapes") {
        ParamSet w(1), g(2);
        w[0].weights = {1.0};
        OptimizerState opt = OptimizerState::zeros_for(w, 0.1, 0.5);
        CHECK_THROWS_AS(nesterov_step(w, g, opt), ShapeError);
    }
}

TEST_CASE("batch gradient") {
    std::mt19937_64 rng(8);
    const Model m = Model::build(tiny_config(3));
    const auto samples = random_samples(21, rng, false);
    const auto ptrs = pointers(samples);

    SUBCASE("equals the mean of per-sample gradients") {
        const BatchGradient bg = batch_gradient(m, ptrs, 1);
        ParamSet acc = zeros_like(m.params());
        double loss = 0.0;
        for (const auto* s : ptrs) {
            LayerCache cache;
            const Tensor out = forward(m, s->input, &cache);
            loss += mse_loss(out, s->target);
            add_into(acc, backward(m, cache, mse_grad(out, s->target, 1)));
        }
        scale(acc, 1.0 / 21.0);
        CHECK(std::abs(bg.loss - loss / 21.0) < 1e-12);
        for (std::size_t k = 0; k < acc.size(); ++k)
            for (std::size_t i = 0; i < acc[k].weights.size(); ++i)
                CHECK(std::abs(acc[k].weights[i] - bg.grads[k].weights[i]) < 1e-12);
    }
    SUBCASE("bit-identical for any worker count") {
        const BatchGradient one = batch_gradient(m, ptrs, 1);
        for (std::size_t w : {2u, 3u, 8u}) {
            const BatchGradient many = batch_gradient(m, ptrs, w);
            CHECK(many.loss == one.loss);
            CHECK(many.grads == one.grads);
        }
    }
    SUBCASE("penalty is invariant under permutation of the batch") {
        auto shuffled = ptrs;
        std::reverse(shuffled.begin(), shuffled.end());
        CHECK(std::abs(batch_gradient(m, shuffled).loss - batch_gradient(m, ptrs).loss) < 1e-12);
    }
}

TEST_CASE("train") {
    std::mt19937_64 rng(9);

    SUBCASE("zero targets: validation loss never rises over the first epochs") {
        const auto samples = random_samples(60, rng, true);
        TrainConfig cfg;
        cfg.max_epochs = 5;
        cfg.batch_size = 8;
        const TrainResult r = train(Model::build(tiny_config(4)), samples, cfg);
        REQUIRE(r.history.size() == 5);
        for (std::size_t i = 1; i < 5; ++i) CHECK(r.history[i].valid_loss <= r.history[i - 1].valid_loss);
        CHECK(r.history.back().valid_loss < r.history.front().valid_loss);
    }
    SUBCASE("batch larger than the dataset") {
        const auto samples = random_samples(10, rng, false);
        TrainConfig cfg;
        cfg.max_epochs = 2;
        cfg.batch_size = 1000;
        CHECK(train(Model::build(tiny_config(4)), samples, cfg).history.size() == 2);
    }
    SUBCASE("empty split") {
        const auto samples = random_samples(1, rng, false);
        TrainConfig cfg;
        CHECK_THROWS_AS(train(Model::build(tiny_config(4)), samples, cfg), ConfigError);
        CHECK_THROWS_AS(train(Model::build(tiny_config(4)), {}, cfg), ConfigError);
    }
    SUBCASE("invalid configuration") {
        const auto samples = random_samples(10, rng, false);
        TrainConfig cfg;
        cfg.max_epochs = 0;
        CHECK_THROWS_AS(train(Model::build(tiny_config(4)), samples, cfg), ConfigError);
        cfg = {};
        cfg.momentum = 1.0;
        CHECK_THROWS_AS(train(Model::build(tiny_config(4)), samples, cfg), ConfigError);
    }
    SUBCASE("non-finite loss names the epoch and batch") {
        auto samples = random_samples(10, rng, false);
        for (auto& s : samples) s.target.data()[0] = std::nan("");
        TrainConfig cfg;
        try {
            train(Model::build(tiny_config(4)), samples, cfg);
            FAIL("expected TrainingError");
        } catch (const TrainingError& e) {
            CHECK(std::string(e.what()).find("epoch 1, batch 0") != std::string::npos);
        }
    }
    SUBCASE("deterministic history and parameters") {
        const auto samples = random_samples(40, rng, false);
        TrainConfig cfg;
        cfg.max_epochs = 3;
        cfg.batch_size = 16;
        cfg.learning_rate = 1e-2;
        const TrainResult a = train(Model::build(tiny_config(5)), samples, cfg);
        cfg.workers = 3;
        const TrainResult b = train(Model::build(tiny_config(5)), samples, cfg);
        CHECK(a.best.params() == b.best.params());
        REQUIRE(a.history.size() == b.history.size());
        for (std::size_t i = 0; i < a.history.size(); ++i) {
            CHECK(a.history[i].train_loss == b.history[i].train_loss);
            CHECK(a.history[i].valid_loss == b.history[i].valid_loss);
        }
        CHECK(history_csv(a.history) == history_csv(b.history));
    }
    SUBCASE("best model is the minimum recorded validation loss") {
        const auto samples = random_samples(40, rng, false);
        TrainConfig cfg;
        cfg.max_epochs = 8;
        cfg.batch_size = 4;
        cfg.learning_rate = 0.05;
        const TrainResult r = train(Model::build(tiny_config(6)), samples, cfg);
        double best = r.history.front().valid_loss;
        for (const auto& e : r.history) best = std::min(best, e.valid_loss);
        CHECK(r.best_valid_loss == best);
        CHECK(r.history[r.best_epoch - 1].valid_loss == best);
    }
    SUBCASE("one step without momentum or penalty is -alpha times the batch gradient") {
        const auto samples = random_samples(10, rng, false);
        TrainConfig cfg;
        cfg.max_epochs = 1;
        cfg.batch_size = 100;
        cfg.momentum = 0.0;
        cfg.loss = {0.0, 0.0};
        cfg.learning_rate = 0.01;
        const Model start = Model::build(tiny_config(7));
        const TrainResult r = train(start, samples, cfg);

        // Replay the split and epoch shuffle to rebuild the batch order.
        std::uint64_t state = cfg.shuffle_seed;
        const auto order = shuffled_indices(10, state);
        std::vector<const Sample*> train_set;
        for (std::size_t i = 0; i < 9; ++i) train_set.push_back(&samples[order[i]]);
        const auto perm = shuffled_indices(9, state);
        std::vector<const Sample*> batch;
        for (auto i : perm) batch.push_back(train_set[i]);
        const BatchGradient bg = batch_gradient(start, batch);

        const auto& p0 = start.params();
        const auto& p1 = r.best.params();
        for (std::size_t k = 0; k < p0.size(); ++k)
            for (std::size_t i = 0; i < p0[k].weights.size(); ++i)
                CHECK(p1[k].weights[i] == p0[k].weights[i] + (0.0 * 0.0 - 0.01 * bg.grads[k].weights[i]));
    }
}

TEST_CASE("shuffled indices are a seeded permutation") {
    std::uint64_t a = 5, b = 5, c = 6;
    const auto pa = shuffled_indices(100, a);
    CHECK(pa == shuffled_indices(100, b));
    CHECK(pa != shuffled_indices(100, c));
    auto sorted = pa;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 100; ++i) CHECK(sorted[i] == i);
}
