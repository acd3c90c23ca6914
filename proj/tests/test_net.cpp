#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "mixconf/net.hpp"

using namespace mixconf;

namespace {

Matrix random_batch(std::size_t n, std::size_t dim, Rng& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    Matrix x(n, dim);
    for (double& v : x.data()) v = dist(rng);
    return x;
}

Matrix random_targets(std::size_t n, std::size_t c, Rng& rng) {
    std::uniform_int_distribution<std::size_t> cls(0, c - 1);
    Matrix t(n, c);
    for (std::size_t i = 0; i < n; ++i) t(i, cls(rng)) = 1.0;
    return t;
}

// Central finite differences of the weighted cross-entropy loss with respect
// to one parameter slot.
double fd_gradient(NetState& state, double& slot, const Matrix& x, const Matrix& t,
                   std::span<const double> w, double eps) {
    const double saved = slot;
    slot = saved + eps;
    const auto up = cross_entropy(forward(state, x), t);
    slot = saved - eps;
    const auto down = cross_entropy(forward(state, x), t);
    slot = saved;
    double plus = 0.0, minus = 0.0;
    for (std::size_t i = 0; i < up.size(); ++i) {
        plus += w[i] * up[i];
        minus += w[i] * down[i];
    }
    return (plus - minus) / (2.0 * eps);
}

bool grad_close(double got, double expected, double tol) {
    return std::abs(got - expected) <=
           tol * std::max({std::abs(got), std::abs(expected), 1e-5});
}

}  // namespace

TEST_CASE("forward produces softmax rows of the right shape") {
    NetConfig cfg;
    cfg.layer_sizes = {3, 8, 4};
    cfg.seed = 11;
    NetState state = NetState::init(cfg);
    Rng rng(0);
    const Matrix x = random_batch(7, 3, rng);
    const Matrix p = forward(state, x);
    REQUIRE(p.rows() == 7);
    REQUIRE(p.cols() == 4);
    for (std::size_t r = 0; r < p.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < p.cols(); ++c) {
            CHECK(p(r, c) > 0.0);
            s += p(r, c);
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
    CHECK_THROWS_AS(forward(state, random_batch(2, 5, rng)), std::invalid_argument);
}

TEST_CASE("zero weights give uniform predictions") {
    NetConfig cfg;
    cfg.layer_sizes = {2, 6, 5};
    NetState state = NetState::init(cfg);
    for (auto& layer : state.params)
        for (double& v : layer.w.data()) v = 0.0;
    Rng rng(1);
    const Matrix p = forward(state, random_batch(4, 2, rng));
    for (std::size_t r = 0; r < p.rows(); ++r)
        for (std::size_t c = 0; c < p.cols(); ++c)
            CHECK(p(r, c) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("cross_entropy analytic values") {
    Matrix onehot(1, 10);
    onehot(0, 3) = 1.0;
    CHECK(cross_entropy(onehot, onehot)[0] == doctest::Approx(0.0).epsilon(1e-12));

    Matrix uniform(1, 10, 0.1);
    CHECK(cross_entropy(uniform, onehot)[0] == doctest::Approx(std::log(10.0)).epsilon(1e-12));

    Matrix half(1, 2, 0.5);
    CHECK(cross_entropy(half, half)[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    Matrix wrong(2, 3);
    CHECK_THROWS_AS(cross_entropy(uniform, wrong), std::invalid_argument);
}

TEST_CASE("backprop matches central finite differences on a 2-8-8-3 net") {
    // Tanh keeps the loss smooth so the quadrature of the oracle is valid.
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        NetConfig cfg;
        cfg.layer_sizes = {2, 8, 8, 3};
        cfg.activation = Activation::Tanh;
        cfg.seed = 1000 + seed;
        NetState state = NetState::init(cfg);

        Rng rng(seed);
        const Matrix x = random_batch(5, 2, rng, 1.5);
        const Matrix t = random_targets(5, 3, rng);
        std::vector<double> w = {0.3, 0.25, 0.2, 0.15, 0.1};

        const GradientResult res = loss_gradients(state, x, t, w);
        const double eps = 1e-5;
        for (std::size_t li = 0; li < state.params.size(); ++li) {
            auto& layer = state.params[li];
            for (std::size_t i = 0; i < layer.w.data().size(); ++i) {
                const double fd = fd_gradient(state, layer.w.data()[i], x, t, w, eps);
                CHECK(grad_close(res.grads[li].w.data()[i], fd, 1e-4));
            }
            for (std::size_t i = 0; i < layer.b.size(); ++i) {
                const double fd = fd_gradient(state, layer.b[i], x, t, w, eps);
                CHECK(grad_close(res.grads[li].b[i], fd, 1e-4));
            }
        }
    }
}

TEST_CASE("backprop matches finite differences for ReLU away from kinks") {
    NetConfig cfg;
    cfg.layer_sizes = {2, 8, 3};
    cfg.activation = Activation::ReLU;
    cfg.seed = 77;
    NetState state = NetState::init(cfg);
    Rng rng(77);
    const Matrix x = random_batch(4, 2, rng, 1.5);
    const Matrix t = random_targets(4, 3, rng);
    const std::vector<double> w(4, 0.25);

    const GradientResult res = loss_gradients(state, x, t, w);
    const double eps = 1e-6;
    for (std::size_t li = 0; li < state.params.size(); ++li) {
        auto& layer = state.params[li];
        for (std::size_t i = 0; i < layer.w.data().size(); ++i) {
            const double fd = fd_gradient(state, layer.w.data()[i], x, t, w, eps);
            CHECK(grad_close(res.grads[li].w.data()[i], fd, 1e-3));
        }
    }
}

TEST_CASE("loss equals the weighted combination of per-sample cross entropies") {
    NetConfig cfg;
    cfg.layer_sizes = {3, 10, 4};
    cfg.seed = 5;
    NetState state = NetState::init(cfg);
    Rng rng(5);
    const Matrix x = random_batch(6, 3, rng);
    const Matrix t = random_targets(6, 4, rng);
    std::vector<double> w = {0.0, 0.1, 0.5, 0.0, 1.25, 0.3};

    const auto per_sample = cross_entropy(forward(state, x), t);
    double expected = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) expected += w[i] * per_sample[i];

    NetState copy = state;
    const double loss = backward_and_step(copy, x, t, w, 1e-3);
    CHECK(std::abs(loss - expected) <= 1e-12);
}

TEST_CASE("all-zero weights leave parameters untouched but advance the step counter") {
    NetConfig cfg;
    cfg.layer_sizes = {2, 4, 3};
    cfg.seed = 9;
    NetState state = NetState::init(cfg);
    const NetState before = state;
    Rng rng(9);
    const Matrix x = random_batch(3, 2, rng);
    const Matrix t = random_targets(3, 3, rng);
    const std::vector<double> w(3, 0.0);
    const double loss = backward_and_step(state, x, t, w, 1e-2);
    CHECK(loss == 0.0);
    CHECK(state.adam_step == 1);
    for (std::size_t li = 0; li < state.params.size(); ++li) {
        CHECK(state.params[li].w.data() == before.params[li].w.data());
        CHECK(state.params[li].b == before.params[li].b);
    }
}

TEST_CASE("descent on a separable toy set reduces the loss") {
    NetConfig cfg;
    cfg.layer_sizes = {2, 8, 2};
    cfg.seed = 3;
    NetState state = NetState::init(cfg);
    Matrix x(2, 2);
    x(0, 0) = 1.0;
    x(1, 0) = -1.0;
    Matrix t(2, 2);
    t(0, 0) = 1.0;
    t(1, 1) = 1.0;
    const std::vector<double> w(2, 0.5);
    const auto initial = cross_entropy(forward(state, x), t);
    const double loss0 = 0.5 * (initial[0] + initial[1]);
    double last = loss0;
    for (int i = 0; i < 50; ++i) last = backward_and_step(state, x, t, w, 1e-2);
    CHECK(last < loss0);
}

TEST_CASE("training trajectories are seed-deterministic") {
    auto run = [] {
        NetConfig cfg;
        cfg.layer_sizes = {2, 6, 2};
        cfg.seed = 21;
        NetState state = NetState::init(cfg);
        Rng rng(21);
        for (int i = 0; i < 25; ++i) {
            const Matrix x = random_batch(4, 2, rng);
            const Matrix t = random_targets(4, 2, rng);
            backward_and_step(state, x, t, std::vector<double>(4, 0.25), 2e-3);
        }
        return state;
    };
    const NetState a = run();
    const NetState b = run();
    for (std::size_t li = 0; li < a.params.size(); ++li) {
        CHECK(a.params[li].w.data() == b.params[li].w.data());
        CHECK(a.ema[li].w.data() == b.ema[li].w.data());
    }
}

TEST_CASE("non-finite gradients abort the step without touching parameters") {
    NetConfig cfg;
    cfg.layer_sizes = {2, 4, 2};
    cfg.seed = 2;
    NetState state = NetState::init(cfg);
    const NetState before = state;
    Matrix x(1, 2);
    x(0, 0) = std::numeric_limits<double>::infinity();
    Matrix t(1, 2);
    t(0, 0) = 1.0;
    CHECK_THROWS_AS(backward_and_step(state, x, t, std::vector<double>{1.0}, 1e-3),
                    std::runtime_error);
    CHECK(state.adam_step == before.adam_step);
    for (std::size_t li = 0; li < state.params.size(); ++li)
        CHECK(state.params[li].w.data() == before.params[li].w.data());
}

TEST_CASE("EMA shadow tracks as configured") {
    NetConfig cfg;
    cfg.layer_sizes = {2, 5, 2};
    cfg.seed = 13;

    SUBCASE("fresh state: ema_forward equals forward") {
        NetState state = NetState::init(cfg);
        Rng rng(13);
        const Matrix x = random_batch(5, 2, rng);
        CHECK(ema_forward(state, x).data() == forward(state, x).data());
    }

    SUBCASE("decay 0 keeps the shadow glued to the live parameters") {
        cfg.ema_decay = 0.0;
        NetState state = NetState::init(cfg);
        Rng rng(14);
        for (int i = 0; i < 10; ++i) {
            const Matrix x = random_batch(4, 2, rng);
            const Matrix t = random_targets(4, 2, rng);
            backward_and_step(state, x, t, std::vector<double>(4, 0.25), 5e-3);
        }
        for (std::size_t li = 0; li < state.params.size(); ++li) {
            CHECK(state.ema[li].w.data() == state.params[li].w.data());
            CHECK(state.ema[li].b == state.params[li].b);
        }
        const Matrix x = random_batch(3, 2, rng);
        CHECK(ema_forward(state, x).data() == forward(state, x).data());
    }

    SUBCASE("one step with decay d blends old and new") {
        cfg.ema_decay = 0.9;
        NetState state = NetState::init(cfg);
        const NetState before = state;
        Rng rng(15);
        const Matrix x = random_batch(4, 2, rng);
        const Matrix t = random_targets(4, 2, rng);
        backward_and_step(state, x, t, std::vector<double>(4, 0.25), 5e-3);
        for (std::size_t li = 0; li < state.params.size(); ++li)
            for (std::size_t i = 0; i < state.params[li].w.data().size(); ++i) {
                const double expected = 0.9 * before.ema[li].w.data()[i] +
                                        0.1 * state.params[li].w.data()[i];
                CHECK(state.ema[li].w.data()[i] == doctest::Approx(expected).epsilon(1e-15));
            }
    }
}

TEST_CASE("checkpoint round trip restores live and EMA parameters") {
    NetConfig cfg;
    cfg.layer_sizes = {2, 7, 3};
    cfg.seed = 31;
    NetState state = NetState::init(cfg);
    Rng rng(31);
    for (int i = 0; i < 12; ++i) {
        const Matrix x = random_batch(4, 2, rng);
        const Matrix t = random_targets(4, 3, rng);
        backward_and_step(state, x, t, std::vector<double>(4, 0.25), 3e-3);
    }

    const std::string path = (std::filesystem::temp_directory_path() / "mixconf_ckpt.bin").string();
    save_checkpoint(state, path);

    NetConfig other = cfg;
    other.seed = 99;  // different init; the checkpoint must overwrite it
    NetState restored = NetState::init(other);
    load_checkpoint(restored, path);
    for (std::size_t li = 0; li < state.params.size(); ++li) {
        CHECK(restored.params[li].w.data() == state.params[li].w.data());
        CHECK(restored.params[li].b == state.params[li].b);
        CHECK(restored.ema[li].w.data() == state.ema[li].w.data());
        CHECK(restored.ema[li].b == state.ema[li].b);
    }

    NetConfig mismatched;
    mismatched.layer_sizes = {2, 9, 3};
    NetState wrong = NetState::init(mismatched);
    CHECK_THROWS_AS(load_checkpoint(wrong, path), std::runtime_error);
    std::remove(path.c_str());
}
