#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "oracles.hpp"
#include "pmc/nncore.hpp"

using namespace pmc;

namespace {

DenseNet random_net(const std::vector<std::size_t>& sizes, std::uint64_t seed) {
    Rng rng(seed);
    return make_dense_net(sizes, rng);
}

Vec random_vec(std::size_t n, Rng& rng) {
    Vec v(n);
    for (double& x : v) x = rng.gaussian();
    return v;
}

bool params_equal(const DenseNet& a, const DenseNet& b) {
    if (a.layer_sizes != b.layer_sizes) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        if (a.layers[i].w.v != b.layers[i].w.v || a.layers[i].b != b.layers[i].b) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("forward: identity-initialized single linear layer") {
    DenseNet net;
    net.layer_sizes = {2, 2};
    net.layers.resize(1);
    net.layers[0].w = Matrix(2, 2);
    net.layers[0].w.at(0, 0) = 1.0;
    net.layers[0].w.at(1, 1) = 1.0;
    net.layers[0].b = {0.0, 0.0};
    const auto acts = forward(net, {1.0, 2.0});
    CHECK(acts.output() == Vec{1.0, 2.0});
}

TEST_CASE("forward: zero weights and bias annihilate any input") {
    DenseNet net;
    net.layer_sizes = {3, 4, 2};
    net.layers.resize(2);
    net.layers[0].w = Matrix(4, 3);
    net.layers[0].b.assign(4, 0.0);
    net.layers[1].w = Matrix(2, 4);
    net.layers[1].b.assign(2, 0.0);
    const auto acts = forward(net, {5.0, -3.0, 7.0});
    CHECK(acts.output() == Vec{0.0, 0.0});
}

TEST_CASE("forward: random 2-4-3 net matches the reference evaluation") {
    DenseNet net = random_net({2, 4, 3}, 42);
    Rng rng(99);
    for (int i = 0; i < 20; ++i) {
        const Vec x = random_vec(2, rng);
        const Vec got = forward(net, x).output();
        const Vec want = oracle::reference_forward(net, x);
        REQUIRE(got.size() == want.size());
        for (std::size_t k = 0; k < got.size(); ++k) CHECK(got[k] == doctest::Approx(want[k]).epsilon(1e-14));
    }
}

TEST_CASE("forward: dimension mismatch is rejected") {
    DenseNet net = random_net({3, 2}, 1);
    CHECK_THROWS_AS(forward(net, {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("backward: linear layer gives dW = g x^T") {
    DenseNet net = random_net({3, 2}, 7);
    const Vec x{0.5, -1.0, 2.0};
    const Vec g{2.0, -3.0};
    const auto acts = forward(net, x);
    const NetGrads grads = backward(net, acts, g);
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t c = 0; c < 3; ++c) {
            CHECK(grads.layers[0].w.at(r, c) == doctest::Approx(g[r] * x[c]));
        }
        CHECK(grads.layers[0].b[r] == doctest::Approx(g[r]));
    }
}

TEST_CASE("backward: dead rectifier blocks the upstream gradient") {
    DenseNet net;
    net.layer_sizes = {2, 2, 1};
    net.layers.resize(2);
    net.layers[0].w = Matrix(2, 2);
    net.layers[0].w.at(0, 0) = -1.0;  // all pre-activations negative for positive x
    net.layers[0].w.at(1, 1) = -1.0;
    net.layers[0].b = {-1.0, -1.0};
    net.layers[1].w = Matrix(1, 2);
    net.layers[1].w.at(0, 0) = 3.0;
    net.layers[1].w.at(0, 1) = -2.0;
    net.layers[1].b = {0.0};
    const auto acts = forward(net, {1.0, 1.0});
    const NetGrads grads = backward(net, acts, {1.0});
    for (double v : grads.layers[0].w.v) CHECK(v == 0.0);
    for (double v : grads.layers[0].b) CHECK(v == 0.0);
    CHECK(grads.input == Vec{0.0, 0.0});
}

TEST_CASE("backward: stale activations are rejected") {
    DenseNet net = random_net({3, 4, 2}, 3);
    DenseNet other = random_net({3, 5, 2}, 4);
    const auto acts = forward(other, {1.0, 2.0, 3.0});
    CHECK_THROWS_AS(backward(net, acts, {1.0, 1.0}), std::logic_error);
}

TEST_CASE("backward matches central finite differences across random nets") {
    Rng rng(2024);
    for (int cfg = 0; cfg < 10; ++cfg) {
        DenseNet net = random_net({4, 6, 5, 3}, 100 + cfg);
        const Vec x = random_vec(4, rng);
        const std::size_t label = rng.below(3);
        auto loss_fn = [&] {
            const auto acts = forward(net, x);
            return softmax_xent(acts.output(), label, 1.0).loss;
        };
        const auto acts = forward(net, x);
        const LossGrad lg = softmax_xent(acts.output(), label, 1.0);
        const NetGrads analytic = backward(net, acts, lg.grad);
        const NetGrads fd = oracle::fd_gradients(net, loss_fn);
        CHECK(oracle::max_rel_err(analytic, fd) < 1e-4);
    }
}

TEST_CASE("softmax_xent: frozen cases") {
    SUBCASE("uniform logits over N classes") {
        for (std::size_t nc : {2u, 4u, 7u}) {
            const Vec logits(nc, 0.37);
            const LossGrad lg = softmax_xent(logits, 0, 1.0);
            CHECK(lg.loss == doctest::Approx(std::log(static_cast<double>(nc))).epsilon(1e-12));
        }
    }
    SUBCASE("weight 0 masks the sample") {
        const LossGrad lg = softmax_xent({1.0, -2.0, 0.5}, 1, 0.0);
        CHECK(lg.loss == 0.0);
        for (double g : lg.grad) CHECK(g == 0.0);
    }
    SUBCASE("logits [2,0], label 0, weight 0.5") {
        const LossGrad lg = softmax_xent({2.0, 0.0}, 0, 0.5);
        CHECK(lg.loss == doctest::Approx(0.06346400552148631).epsilon(1e-12));  // 0.5*ln(1+e^-2)
    }
    SUBCASE("gradient is weight * (softmax - onehot)") {
        const Vec logits{0.3, -0.2, 1.7};
        const LossGrad lg = softmax_xent(logits, 2, 0.8);
        const Vec p = softmax(logits);
        for (std::size_t i = 0; i < 3; ++i) {
            const double want = 0.8 * (p[i] - (i == 2 ? 1.0 : 0.0));
            CHECK(lg.grad[i] == doctest::Approx(want).epsilon(1e-12));
        }
    }
    SUBCASE("label out of range") {
        CHECK_THROWS_AS(softmax_xent({1.0, 2.0}, 2, 1.0), std::invalid_argument);
    }
}

TEST_CASE("binary_xent: frozen cases") {
    CHECK(binary_xent(0.0, 0).loss == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(binary_xent(0.0, 1).loss == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    // confident and correct: loss heads to zero
    CHECK(binary_xent(30.0, 1).loss < 1e-12);
    CHECK(binary_xent(-30.0, 0).loss < 1e-12);
    // logit 1.0 with label 0: ln(1+e)
    CHECK(binary_xent(1.0, 0).loss == doctest::Approx(1.3132616875182228).epsilon(1e-12));
    // gradient = sigmoid - label
    CHECK(binary_xent(1.0, 0).grad == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-14));
    CHECK_THROWS_AS(binary_xent(std::nan(""), 0), std::invalid_argument);
}

TEST_CASE("l1_loss: cases and finite differences away from ties") {
    SUBCASE("pred equals target") {
        const LossGrad lg = l1_loss({1.0, 2.0}, {1.0, 2.0});
        CHECK(lg.loss == 0.0);
    }
    SUBCASE("sign case") {
        const LossGrad lg = l1_loss({1.0, -1.0}, {0.0, 0.0});
        CHECK(lg.loss == doctest::Approx(1.0));
        CHECK(lg.grad[0] == doctest::Approx(0.5));
        CHECK(lg.grad[1] == doctest::Approx(-0.5));
    }
    SUBCASE("dim mismatch") {
        CHECK_THROWS_AS(l1_loss({1.0}, {1.0, 2.0}), std::invalid_argument);
    }
    SUBCASE("finite differences through a net") {
        Rng rng(5);
        DenseNet net = random_net({3, 4, 2}, 55);
        const Vec x = random_vec(3, rng);
        const Vec target{0.3, -0.7};
        auto loss_fn = [&] { return l1_loss(forward(net, x).output(), target).loss; };
        const auto acts = forward(net, x);
        const LossGrad lg = l1_loss(acts.output(), target);
        const NetGrads analytic = backward(net, acts, lg.grad);
        const NetGrads fd = oracle::fd_gradients(net, loss_fn);
        CHECK(oracle::max_rel_err(analytic, fd) < 1e-4);
    }
}

TEST_CASE("grl_backward: exact negation and scaling") {
    CHECK(grl_backward({1.0, -2.0}, 1.0) == Vec{-1.0, 2.0});
    const Vec zero = grl_backward({3.0, -4.0, 5.0}, 0.0);
    for (double v : zero) CHECK(v == 0.0);
    CHECK(grl_backward({0.5}, 0.3)[0] == doctest::Approx(-0.15).epsilon(1e-15));
    CHECK_THROWS_AS(grl_backward({1.0}, -0.5), std::invalid_argument);
}

TEST_CASE("sgd_step: edge behaviors and a hand-traced recurrence") {
    DenseNet net = random_net({2, 2}, 11);
    const DenseNet before = net;

    SUBCASE("zero grads, zero weight decay leave params unchanged") {
        OptimState opt = OptimState::for_net(net, 0.1, 0.9, 0.0, false);
        sgd_step(net, zero_grads(net), opt);
        CHECK(params_equal(net, before));
    }
    SUBCASE("momentum 0, weight decay 0 is a plain descent step") {
        OptimState opt = OptimState::for_net(net, 0.1, 0.0, 0.0, false);
        NetGrads g = zero_grads(net);
        g.layers[0].w.v[0] = 2.0;
        sgd_step(net, g, opt);
        CHECK(net.layers[0].w.v[0] == doctest::Approx(before.layers[0].w.v[0] - 0.2).epsilon(1e-15));
    }
    SUBCASE("two momentum steps match the hand-traced recurrence") {
        OptimState opt = OptimState::for_net(net, 0.1, 0.9, 0.0, false);
        NetGrads g1 = zero_grads(net), g2 = zero_grads(net);
        g1.layers[0].w.v[0] = 0.5;
        g2.layers[0].w.v[0] = 0.25;
        const double p0 = net.layers[0].w.v[0];
        sgd_step(net, g1, opt);
        sgd_step(net, g2, opt);
        // v1 = 0.5, p1 = p0 - 0.1*0.5; v2 = 0.9*0.5 + 0.25, p2 = p1 - 0.1*v2
        const double v2 = 0.9 * 0.5 + 0.25;
        CHECK(net.layers[0].w.v[0] == doctest::Approx(p0 - 0.05 - 0.1 * v2).epsilon(1e-15));
        CHECK(opt.velocity[0].w.v[0] == doctest::Approx(v2).epsilon(1e-15));
    }
    SUBCASE("weight decay pulls toward zero") {
        OptimState opt = OptimState::for_net(net, 0.1, 0.0, 0.01, false);
        sgd_step(net, zero_grads(net), opt);
        CHECK(net.layers[0].w.v[0] ==
              doctest::Approx(before.layers[0].w.v[0] * (1.0 - 0.1 * 0.01)).epsilon(1e-15));
    }
}

TEST_CASE("inv_lr: frozen values and monotonicity") {
    CHECK(inv_lr(0.0, 0.3) == 0.3);
    CHECK(inv_lr(1.0, 1.0) == doctest::Approx(std::pow(11.0, -0.75)).epsilon(1e-15));
    CHECK(inv_lr(1.0, 1.0) == doctest::Approx(0.16555942).epsilon(1e-6));
    CHECK(inv_lr(0.1, 1.0) == doctest::Approx(std::pow(2.0, -0.75)).epsilon(1e-15));
    double prev = inv_lr(0.0, 1.0);
    for (int i = 1; i <= 100; ++i) {
        const double cur = inv_lr(i / 100.0, 1.0);
        CHECK(cur < prev);
        prev = cur;
    }
    CHECK_THROWS_AS(inv_lr(-0.01, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(inv_lr(1.01, 1.0), std::invalid_argument);
}

TEST_CASE("adaptation ramp: 0 at p=0, approaches 1") {
    CHECK(adaptation_ramp(0.0) == 0.0);
    CHECK(adaptation_ramp(1.0) == doctest::Approx(2.0 / (1.0 + std::exp(-10.0)) - 1.0).epsilon(1e-15));
    CHECK(adaptation_ramp(1.0) > 0.9999);
}

TEST_CASE("optimizer progress must not decrease") {
    DenseNet net = random_net({2, 2}, 1);
    OptimState opt = OptimState::for_net(net, 0.1, 0.9, 0.0, true);
    opt.set_progress(0.5);
    CHECK_THROWS_AS(opt.set_progress(0.4), std::invalid_argument);
    opt.set_progress(0.5);  // equal is fine
    opt.set_progress(1.0);
}

TEST_CASE("determinism: identical seeds give bitwise-identical training") {
    auto run = [](std::uint64_t seed) {
        DenseNet net = random_net({3, 8, 4}, seed);
        OptimState opt = OptimState::for_net(net, 0.05, 0.9, 3e-4, true);
        Rng rng(seed + 1);
        for (int step = 0; step < 10; ++step) {
            opt.set_progress(step / 10.0);
            const Vec x = random_vec(3, rng);
            const std::size_t label = rng.below(4);
            const auto acts = forward(net, x);
            const LossGrad lg = softmax_xent(acts.output(), label, 1.0);
            sgd_step(net, backward(net, acts, lg.grad), opt);
        }
        return net;
    };
    const DenseNet a = run(33);
    const DenseNet b = run(33);
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        CHECK(std::memcmp(a.layers[i].w.v.data(), b.layers[i].w.v.data(),
                          a.layers[i].w.v.size() * sizeof(double)) == 0);
        CHECK(std::memcmp(a.layers[i].b.data(), b.layers[i].b.data(),
                          a.layers[i].b.size() * sizeof(double)) == 0);
    }
    const DenseNet c = run(34);
    CHECK_FALSE(params_equal(a, c));
}

TEST_CASE("rng: derived seeds decorrelate streams") {
    CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
    CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
    CHECK(derive_seed(1, "a", 0) != derive_seed(1, "a", 1));
    Rng r1(derive_seed(7, "x"));
    Rng r2(derive_seed(7, "x"));
    for (int i = 0; i < 100; ++i) CHECK(r1.next_u64() == r2.next_u64());
}
