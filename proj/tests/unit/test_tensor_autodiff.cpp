#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "test_util.hpp"
#include "visage/autodiff.hpp"
#include "visage/errors.hpp"
#include "visage/tensor.hpp"

using namespace visage;
using namespace visage::nn;
using vtest::fd_check;
using vtest::rand_tensor;

namespace {

// Builds loss = mse(f(inputs...), target) with the given leaves, runs
// backward once, and returns a closure that recomputes the loss value from
// the (possibly perturbed) current leaf values for finite differencing.
struct LossHarness {
    std::function<Var()> build;  // rebuilds the graph from current leaf values
    double run_backward() {
        Var loss = build();
        backward(loss);
        return loss->value.at(0);
    }
    double value() {
        NoGradGuard g;
        return build()->value.at(0);
    }
};

void check_inputs(LossHarness& h, std::vector<Var> leaves, double tol = 2e-4) {
    for (auto& l : leaves) l->zero_grad();
    h.run_backward();
    for (auto& l : leaves) {
        auto rep = fd_check(l, [&] { return h.value(); });
        INFO("leaf ", l->name.empty() ? "anon" : l->name, " max_rel=", rep.max_rel,
             " max_abs=", rep.max_abs);
        CHECK(rep.max_rel < tol);
    }
}

}  // namespace

TEST_CASE("tensor construction and indexing") {
    Tensor t({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.rank() == 2);
    CHECK(t.dim(0) == 2);
    CHECK(t.dim(1) == 3);
    t.at(1, 2) = 7.5;
    CHECK(t.data[5] == doctest::Approx(7.5));

    Tensor chw({2, 3, 4});
    chw.at(1, 2, 3) = -1.0;
    CHECK(chw.data[1 * 12 + 2 * 4 + 3] == doctest::Approx(-1.0));

    CHECK(Tensor::scalar(3.0).numel() == 1);
    CHECK(Tensor::full({2, 2}, 4.0).at(3) == doctest::Approx(4.0));
    CHECK(Tensor::zeros({5}).at(4) == 0.0);
    CHECK(t.shape_str() == "[2,3]");

    CHECK_THROWS_AS(Tensor({2, 0}), InvalidArgument);
    CHECK_THROWS_AS(Tensor({2}, {1.0, 2.0, 3.0}), InvalidArgument);
}

TEST_CASE("tensor randn moments") {
    Rng rng = make_rng(123);
    Tensor t = Tensor::randn({10000}, rng, 2.0);
    double mean = 0.0, var = 0.0;
    for (double v : t.data) mean += v;
    mean /= static_cast<double>(t.numel());
    for (double v : t.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(t.numel());
    CHECK(std::abs(mean) < 0.1);
    CHECK(std::abs(std::sqrt(var) - 2.0) < 0.1);
}

TEST_CASE("max_abs_diff") {
    Tensor a({3}, {1.0, 2.0, 3.0});
    Tensor b({3}, {1.0, 2.5, 2.0});
    CHECK(max_abs_diff(a, b) == doctest::Approx(1.0));
    CHECK_THROWS_AS(max_abs_diff(a, Tensor({2}, {1.0, 2.0})), InvalidArgument);
}

TEST_CASE("backward requires scalar root") {
    Var x = leaf(rand_tensor({3}, 1));
    CHECK_THROWS_AS(backward(x), InvalidArgument);
}

TEST_CASE("gradients: elementwise ops") {
    Var a = leaf(rand_tensor({2, 3}, 10));
    Var b = leaf(rand_tensor({2, 3}, 11));
    Tensor target = rand_tensor({2, 3}, 12);

    SUBCASE("add") {
        LossHarness h{[&] { return mse(add(a, b), constant(target)); }};
        check_inputs(h, {a, b});
    }
    SUBCASE("sub") {
        LossHarness h{[&] { return mse(sub(a, b), constant(target)); }};
        check_inputs(h, {a, b});
    }
    SUBCASE("mul") {
        LossHarness h{[&] { return mse(mul(a, b), constant(target)); }};
        check_inputs(h, {a, b});
    }
    SUBCASE("scale and add_scalar") {
        LossHarness h{[&] { return mse(add_scalar(scale(a, -1.7), 0.3), constant(target)); }};
        check_inputs(h, {a});
    }
    SUBCASE("silu") {
        LossHarness h{[&] { return mse(silu(a), constant(target)); }};
        check_inputs(h, {a});
    }
    SUBCASE("shape mismatch throws") {
        CHECK_THROWS_AS(add(a, leaf(rand_tensor({3, 2}, 13))), InvalidArgument);
    }
}

TEST_CASE("gradients: conv2d") {
    Var x = leaf(rand_tensor({3, 5, 5}, 20));
    Var w = leaf(rand_tensor({2, 3, 3, 3}, 21, 0.4));
    Var b = leaf(rand_tensor({2}, 22, 0.2));

    SUBCASE("stride 1 pad 1") {
        Tensor target = rand_tensor({2, 5, 5}, 23);
        LossHarness h{[&] { return mse(conv2d(x, w, b, 1, 1), constant(target)); }};
        check_inputs(h, {x, w, b});
    }
    SUBCASE("stride 2 pad 1") {
        Tensor target = rand_tensor({2, 3, 3}, 24);
        LossHarness h{[&] { return mse(conv2d(x, w, b, 2, 1), constant(target)); }};
        check_inputs(h, {x, w, b});
    }
    SUBCASE("1x1 kernel pad 0") {
        Var w1 = leaf(rand_tensor({4, 3, 1, 1}, 25, 0.5));
        Var b1 = leaf(rand_tensor({4}, 26, 0.2));
        Tensor target = rand_tensor({4, 5, 5}, 27);
        LossHarness h{[&] { return mse(conv2d(x, w1, b1, 1, 0), constant(target)); }};
        check_inputs(h, {x, w1, b1});
    }
    SUBCASE("bad shapes throw") {
        CHECK_THROWS_AS(conv2d(leaf(rand_tensor({3, 5}, 1)), w, b), InvalidArgument);
        CHECK_THROWS_AS(conv2d(x, leaf(rand_tensor({2, 4, 3, 3}, 1)), b), InvalidArgument);
    }
}

TEST_CASE("gradients: linear / matmul / transpose") {
    Var x = leaf(rand_tensor({4, 3}, 30));
    Var w = leaf(rand_tensor({5, 3}, 31, 0.5));
    Var b = leaf(rand_tensor({5}, 32, 0.2));
    SUBCASE("linear on matrix") {
        Tensor target = rand_tensor({4, 5}, 33);
        LossHarness h{[&] { return mse(linear(x, w, b), constant(target)); }};
        check_inputs(h, {x, w, b});
    }
    SUBCASE("linear on vector") {
        Var v = leaf(rand_tensor({3}, 34));
        Tensor target = rand_tensor({5}, 35);
        LossHarness h{[&] { return mse(linear(v, w, b), constant(target)); }};
        check_inputs(h, {v, w, b});
    }
    SUBCASE("matmul") {
        Var a = leaf(rand_tensor({4, 3}, 36));
        Var c = leaf(rand_tensor({3, 2}, 37));
        Tensor target = rand_tensor({4, 2}, 38);
        LossHarness h{[&] { return mse(matmul(a, c), constant(target)); }};
        check_inputs(h, {a, c});
    }
    SUBCASE("transpose") {
        Tensor target = rand_tensor({3, 4}, 39);
        LossHarness h{[&] { return mse(transpose(x), constant(target)); }};
        check_inputs(h, {x});
    }
}

TEST_CASE("gradients: softmax and norms") {
    SUBCASE("softmax_rows") {
        Var a = leaf(rand_tensor({3, 5}, 40));
        Tensor target = rand_tensor({3, 5}, 41, 0.3);
        LossHarness h{[&] { return mse(softmax_rows(a), constant(target)); }};
        check_inputs(h, {a});
        // Rows sum to one.
        NoGradGuard g;
        Tensor sm = softmax_rows(a)->value;
        for (int r = 0; r < 3; ++r) {
            double s = 0.0;
            for (int c = 0; c < 5; ++c) s += sm.at(r, c);
            CHECK(s == doctest::Approx(1.0));
        }
    }
    SUBCASE("group_norm") {
        Var x = leaf(rand_tensor({4, 3, 3}, 42));
        Var gamma = leaf(rand_tensor({4}, 43, 0.3));
        Var beta = leaf(rand_tensor({4}, 44, 0.3));
        Tensor target = rand_tensor({4, 3, 3}, 45);
        LossHarness h{[&] { return mse(group_norm(x, gamma, beta, 2), constant(target)); }};
        check_inputs(h, {x, gamma, beta}, 5e-4);
    }
    SUBCASE("group_norm groups must divide channels") {
        Var x = leaf(rand_tensor({4, 2, 2}, 46));
        Var gamma = leaf(Tensor::full({4}, 1.0));
        Var beta = leaf(Tensor::zeros({4}));
        CHECK_THROWS_AS(group_norm(x, gamma, beta, 3), InvalidArgument);
    }
}

TEST_CASE("gradients: channel ops, concat, upsample") {
    Var x = leaf(rand_tensor({3, 2, 2}, 50));
    SUBCASE("channel_scale / channel_bias") {
        Var s = leaf(rand_tensor({3}, 51, 0.4));
        Var b = leaf(rand_tensor({3}, 52, 0.4));
        Tensor target = rand_tensor({3, 2, 2}, 53);
        LossHarness h{
            [&] { return mse(channel_bias(channel_scale(x, s), b), constant(target)); }};
        check_inputs(h, {x, s, b});
    }
    SUBCASE("concat_channels") {
        Var y = leaf(rand_tensor({2, 2, 2}, 54));
        Tensor target = rand_tensor({5, 2, 2}, 55);
        LossHarness h{[&] { return mse(concat_channels(x, y), constant(target)); }};
        check_inputs(h, {x, y});
    }
    SUBCASE("upsample_nearest2") {
        Tensor target = rand_tensor({3, 4, 4}, 56);
        LossHarness h{[&] { return mse(upsample_nearest2(x), constant(target)); }};
        check_inputs(h, {x});
    }
}

TEST_CASE("gradients: reshape, tokens, means") {
    Var x = leaf(rand_tensor({3, 2, 2}, 60));
    SUBCASE("chw_to_tokens / tokens_to_chw round trip") {
        Tensor target = rand_tensor({3, 2, 2}, 61);
        LossHarness h{
            [&] { return mse(tokens_to_chw(chw_to_tokens(x), 2, 2), constant(target)); }};
        check_inputs(h, {x});
        NoGradGuard g;
        CHECK(max_abs_diff(tokens_to_chw(chw_to_tokens(x), 2, 2)->value, x->value) == 0.0);
        CHECK(chw_to_tokens(x)->value.shape == std::vector<int>{4, 3});
    }
    SUBCASE("reshape") {
        Tensor target = rand_tensor({12}, 62);
        LossHarness h{[&] { return mse(reshape(x, {12}), constant(target)); }};
        check_inputs(h, {x});
        CHECK_THROWS_AS(reshape(x, {7}), InvalidArgument);
    }
    SUBCASE("mean_all") {
        LossHarness h{[&] { return mse(mean_all(x), constant(Tensor::scalar(0.25))); }};
        check_inputs(h, {x});
    }
    SUBCASE("mean_rows") {
        Var m = leaf(rand_tensor({4, 3}, 63));
        Tensor target = rand_tensor({3}, 64);
        LossHarness h{[&] { return mse(mean_rows(m), constant(target)); }};
        check_inputs(h, {m});
        NoGradGuard g;
        Tensor got = mean_rows(m)->value;
        for (int c = 0; c < 3; ++c) {
            double s = 0.0;
            for (int r = 0; r < 4; ++r) s += m->value.at(r, c);
            CHECK(got.at(c) == doctest::Approx(s / 4.0));
        }
    }
    SUBCASE("n-ary sum") {
        Var a = leaf(rand_tensor({2, 2}, 65));
        Var b = leaf(rand_tensor({2, 2}, 66));
        Var c = leaf(rand_tensor({2, 2}, 67));
        Tensor target = rand_tensor({2, 2}, 68);
        LossHarness h{[&] { return mse(sum({a, b, c}), constant(target)); }};
        check_inputs(h, {a, b, c});
        CHECK_THROWS_AS(sum({}), InvalidArgument);
    }
}

TEST_CASE("gradient accumulation across two backward passes") {
    Var x = leaf(rand_tensor({3}, 70));
    Var loss = mse(x, constant(Tensor::zeros({3})));
    backward(loss);
    Tensor g1 = x->grad;
    backward(mse(x, constant(Tensor::zeros({3}))));
    for (std::size_t i = 0; i < g1.numel(); ++i)
        CHECK(x->grad.data[i] == doctest::Approx(2.0 * g1.data[i]));
}

TEST_CASE("NoGradGuard suppresses graph construction") {
    Var a = leaf(rand_tensor({2, 2}, 80));
    {
        NoGradGuard guard;
        CHECK_FALSE(grad_enabled());
        Var y = mul(a, a);
        CHECK(y->parents.empty());
        CHECK_FALSE(y->requires_grad);
        CHECK_FALSE(static_cast<bool>(y->backward_fn));
        {
            NoGradGuard nested;  // guards nest
            CHECK_FALSE(grad_enabled());
        }
        CHECK_FALSE(grad_enabled());
    }
    CHECK(grad_enabled());
    Var y = mul(a, a);
    CHECK(y->parents.size() == 2);
}

TEST_CASE("constants never receive gradient") {
    Var c = constant(rand_tensor({3}, 90));
    Var x = leaf(rand_tensor({3}, 91));
    backward(mse(mul(x, c), constant(Tensor::zeros({3}))));
    CHECK(x->has_grad());
    CHECK_FALSE(c->has_grad());
}

TEST_CASE("parameter registry") {
    nn::ParamRegistry reg;
    Var w1 = reg.add("lca.stem.w", Tensor::zeros({2, 2}));
    reg.add("lca.stem.b", Tensor::zeros({2}));
    reg.add("backbone.head.w", Tensor::zeros({3}), false);

    CHECK(reg.all().size() == 3);
    CHECK(reg.find("lca.stem.w") == w1);
    CHECK(reg.contains("backbone.head.w"));
    CHECK_FALSE(reg.contains("nope"));
    CHECK_THROWS_AS(reg.find("nope"), NotFound);
    CHECK_THROWS_AS(reg.add("lca.stem.w", Tensor::zeros({1})), InvalidArgument);
    CHECK_THROWS_AS(reg.add("", Tensor::zeros({1})), InvalidArgument);

    CHECK(reg.with_prefix("lca.").size() == 2);
    CHECK(reg.with_prefix("backbone.").size() == 1);
    CHECK(reg.total_elements("lca.") == 6);
    CHECK(reg.total_elements() == 9);

    CHECK(w1->trainable);
    reg.set_trainable("lca.", false);
    CHECK_FALSE(w1->trainable);
    reg.set_trainable("", true);
    CHECK(reg.find("backbone.head.w")->trainable);

    w1->ensure_grad();
    w1->grad.data[0] = 5.0;
    reg.zero_grad();
    CHECK(w1->grad.data[0] == 0.0);
}

TEST_CASE("initializer shapes and scale") {
    Rng rng = make_rng(7);
    Tensor w = nn::init_conv_weight(8, 4, 3, rng);
    CHECK(w.shape == std::vector<int>{8, 4, 3, 3});
    Tensor l = nn::init_linear_weight(6, 12, rng);
    CHECK(l.shape == std::vector<int>{6, 12});
    double mx = 0.0;
    for (double v : w.data) mx = std::max(mx, std::abs(v));
    CHECK(mx > 0.0);
    CHECK(mx < 1.5);
}
