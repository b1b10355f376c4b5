#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "aliaug/ops.hpp"
#include "aliaug/rng.hpp"

#include <cmath>
#include <functional>

using namespace aliaug;

namespace {

TensorPtr randt(std::vector<int> shape, Rng& rng, bool rg = true) {
    auto t = make_tensor(std::move(shape), rg);
    for (auto& x : t->v) x = rng.normal(0.0, 1.0);
    return t;
}

// Central finite differences on every entry of every input tensor.
void grad_check(const std::vector<TensorPtr>& inputs,
                const std::function<TensorPtr()>& forward, real tol = 1e-6) {
    for (const auto& in : inputs) in->zero_grad();
    Tape tape;
    {
        TapeScope scope(tape);
        auto loss = forward();
        tape.backward(loss);
    }
    const real h = 1e-5;
    for (const auto& in : inputs) {
        for (int i = 0; i < in->numel(); ++i) {
            const real keep = in->v[i];
            in->v[i] = keep + h;
            const real up = forward()->v[0];
            in->v[i] = keep - h;
            const real dn = forward()->v[0];
            in->v[i] = keep;
            const real fd = (up - dn) / (2 * h);
            const real denom = std::max(real(1e-4), std::abs(fd) + std::abs(in->g[i]));
            CHECK(std::abs(in->g[i] - fd) / denom < tol * 1e3 + 1e-7);
        }
    }
}

}  // namespace

TEST_CASE("elementwise ops match finite differences") {
    Rng rng(1);
    auto a = randt({3, 4}, rng);
    auto b = randt({3, 4}, rng);
    grad_check({a, b}, [&] { return mean_all(mul(add(a, b), sub(a, b))); });
    grad_check({a}, [&] { return mean_all(silu(scale(a, 0.7))); });
    grad_check({a}, [&] { return mean_all(tanh_act(a)); });
    grad_check({a}, [&] { return mean_all(leaky_relu(a)); });
    grad_check({a}, [&] { return mean_all(sigmoid_act(a)); });
}

TEST_CASE("matmul / linear / softmax gradients") {
    Rng rng(2);
    auto x = randt({3, 5}, rng);
    auto w = randt({4, 5}, rng);
    auto b = randt({4}, rng);
    grad_check({x, w, b}, [&] { return mean_all(linear(x, w, b)); });
    auto m = randt({2, 3}, rng);
    auto n = randt({3, 4}, rng);
    grad_check({m, n}, [&] { return mse(matmul(m, n), make_tensor({2, 4})); });
    auto s = randt({3, 6}, rng);
    auto tgt = randt({3, 6}, rng, false);
    grad_check({s}, [&] { return mse(softmax_rows(s), tgt); });
}

TEST_CASE("conv2d gradients, stride 1 and 2") {
    Rng rng(3);
    for (int stride : {1, 2}) {
        auto x = randt({2, 6, 6}, rng);
        auto w = randt({3, 2 * 3 * 3}, rng);
        auto b = randt({3}, rng);
        grad_check({x, w, b}, [&] { return mean_all(conv2d(x, w, b, 2, 3, stride, 1)); });
    }
    // 1x1 conv
    auto x = randt({4, 3, 3}, rng);
    auto w = randt({2, 4}, rng);
    grad_check({x, w}, [&] { return mean_all(conv2d(x, w, nullptr, 4, 1, 1, 0)); });
}

TEST_CASE("spatial ops gradients") {
    Rng rng(4);
    auto x = randt({3, 4, 4}, rng);
    grad_check({x}, [&] { return mean_all(upsample_nearest2x(x)); });
    grad_check({x}, [&] { return sum_all(global_avg_pool(x)); });
    auto b = randt({3}, rng);
    grad_check({x, b}, [&] { return mean_all(mul(add_channel_bias(x, b), x)); });
    grad_check({x}, [&] {
        auto tgt = make_tensor({3, 4, 4});
        return mse(channel_unit_normalize(x), tgt);
    });
}

TEST_CASE("slicing and reshape gradients") {
    Rng rng(5);
    auto x = randt({3, 8}, rng);
    grad_check({x}, [&] {
        auto a = slice_cols(x, 0, 4);
        auto b = slice_cols(x, 4, 4);
        return mean_all(mul(concat_cols({a, b}), x));
    });
    grad_check({x}, [&] { return mean_all(mul(transpose2d(x), transpose2d(x))); });
    grad_check({x}, [&] { return mean_all(reshape(x, {4, 6})); });
}

TEST_CASE("bce_with_logits values and gradients") {
    Rng rng(6);
    auto z = make_tensor({4}, true);
    // probability 0.5 everywhere -> ln 2
    auto loss = bce_with_logits(z, 1.0);
    CHECK(loss->v[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    auto z2 = randt({5}, rng);
    grad_check({z2}, [&] { return bce_with_logits(z2, 1.0); });
    grad_check({z2}, [&] { return bce_with_logits(z2, 0.0); });
}

TEST_CASE("no tape means no graph") {
    Rng rng(7);
    auto a = randt({3, 3}, rng);
    auto out = add(a, a);
    CHECK_FALSE(out->requires_grad);
}
