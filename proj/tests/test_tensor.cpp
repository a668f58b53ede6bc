#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "saliflow/tensor.hpp"
#include "support/fixtures.hpp"

using namespace saliflow;
using namespace testsupport;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, bool requires_grad = true,
                     double scale = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape), requires_grad);
    for (auto& v : t.data()) v = rng.uniform(-scale, scale);
    return t;
}

// Projects the op output to a scalar with fixed pseudo-random weights so
// every output element influences the loss.
Tensor weighted_sum(const Tensor& y, std::uint64_t seed = 31) {
    Rng rng(seed);
    Tensor w = Tensor::zeros(y.shape(), false);
    for (auto& v : w.data()) v = rng.uniform(-1.0, 1.0);
    return ops::sum(ops::mul(y, w));
}

// Central-difference check of d(loss)/d(input[i]) for every element of
// every listed input.
void gradient_check(const std::function<Tensor()>& loss_fn, std::vector<Tensor> inputs,
                    double eps = 1e-5, double tol = 1e-6) {
    Tensor loss = loss_fn();
    for (auto& input : inputs) input.zero_grad();
    loss.backward();
    std::vector<std::vector<double>> analytic;
    for (auto& input : inputs) analytic.push_back(input.grad());

    for (std::size_t k = 0; k < inputs.size(); ++k) {
        auto& input = inputs[k];
        for (std::size_t i = 0; i < input.numel(); ++i) {
            const double orig = input.data()[i];
            input.data()[i] = orig + eps;
            const double lp = loss_fn().value();
            input.data()[i] = orig - eps;
            const double lm = loss_fn().value();
            input.data()[i] = orig;
            const double numeric = (lp - lm) / (2.0 * eps);
            const double got = analytic[k][i];
            const double denom = std::max({std::fabs(numeric), std::fabs(got), 1.0});
            REQUIRE(std::fabs(numeric - got) / denom < tol);
        }
    }
}

}  // namespace

TEST_CASE("conv2d gradients match finite differences") {
    Rng rng(1);
    Tensor x = random_tensor({2, 3, 6, 6}, rng);
    Tensor w = random_tensor({4, 3, 3, 3}, rng, true, 0.5);
    Tensor b = random_tensor({4}, rng, true, 0.1);
    SECTION("stride 1, pad 1") {
        gradient_check([&] { return weighted_sum(ops::conv2d(x, w, b, 1, 1)); }, {x, w, b});
    }
    SECTION("stride 2, pad 0") {
        gradient_check([&] { return weighted_sum(ops::conv2d(x, w, b, 2, 0)); }, {x, w, b});
    }
    SECTION("bias-free") {
        gradient_check([&] { return weighted_sum(ops::conv2d(x, w, Tensor(), 1, 1)); }, {x, w});
    }
}

TEST_CASE("conv2d forward matches a hand-computed case") {
    // 1x1x2x2 input, 1x1x2x2 kernel, stride 1, no padding -> dot product
    Tensor x = Tensor::from_vector({1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor w = Tensor::from_vector({1, 1, 2, 2}, {10, 20, 30, 40});
    Tensor b = Tensor::from_vector({1}, {0.5});
    Tensor y = ops::conv2d(x, w, b, 1, 0);
    REQUIRE(y.shape() == std::vector<int>{1, 1, 1, 1});
    CHECK(y.value() == Catch::Approx(10 + 40 + 90 + 160 + 0.5));
}

TEST_CASE("linear gradients match finite differences") {
    Rng rng(2);
    Tensor x = random_tensor({3, 5}, rng);
    Tensor w = random_tensor({4, 5}, rng);
    Tensor b = random_tensor({4}, rng);
    gradient_check([&] { return weighted_sum(ops::linear(x, w, b)); }, {x, w, b});
}

TEST_CASE("elementwise op gradients match finite differences") {
    Rng rng(3);
    Tensor x = random_tensor({2, 2, 3, 3}, rng);
    Tensor y = random_tensor({2, 2, 3, 3}, rng);
    gradient_check([&] { return weighted_sum(ops::add(x, y)); }, {x, y});
    gradient_check([&] { return weighted_sum(ops::mul(x, y)); }, {x, y});
    gradient_check([&] { return weighted_sum(ops::sigmoid(x)); }, {x});
    gradient_check([&] { return weighted_sum(ops::scale(x, -2.5)); }, {x});
    // relu: keep inputs away from the kink
    Tensor z = random_tensor({2, 2, 3, 3}, rng);
    for (auto& v : z.data())
        if (std::fabs(v) < 0.05) v = 0.2;
    gradient_check([&] { return weighted_sum(ops::relu(z)); }, {z});
}

TEST_CASE("pooling gradients match finite differences") {
    Rng rng(4);
    Tensor x = random_tensor({2, 3, 4, 4}, rng);
    gradient_check([&] { return weighted_sum(ops::global_avg_pool(x)); }, {x});
    gradient_check([&] { return weighted_sum(ops::global_max_pool(x)); }, {x});
    gradient_check([&] { return weighted_sum(ops::channel_mean_map(x)); }, {x});
    gradient_check([&] { return weighted_sum(ops::channel_max_map(x)); }, {x});
}

TEST_CASE("broadcast multiplies and concat gradients match finite differences") {
    Rng rng(5);
    Tensor x = random_tensor({2, 4, 3, 3}, rng);
    Tensor cg = random_tensor({2, 4}, rng);
    Tensor sg = random_tensor({2, 1, 3, 3}, rng);
    Tensor other = random_tensor({2, 2, 3, 3}, rng);
    gradient_check([&] { return weighted_sum(ops::mul_channel(x, cg)); }, {x, cg});
    gradient_check([&] { return weighted_sum(ops::mul_spatial(x, sg)); }, {x, sg});
    gradient_check([&] { return weighted_sum(ops::concat_channels(x, other)); }, {x, other});
}

TEST_CASE("bilinear upsample gradients match finite differences") {
    Rng rng(6);
    Tensor x = random_tensor({1, 2, 3, 3}, rng);
    gradient_check([&] { return weighted_sum(ops::upsample_bilinear(x, 6, 6)); }, {x});
    gradient_check([&] { return weighted_sum(ops::upsample_bilinear(x, 5, 7)); }, {x});
}

TEST_CASE("bce-with-logits matches the direct formula and stays stable") {
    Rng rng(7);
    Tensor logits = random_tensor({1, 1, 4, 4}, rng, true, 3.0);
    Tensor targets = Tensor::zeros({1, 1, 4, 4});
    for (auto& v : targets.data()) v = rng.next_below(2) ? 1.0 : 0.0;

    double direct = 0.0;
    for (std::size_t i = 0; i < logits.numel(); ++i) {
        double p = 1.0 / (1.0 + std::exp(-logits.data()[i]));
        double y = targets.data()[i];
        direct += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    }
    direct /= static_cast<double>(logits.numel());
    CHECK(ops::bce_with_logits_mean(logits, targets).value() ==
          Catch::Approx(direct).margin(1e-9));

    gradient_check([&] { return ops::bce_with_logits_mean(logits, targets); }, {logits});

    // extreme logits: no overflow, loss ~ 0 when confident-correct
    Tensor big = Tensor::full({1, 1, 2, 2}, 100.0);
    Tensor ones = Tensor::full({1, 1, 2, 2}, 1.0);
    CHECK(std::isfinite(ops::bce_with_logits_mean(big, ones).value()));
    CHECK(ops::bce_with_logits_mean(big, ones).value() < 1e-6);
    Tensor huge = Tensor::full({1, 1, 2, 2}, 500.0);
    CHECK(std::isfinite(ops::bce_with_logits_mean(huge, ones).value()));
}

TEST_CASE("backward through a shared subgraph accumulates both paths") {
    Tensor x = Tensor::from_vector({2}, {1.0, 2.0}, true);
    Tensor y = ops::add(x, x);  // dy/dx = 2
    Tensor loss = ops::sum(y);
    loss.backward();
    CHECK(x.grad()[0] == Catch::Approx(2.0));
    CHECK(x.grad()[1] == Catch::Approx(2.0));
}

TEST_CASE("tensor shape validation") {
    CHECK_THROWS_AS(Tensor::from_vector({2, 2}, {1.0}), DimensionError);
    CHECK_THROWS_AS(ops::add(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
    Tensor non_scalar = Tensor::zeros({2});
    CHECK_THROWS_AS(non_scalar.backward(), ValueError);
}
