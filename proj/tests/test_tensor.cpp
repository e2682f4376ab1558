#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <memory>
#include <random>

#include "godeflow/checkpoint.hpp"
#include "godeflow/errors.hpp"
#include "godeflow/optim.hpp"
#include "godeflow/tensor.hpp"
#include "support.hpp"

using namespace godeflow;
using namespace godeflow::ad;
using testing::check_gradients;
using testing::random_tensor;
using testing::to_vec;

TEST_CASE("sum of squares gradient") {
    auto x = Tensor::from_values({2}, {1.0, 2.0}, true);
    sum(square(x)).backward();
    CHECK(to_vec(x.grad()) == std::vector<double>{2.0, 4.0});
}

TEST_CASE("sigmoid derivative at zero") {
    auto x = Tensor::from_values({1}, {0.0}, true);
    sum(sigmoid(x)).backward();
    CHECK(x.grad()[0] == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(sigmoid(Tensor::scalar(-50.0)).item() > 0.0);
    CHECK(sigmoid(Tensor::scalar(-50.0)).item() == doctest::Approx(1.0 / (1.0 + std::exp(50.0))).epsilon(1e-12));
    CHECK(sigmoid(Tensor::scalar(800.0)).item() == 1.0);
    CHECK(std::isfinite(sigmoid(Tensor::scalar(-800.0)).item()));
}

TEST_CASE("random five-parameter composite matches finite differences") {
    std::mt19937_64 rng(42);
    auto p = random_tensor({5}, rng);
    auto loss = [&] {
        auto a = mul(tanh(p), sigmoid(scale(p, 0.7)));
        auto b = log(add(square(p), Tensor::scalar(1.5)));
        return add(sum(mul(a, b)), mean(softmax(Tensor(p))));
    };
    const auto r = check_gradients(loss, {p});
    CHECK(r.checked == 5);
    CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("every op passes a finite-difference check") {
    std::mt19937_64 rng(7);
    auto a = random_tensor({4, 3}, rng);
    auto b = random_tensor({4, 3}, rng);
    auto w = random_tensor({3, 2}, rng);
    auto row = random_tensor({1, 3}, rng);
    auto vec = random_tensor({3}, rng);
    auto s = random_tensor({1}, rng);
    auto pos = random_tensor({4, 3}, rng, true, 0.5, 2.0);
    auto index = std::make_shared<RowIndex>(RowIndex{{0, 2, 3, 3, 5}, {1, 2, 0, 0, 2}});

    SUBCASE("add/sub/mul with broadcasting") {
        auto f = [&] { return sum(square(add(mul(a, row), sub(b, vec)) - s)); };
        CHECK(check_gradients(f, {a, b, row, vec, s}).max_rel_error < 1e-4);
    }
    SUBCASE("matmul and scale") {
        auto f = [&] { return sum(square(scale(matmul(a, w), 1.3))); };
        CHECK(check_gradients(f, {a, w}).max_rel_error < 1e-4);
    }
    SUBCASE("concat and select") {
        auto f = [&] {
            const std::array<Tensor, 2> cols{a, b};
            const std::array<Tensor, 2> rows{a, pos};
            const std::array<std::size_t, 4> pick{3, 0, 3, 1};
            return sum(square(concat_cols(cols))) + sum(tanh(select_rows(concat_rows(rows), pick)));
        };
        CHECK(check_gradients(f, {a, b, pos}).max_rel_error < 1e-4);
    }
    SUBCASE("means") {
        auto f = [&] { return sum(square(mean(a, 0))) + sum(tanh(mean(b, 1))) + mean(square(a)); };
        CHECK(check_gradients(f, {a, b}).max_rel_error < 1e-4);
    }
    SUBCASE("pointwise nonlinearities") {
        auto f = [&] { return sum(mul(sigmoid(a), tanh(b))) + sum(log(pos)); };
        CHECK(check_gradients(f, {a, b, pos}).max_rel_error < 1e-4);
    }
    SUBCASE("softmax and log_softmax") {
        auto f = [&] { return sum(mul(softmax(a), b)) + sum(mul(log_softmax(b), pos)); };
        CHECK(check_gradients(f, {a, b, pos}).max_rel_error < 1e-4);
    }
    SUBCASE("neighbor mean") {
        auto f = [&] { return sum(square(neighbor_mean(a, index))); };
        CHECK(check_gradients(f, {a}).max_rel_error < 1e-4);
    }
}

TEST_CASE("neighbor mean values") {
    auto x = Tensor::from_values({3, 2}, {1, 2, 3, 4, 5, 6});
    auto index = std::make_shared<RowIndex>(RowIndex{{0, 2, 3, 3}, {1, 2, 0}});
    const auto y = neighbor_mean(x, index);
    CHECK(to_vec(y.values()) == std::vector<double>{4, 5, 1, 2, 0, 0});
}

TEST_CASE("softmax rows sum to one and log_softmax is stable") {
    auto x = Tensor::from_values({2, 3}, {1000.0, 0.0, -1000.0, 1.0, 2.0, 3.0});
    const auto y = softmax(x);
    const auto p = y.values();
    CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0));
    CHECK(p[3] + p[4] + p[5] == doctest::Approx(1.0));
    const auto ls = log_softmax(x);
    for (double v : ls.values()) CHECK(std::isfinite(v));
}

TEST_CASE("shape mismatch names both shapes") {
    auto a = Tensor::zeros({2, 3});
    auto b = Tensor::zeros({3, 2});
    CHECK_THROWS_AS(add(a, b), DimensionError);
    try {
        add(a, b);
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2, 3]") != std::string::npos);
        CHECK(msg.find("[3, 2]") != std::string::npos);
    }
    CHECK_THROWS_AS(matmul(a, a), DimensionError);
    CHECK_THROWS_AS(log(Tensor::from_values({1}, {0.0})), DomainError);
}

TEST_CASE("gradient reversal") {
    SUBCASE("forward is bitwise identity") {
        std::mt19937_64 rng(1);
        auto x = random_tensor({7, 5}, rng);
        const auto y = reverse_gradient(x);
        for (std::size_t i = 0; i < x.numel(); ++i) {
            CHECK(std::bit_cast<std::uint64_t>(y.values()[i]) == std::bit_cast<std::uint64_t>(x.values()[i]));
        }
        CHECK(reverse_gradient(Tensor::from_values({1}, {3.0})).values()[0] == 3.0);
    }
    SUBCASE("gradient is negated") {
        auto x = Tensor::from_values({1}, {3.0}, true);
        sum(square(reverse_gradient(x))).backward();
        CHECK(x.grad()[0] == -6.0);
    }
    SUBCASE("double reversal restores the gradient") {
        auto x = Tensor::from_values({1}, {3.0}, true);
        sum(square(reverse_gradient(reverse_gradient(x)))).backward();
        CHECK(x.grad()[0] == 6.0);
    }
}

TEST_CASE("backward is linear") {
    std::mt19937_64 rng(5);
    auto x = random_tensor({3, 3}, rng);
    auto f = [&] { return sum(tanh(x)); };
    auto g = [&] { return sum(square(x)); };
    f().backward();
    const auto gf = to_vec(x.grad());
    x.clear_grad();
    g().backward();
    const auto gg = to_vec(x.grad());
    x.clear_grad();
    (f() + g()).backward();
    for (std::size_t i = 0; i < gf.size(); ++i) CHECK(x.grad()[i] == doctest::Approx(gf[i] + gg[i]).epsilon(1e-14));
}

TEST_CASE("gradients accumulate across backward calls and skip constants") {
    auto x = Tensor::from_values({2}, {1.0, 2.0}, true);
    auto c = Tensor::from_values({2}, {1.0, 1.0}, false);
    sum(mul(x, c)).backward();
    sum(mul(x, c)).backward();
    CHECK(to_vec(x.grad()) == std::vector<double>{2.0, 2.0});
    CHECK_FALSE(c.has_grad());
}

TEST_CASE("no-grad guard records nothing") {
    auto x = Tensor::from_values({2}, {1.0, 2.0}, true);
    Tensor y;
    {
        NoGradGuard guard;
        CHECK_FALSE(grad_enabled());
        y = sum(square(x));
    }
    CHECK(grad_enabled());
    CHECK_FALSE(y.requires_grad());
    CHECK(y.item() == 5.0);
}

TEST_CASE("backward requires a scalar") {
    auto x = Tensor::from_values({2}, {1.0, 2.0}, true);
    CHECK_THROWS(square(x).backward());
}

TEST_CASE("adam first step") {
    auto p = Tensor::from_values({1}, {0.0}, true);
    std::array<Tensor, 1> params{p};
    AdamState state(params, AdamOptions{1e-4});
    sum(p).backward();
    adam_step(params, state);
    CHECK(std::abs(p.values()[0] - (-1e-4)) < 1e-8);
    CHECK(state.step_count() == 1);
    CHECK_FALSE(p.has_grad());
}

TEST_CASE("adam with zero gradients leaves parameters unchanged") {
    auto p = Tensor::from_values({3}, {1.0, -2.0, 0.5}, true);
    std::array<Tensor, 1> params{p};
    AdamState state(params, AdamOptions{1e-3});
    sum(scale(p, 0.0)).backward();
    adam_step(params, state);
    CHECK(to_vec(p.values()) == std::vector<double>{1.0, -2.0, 0.5});
    CHECK(state.step_count() == 1);
}

TEST_CASE("adam missing gradient is a state error") {
    auto p = Tensor::from_values({1}, {0.0}, true);
    std::array<Tensor, 1> params{p};
    AdamState state(params, AdamOptions{});
    CHECK_THROWS_AS(adam_step(params, state), StateError);
}

TEST_CASE("adam runs are deterministic") {
    auto run = [] {
        std::mt19937_64 rng(99);
        auto w = glorot_uniform(4, 3, rng);
        auto x = random_tensor({5, 4}, rng, false);
        std::array<Tensor, 1> params{w};
        AdamState state(params, AdamOptions{1e-2});
        for (int i = 0; i < 20; ++i) {
            sum(square(tanh(matmul(x, w)))).backward();
            adam_step(params, state);
        }
        return to_vec(w.values());
    };
    CHECK(run() == run());
}

TEST_CASE("glorot bounds") {
    std::mt19937_64 rng(3);
    const auto w = glorot_uniform(10, 20, rng);
    const double bound = std::sqrt(6.0 / 30.0);
    CHECK(w.shape() == Shape{10, 20});
    CHECK(w.requires_grad());
    for (double v : w.values()) {
        CHECK(v >= -bound);
        CHECK(v <= bound);
    }
}

TEST_CASE("checkpoint round trip is bit exact") {
    testing::TempDir dir("ckpt");
    std::mt19937_64 rng(12);
    std::vector<NamedTensor> tensors{{"a", random_tensor({3, 4}, rng)},
                                     {"b", Tensor::from_values({2}, {1.0 / 3.0, -0.0})},
                                     {"c", Tensor::scalar(std::nextafter(1.0, 2.0))}};
    save_checkpoint(dir.path / "m.ckpt", tensors, {{"note", "x"}});
    const auto loaded = load_checkpoint(dir.path / "m.ckpt");
    REQUIRE(loaded.tensors.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(loaded.tensors[k].name == tensors[k].name);
        CHECK(loaded.tensors[k].tensor.shape() == tensors[k].tensor.shape());
        for (std::size_t i = 0; i < tensors[k].tensor.numel(); ++i) {
            CHECK(std::bit_cast<std::uint64_t>(loaded.tensors[k].tensor.values()[i]) ==
                  std::bit_cast<std::uint64_t>(tensors[k].tensor.values()[i]));
        }
    }
    CHECK(loaded.metadata.at("note") == "x");
}

TEST_CASE("checkpoint corruption is detected") {
    testing::TempDir dir("ckpt_bad");
    std::vector<NamedTensor> tensors{{"a", Tensor::from_values({2}, {1.0, 2.0})}};
    save_checkpoint(dir.path / "m.ckpt", tensors, {});
    SUBCASE("bad magic") {
        std::fstream f(dir.path / "m.ckpt.bin", std::ios::in | std::ios::out | std::ios::binary);
        f.write("XXXXXXXX", 8);
        f.close();
        CHECK_THROWS_AS(load_checkpoint(dir.path / "m.ckpt"), IoError);
    }
    SUBCASE("truncated blob") {
        std::filesystem::resize_file(dir.path / "m.ckpt.bin", 12);
        CHECK_THROWS_AS(load_checkpoint(dir.path / "m.ckpt"), IoError);
    }
    SUBCASE("missing manifest") { CHECK_THROWS_AS(load_checkpoint(dir.path / "none.ckpt"), IoError); }
}
