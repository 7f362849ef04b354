#include <doctest.h>

#include <cmath>
#include <random>

#include "fedsim/tensor.hpp"

using namespace fedsim;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng,
                     double lo = -2.0, double hi = 2.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v));
}

// scalar-arithmetic oracle for -log softmax(z)_y, independent of the tape
double ce_oracle(const std::vector<double>& z, std::size_t y) {
    double denom = 0.0;
    for (double v : z) denom += std::exp(v);
    return -std::log(std::exp(z[y]) / denom);
}

}  // namespace

TEST_CASE("tensor construction validates shape and finiteness") {
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), shape_error);
    CHECK_THROWS_AS(Tensor({2}, {1.0, std::nan("")}), numeric_error);
    CHECK_THROWS_AS(Tensor({1}, {std::numeric_limits<double>::infinity()}),
                    numeric_error);
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK(t.at(1, 2) == 6.0);
}

TEST_CASE("matmul forward") {
    Tape tape;
    SUBCASE("identity") {
        auto i2 = tape.input(Tensor({2, 2}, {1, 0, 0, 1}));
        auto v = tape.input(Tensor({2, 1}, {3, 4}));
        auto r = tape.matmul(i2, v);
        CHECK(tape.value(r).at(0) == 3.0);
        CHECK(tape.value(r).at(1) == 4.0);
    }
    SUBCASE("hand-expanded product") {
        auto a = tape.input(Tensor({2, 2}, {1, 2, 3, 4}));
        auto b = tape.input(Tensor({2, 1}, {1, 1}));
        auto r = tape.matmul(a, b);
        CHECK(tape.value(r).at(0) == 3.0);
        CHECK(tape.value(r).at(1) == 7.0);
    }
    SUBCASE("zero annihilates") {
        auto z = tape.input(Tensor::zeros({3, 2}));
        auto b = tape.input(Tensor({2, 2}, {5, 6, 7, 8}));
        auto r = tape.matmul(z, b);
        for (std::size_t i = 0; i < 6; ++i) CHECK(tape.value(r).at(i) == 0.0);
    }
    SUBCASE("shape mismatch") {
        auto a = tape.input(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
        auto b = tape.input(Tensor({2, 2}, {1, 2, 3, 4}));
        CHECK_THROWS_AS(tape.matmul(a, b), shape_error);
    }
}

TEST_CASE("l2_norm") {
    Tape tape;
    CHECK(tape.value(tape.l2_norm(tape.input(Tensor({2}, {3, 4})))).at(0) ==
          doctest::Approx(5.0).epsilon(1e-15));
    CHECK(tape.value(tape.l2_norm(tape.input(Tensor({4}, {1, 1, 1, 1})))).at(0) ==
          doctest::Approx(2.0).epsilon(1e-15));
    CHECK_THROWS_AS(tape.l2_norm(tape.input(Tensor::zeros({5}))),
                    degenerate_norm_error);
}

TEST_CASE("normalize") {
    Tape tape;
    SUBCASE("scales by the inverse norm") {
        auto r = tape.normalize(tape.input(Tensor({2}, {3, 4})));
        CHECK(tape.value(r).at(0) == doctest::Approx(0.6).epsilon(1e-15));
        CHECK(tape.value(r).at(1) == doctest::Approx(0.8).epsilon(1e-15));
    }
    SUBCASE("idempotent on the sphere") {
        auto u = tape.normalize(tape.input(Tensor({3}, {2, 0, 0})));
        CHECK(tape.value(u).at(0) == 1.0);
        auto again = tape.normalize(u);
        CHECK(tape.value(again).at(0) == 1.0);
    }
    SUBCASE("unit output norm on random inputs") {
        std::mt19937_64 rng(11);
        for (int i = 0; i < 200; ++i) {
            Tape t;
            auto r = t.normalize(t.input(random_tensor({8}, rng)));
            CHECK(std::abs(l2_norm_value(t.value(r)) - 1.0) < 1e-12);
        }
    }
    SUBCASE("degenerate") {
        CHECK_THROWS_AS(tape.normalize(tape.input(Tensor::zeros({3}))),
                        degenerate_norm_error);
    }
}

TEST_CASE("softmax cross entropy") {
    Tape tape;
    SUBCASE("uniform gives ln 2") {
        auto r = tape.softmax_cross_entropy(tape.input(Tensor({2}, {0, 0})), 0);
        CHECK(tape.value(r).at(0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("saturated logits do not overflow") {
        auto r = tape.softmax_cross_entropy(tape.input(Tensor({2}, {1000, 0})), 0);
        CHECK(tape.value(r).at(0) == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("matches the scalar oracle") {
        // frozen from ce_oracle({1,2,3}, 2) = 0.40760596444438...
        auto r = tape.softmax_cross_entropy(tape.input(Tensor({3}, {1, 2, 3})), 2);
        CHECK(tape.value(r).at(0) == doctest::Approx(0.40760596444438079).epsilon(1e-12));
        CHECK(tape.value(r).at(0) ==
              doctest::Approx(ce_oracle({1, 2, 3}, 2)).epsilon(1e-12));
    }
    SUBCASE("label out of range") {
        CHECK_THROWS_AS(tape.softmax_cross_entropy(tape.input(Tensor({3}, {1, 2, 3})), 3),
                        std::out_of_range);
    }
    SUBCASE("shift invariance") {
        std::mt19937_64 rng(5);
        for (int i = 0; i < 50; ++i) {
            Tensor z = random_tensor({6}, rng);
            Tensor shifted = z;
            for (auto& v : shifted.values()) v += 13.5;
            Tape t;
            double a = t.value(t.softmax_cross_entropy(t.input(z), 2)).at(0);
            double b = t.value(t.softmax_cross_entropy(t.input(shifted), 2)).at(0);
            CHECK(std::abs(a - b) < 1e-10);
        }
    }
}

TEST_CASE("grad_check on known analytic gradients") {
    SUBCASE("l2 norm at [3,4]") {
        auto build = [](Tape& t, const std::vector<Tape::Id>& in) {
            return t.l2_norm(in[0]);
        };
        CHECK(grad_check(build, {Tensor({2}, {3, 4})}, 1e-6) < 1e-6);
    }
    SUBCASE("sum of squares is exact under central differences") {
        auto sumsq = [](Tape& t, const std::vector<Tape::Id>& in) {
            auto norm = t.l2_norm(in[0]);
            return t.matmul(norm, norm);  // scalar * scalar = ||v||^2
        };
        std::mt19937_64 rng(3);
        Tensor p = random_tensor({5}, rng, 0.5, 2.0);
        CHECK(grad_check(sumsq, {p}, 1e-6) < 1e-8);
    }
    SUBCASE("composite CE of normalized matmul") {
        std::mt19937_64 rng(17);
        for (int i = 0; i < 20; ++i) {
            Tensor w = random_tensor({4, 6}, rng);
            Tensor x = random_tensor({6}, rng, 0.5, 2.0);
            auto build = [](Tape& t, const std::vector<Tape::Id>& in) {
                return t.softmax_cross_entropy(t.matmul(in[0], t.normalize(in[1])), 1);
            };
            CHECK(grad_check(build, {w, x}, 1e-6) < 1e-5);
        }
    }
    SUBCASE("eps outside range rejected") {
        auto build = [](Tape& t, const std::vector<Tape::Id>& in) {
            return t.l2_norm(in[0]);
        };
        CHECK_THROWS_AS(grad_check(build, {Tensor({2}, {3, 4})}, 1e-3),
                        std::invalid_argument);
    }
}

TEST_CASE("matmul backward accumulates both factors") {
    // f(A, x) = ||A x||; check against finite differences
    std::mt19937_64 rng(23);
    for (int i = 0; i < 20; ++i) {
        Tensor a = random_tensor({3, 4}, rng);
        Tensor x = random_tensor({4}, rng, 0.5, 1.5);
        auto build = [](Tape& t, const std::vector<Tape::Id>& in) {
            return t.l2_norm(t.matmul(in[0], in[1]));
        };
        CHECK(grad_check(build, {a, x}, 1e-6) < 1e-5);
    }
}

TEST_CASE("normalize backward is tangent to the sphere") {
    // upstream gradient orthogonal to v_hat stays orthogonal to v after pullback
    std::mt19937_64 rng(31);
    for (int i = 0; i < 50; ++i) {
        Tensor v = random_tensor({6}, rng, 0.5, 2.0);
        Tape tape;
        auto vid = tape.input(v);
        auto u = tape.normalize(vid);
        // project a random direction onto the tangent of v_hat, use it as the
        // upstream gradient by building <g, u> with a constant row vector
        Tensor g = random_tensor({6}, rng);
        const auto& uv = tape.value(u);
        double dot = 0.0;
        for (std::size_t j = 0; j < 6; ++j) dot += g.at(j) * uv.at(j);
        for (std::size_t j = 0; j < 6; ++j) g.at(j) -= dot * uv.at(j);
        auto row = tape.input(Tensor({1, 6}, g.values()));
        auto scalar = tape.matmul(row, u);
        tape.backward(scalar);
        const auto& grad_v = tape.grad(vid);
        double inner = 0.0;
        for (std::size_t j = 0; j < 6; ++j) inner += grad_v[j] * v.at(j);
        CHECK(std::abs(inner) < 1e-10);
    }
}

TEST_CASE("relu and add backward") {
    std::mt19937_64 rng(41);
    for (int i = 0; i < 20; ++i) {
        Tensor w = random_tensor({3, 3}, rng);
        Tensor b = random_tensor({3}, rng);
        Tensor x = random_tensor({3}, rng);
        // keep relu inputs away from the kink
        auto pre = [&] {
            Tape t;
            auto y = t.add(t.matmul(t.input(w), t.input(x)), t.input(b));
            return t.value(y);
        }();
        bool near_kink = false;
        for (std::size_t j = 0; j < 3; ++j)
            if (std::abs(pre.at(j)) < 1e-3) near_kink = true;
        if (near_kink) continue;
        auto build = [](Tape& t, const std::vector<Tape::Id>& in) {
            auto h = t.relu(t.add(t.matmul(in[0], in[2]), in[1]));
            auto shifted = t.add(h, t.input(Tensor({3}, {1.0, 1.0, 1.0})));
            return t.l2_norm(shifted);
        };
        CHECK(grad_check(build, {w, b, x}, 1e-6) < 1e-5);
    }
}
