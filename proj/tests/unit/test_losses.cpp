#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "wsod/gradcheck.hpp"
#include "wsod/losses.hpp"
#include "wsod/pyramid.hpp"

using namespace wsod;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Tensor as_tensor(const Vector& v) {
  return Tensor({static_cast<std::size_t>(v.size())}, std::vector<double>(v.data(), v.data() + v.size()));
}

Vector as_vector(const Tensor& t) {
  return Eigen::Map<const Vector>(t.data(), static_cast<Eigen::Index>(t.size()));
}

BitVector random_bits(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  BitVector b(n);
  for (auto& x : b) x = rng() % 2;
  b[rng() % n] = 1;
  return b;
}

}  // namespace

TEST_SUITE("cosine loss") {
  TEST_CASE("closed-form values") {
    CHECK(std::abs(cosine_loss(vec({1, 2, 3}), vec({1, 2, 3})).value) < 1e-15);
    CHECK(std::abs(cosine_loss(vec({1, 0}), vec({0, 1})).value - 1.0) < 1e-15);
    CHECK(std::abs(cosine_loss(vec({1, 0}), vec({1, 1})).value - (1.0 - 1.0 / std::sqrt(2.0))) < 1e-15);
    CHECK(std::abs(cosine_loss(vec({1, 0}), vec({-1, 0})).value - 2.0) < 1e-15);
  }

  TEST_CASE("scale invariance") {
    const Vector a = testing::random_vector(6, 1), b = testing::random_vector(6, 2);
    CHECK(std::abs(cosine_loss(a, b).value - cosine_loss(7.5 * a, b).value) < 1e-14);
  }

  TEST_CASE("degenerate direction and length mismatch") {
    CHECK_THROWS_WITH_AS(cosine_loss(Vector::Zero(3), vec({1, 0, 0})), "cosine_loss: degenerate direction",
                         std::domain_error);
    CHECK_THROWS_AS(cosine_loss(vec({1, 0}), vec({1, 0, 0})), std::invalid_argument);
  }

  TEST_CASE("gradient check at random points") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Vector y = testing::random_vector(10, seed + 50);
      const DifferentiableFunction f = [&](const Tensor& t) {
        const LossOutput o = cosine_loss(as_vector(t), y);
        return ValueAndGradient{o.value, as_tensor(o.gradient)};
      };
      CHECK(check_gradient(f, as_tensor(testing::random_vector(10, seed)), 1e-6).max_relative_error < 1e-4);
    }
  }
}

TEST_SUITE("logistic loss") {
  TEST_CASE("values and saturation") {
    CHECK(std::abs(binary_logistic_loss(vec({0}), {1}).value - std::log(2.0)) < 1e-15);
    const LossOutput big = binary_logistic_loss(vec({100, -100}), {1, 0});
    CHECK(big.value < 1e-40);
    CHECK(std::isfinite(big.value));
    const LossOutput wrong = binary_logistic_loss(vec({-800}), {1});
    CHECK(std::abs(wrong.value - 800.0) < 1e-9);
    CHECK(std::abs(wrong.gradient(0) + 1.0) < 1e-15);
  }

  TEST_CASE("mean over entries") {
    const LossOutput o = binary_logistic_loss(vec({0, 0, 0, 0}), {1, 0, 1, 0});
    CHECK(std::abs(o.value - std::log(2.0)) < 1e-15);
    CHECK(o.gradient(0) == -0.125);
    CHECK(o.gradient(1) == 0.125);
  }

  TEST_CASE("gradient check on random 20-dim inputs") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const BitVector t = random_bits(20, seed);
      const DifferentiableFunction f = [&](const Tensor& s) {
        const LossOutput o = binary_logistic_loss(as_vector(s), t);
        return ValueAndGradient{o.value, as_tensor(o.gradient)};
      };
      CHECK(check_gradient(f, as_tensor(testing::random_vector(20, seed, -4, 4)), 1e-6).max_relative_error <
            1e-4);
    }
  }

  TEST_CASE("length mismatch") {
    CHECK_THROWS_AS(binary_logistic_loss(vec({0, 1}), {1}), std::invalid_argument);
  }
}

TEST_SUITE("embedded cosine loss") {
  TEST_CASE("identity embedding equals the plain cosine loss") {
    const Vector s = testing::random_vector(5, 3);
    const BitVector b{1, 0, 1, 1, 0};
    const auto e = embedded_cosine_loss(s, b, Matrix::Identity(5, 5));
    REQUIRE(e.has_value());
    const LossOutput plain = cosine_loss(s, to_real(b));
    CHECK(std::abs(e->value - plain.value) < 1e-15);
    CHECK((e->gradient - plain.gradient).cwiseAbs().maxCoeff() < 1e-15);
  }

  TEST_CASE("scores equal to the labels give zero loss for any transform") {
    const BitVector b{0, 1, 1, 0};
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Matrix e = Eigen::Map<const Matrix>(testing::random_tensor({4, 4}, seed).data(), 4, 4);
      const auto l = embedded_cosine_loss(to_real(b), b, e);
      REQUIRE(l.has_value());
      CHECK(l->value < 1e-14);
    }
  }

  TEST_CASE("all-zero labels are skipped") {
    CHECK_FALSE(embedded_cosine_loss(vec({1, 2}), {0, 0}, Matrix::Identity(2, 2)).has_value());
  }

  TEST_CASE("labels the embedding maps to zero are skipped") {
    Matrix e = Matrix::Identity(3, 3);
    e(1, 1) = 0.0;
    CHECK_FALSE(embedded_cosine_loss(vec({1, 2, 3}), {0, 1, 0}, e).has_value());
    CHECK(embedded_cosine_loss(vec({1, 2, 3}), {1, 1, 0}, e).has_value());
  }

  TEST_CASE("dimension checks") {
    CHECK_THROWS_AS(embedded_cosine_loss(vec({1, 2}), {1, 0}, Matrix::Identity(3, 3)), std::invalid_argument);
    CHECK_THROWS_AS(embedded_cosine_loss(vec({1, 2}), {1, 0}, Matrix::Identity(2, 3)), std::invalid_argument);
  }

  TEST_CASE("gradient check through a random full-rank transform") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Matrix e = Eigen::Map<const Matrix>(testing::random_tensor({6, 6}, seed + 7).data(), 6, 6) +
                       2.0 * Matrix::Identity(6, 6);
      const BitVector b = random_bits(6, seed);
      const DifferentiableFunction f = [&](const Tensor& s) {
        const auto o = embedded_cosine_loss(as_vector(s), b, e);
        return ValueAndGradient{o->value, as_tensor(o->gradient)};
      };
      CHECK(check_gradient(f, as_tensor(testing::random_vector(6, seed)), 1e-6).max_relative_error < 1e-4);
    }
  }

  TEST_CASE("embedding model overload uses the stored transform") {
    Matrix a = Matrix::Identity(3, 3);
    a(0, 2) = a(2, 0) = 0.4;
    const EmbeddingModel m = fit_embedding(a);
    const Vector s = testing::random_vector(3, 9);
    const BitVector b{1, 0, 0};
    CHECK(embedded_cosine_loss(s, b, m)->value == embedded_cosine_loss(s, b, m.transform)->value);
  }
}
