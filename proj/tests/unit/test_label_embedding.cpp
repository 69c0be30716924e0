#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "oracles.hpp"
#include "wsod/label_embedding.hpp"

using namespace wsod;

namespace {

std::vector<BitVector> random_labels(std::size_t dim, std::size_t units, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> prior(dim);
  for (double& p : prior) p = 0.05 + 0.6 * u(rng);
  std::vector<BitVector> out(units, BitVector(dim, 0));
  for (auto& v : out) {
    // A shared latent switch correlates the first half of the labels.
    const bool latent = u(rng) < 0.5;
    for (std::size_t i = 0; i < dim; ++i) {
      const double p = (i < dim / 2 && latent) ? std::min(1.0, prior[i] * 1.6) : prior[i];
      v[i] = u(rng) < p ? 1 : 0;
    }
  }
  return out;
}

oracle::Mat to_mat(const Matrix& m) {
  oracle::Mat out = oracle::zeros(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

double max_abs_diff(const oracle::Mat& a, const oracle::Mat& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) d = std::max(d, std::abs(a[i][j] - b[i][j]));
  return d;
}

}  // namespace

TEST_SUITE("count_cooccurrences") {
  TEST_CASE("direct enumeration") {
    const std::vector<BitVector> v{{1, 0}, {1, 1}, {1, 1}, {0, 0}};
    const CooccurrenceTable t = count_cooccurrences(v);
    CHECK(t.unit_count() == 4);
    CHECK(t.joint(0, 0) == 3);
    CHECK(t.joint(0, 1) == 2);
    CHECK(t.joint(1, 0) == 2);
    CHECK(t.joint(1, 1) == 2);
  }

  TEST_CASE("single all-ones vector") {
    const std::vector<BitVector> v{{1, 1, 1}};
    const CooccurrenceTable t = count_cooccurrences(v);
    CHECK(t.unit_count() == 1);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) CHECK(t.joint(i, j) == 1);
  }

  TEST_CASE("no occurrences") {
    const std::vector<BitVector> v{{0, 0}, {0, 0}};
    const CooccurrenceTable t = count_cooccurrences(v);
    CHECK(t.unit_count() == 2);
    CHECK(t.joint(0, 0) == 0);
    CHECK(t.joint(0, 1) == 0);
  }

  TEST_CASE("errors") {
    CHECK_THROWS_WITH(count_cooccurrences(std::vector<BitVector>{}), "no labeled units");
    CHECK_THROWS_AS(count_cooccurrences(std::vector<BitVector>{{1, 0}, {1}}), std::invalid_argument);
    CHECK_THROWS_AS(CooccurrenceTable(2, {1, 2, 2, 1}, 3), std::invalid_argument);  // joint > marginal
    CHECK_THROWS_AS(CooccurrenceTable(2, {1, 0, 1, 1}, 3), std::invalid_argument);  // asymmetric
  }
}

TEST_SUITE("pmi") {
  TEST_CASE("hand-computed fixture") {
    const std::vector<BitVector> v{{1, 0}, {1, 1}, {1, 1}, {0, 1}};
    const PmiMatrix pmi = compute_pmi(count_cooccurrences(v));
    // p(A) = p(B) = 3/4, p(A, B) = 2/4.
    const double want = std::log((2.0 / 4.0) / ((3.0 / 4.0) * (3.0 / 4.0)));
    CHECK(std::abs(pmi.values(0, 1) - want) <= 1e-12);
    CHECK(std::abs(pmi.values(0, 1) - std::log(8.0 / 9.0)) <= 1e-12);
    CHECK(pmi.defined(0, 1));
    const Matrix ppmi = compute_ppmi(pmi);
    CHECK(ppmi(0, 1) == 0.0);
    CHECK(std::abs(ppmi(0, 0) - std::log(4.0 / 3.0)) <= 1e-12);
  }

  TEST_CASE("certain event has zero self-PMI") {
    const std::vector<BitVector> v{{1, 0}, {1, 1}};
    const PmiMatrix pmi = compute_pmi(count_cooccurrences(v));
    CHECK(pmi.values(0, 0) == 0.0);
  }

  TEST_CASE("never co-occurring classes are undefined and map to zero") {
    const std::vector<BitVector> v{{1, 0}, {0, 1}, {1, 0}};
    const PmiMatrix pmi = compute_pmi(count_cooccurrences(v));
    CHECK_FALSE(pmi.defined(0, 1));
    CHECK_FALSE(pmi.defined(1, 0));
    CHECK(compute_ppmi(pmi)(0, 1) == 0.0);
  }

  TEST_CASE("ppmi keeps positive values") {
    // p(A) = p(B) = 1/2, p(A, B) = 1/2 -> PMI = log 2.
    const std::vector<BitVector> v{{1, 1}, {0, 0}};
    const Matrix ppmi = compute_ppmi(compute_pmi(count_cooccurrences(v)));
    CHECK(std::abs(ppmi(0, 1) - std::log(2.0)) <= 1e-15);
  }

  TEST_CASE("perfect correlation identity") {
    const std::vector<BitVector> v{{1, 1}, {1, 1}, {0, 0}, {0, 0}, {0, 0}};
    const PmiMatrix pmi = compute_pmi(count_cooccurrences(v));
    CHECK(std::abs(pmi.values(0, 1) + std::log(2.0 / 5.0)) <= 1e-12);
  }

  TEST_CASE("symmetry, diagonal bound and permutation equivariance") {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
      const auto labels = random_labels(5, 60, seed);
      const PmiMatrix pmi = compute_pmi(count_cooccurrences(labels));
      const Matrix ppmi = compute_ppmi(pmi);
      CHECK(ppmi == ppmi.transpose());
      CHECK((ppmi.array() >= 0.0).all());
      const CooccurrenceTable t = count_cooccurrences(labels);
      for (std::size_t i = 0; i < 5; ++i) {
        if (!pmi.defined(i, i)) continue;
        const double p = static_cast<double>(t.marginal(i)) / 60.0;
        CHECK(std::abs(pmi.values(i, i) + std::log(p)) <= 1e-12);
        CHECK(pmi.values(i, i) >= 0.0);
        CHECK((pmi.values(i, i) == 0.0) == (t.marginal(i) == 60));
        for (std::size_t j = 0; j < 5; ++j) {
          CHECK(pmi.defined(i, j) == pmi.defined(j, i));
          if (pmi.defined(i, j)) CHECK(pmi.values(i, j) == pmi.values(j, i));
        }
      }

      std::vector<std::size_t> perm{3, 0, 4, 1, 2};
      std::vector<BitVector> permuted = labels;
      for (std::size_t u = 0; u < labels.size(); ++u)
        for (std::size_t i = 0; i < 5; ++i) permuted[u][i] = labels[u][perm[i]];
      const Matrix ppmi_p = compute_ppmi(compute_pmi(count_cooccurrences(permuted)));
      for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) CHECK(ppmi_p(i, j) == ppmi(perm[i], perm[j]));
    }
  }
}

TEST_SUITE("fit_embedding") {
  TEST_CASE("diagonal case") {
    Matrix ppmi = Matrix::Zero(2, 2);
    ppmi(0, 0) = 4.0;
    ppmi(1, 1) = 1.0;
    const EmbeddingModel m = fit_embedding(ppmi);
    CHECK(m.eigenvalues(0) == doctest::Approx(4.0));
    CHECK(m.eigenvalues(1) == doctest::Approx(1.0));
    CHECK(std::abs(std::abs(m.transform(0, 0)) - 2.0) < 1e-12);
    CHECK(std::abs(std::abs(m.transform(1, 1)) - 1.0) < 1e-12);
    CHECK((m.transform * m.transform.transpose() - ppmi).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(m.clamped_mass == 0.0);
  }

  TEST_CASE("zero matrix") {
    const EmbeddingModel m = fit_embedding(Matrix::Zero(3, 3));
    CHECK(m.transform.cwiseAbs().maxCoeff() == 0.0);
    CHECK(backproject(m, testing::random_vector(3, 1)).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("indefinite input is clamped and the clamped mass recorded") {
    Matrix a(2, 2);
    a << 0.0, 1.0, 1.0, 0.0;  // eigenvalues +1 and -1
    const EmbeddingModel m = fit_embedding(a);
    CHECK(m.clamped_mass == doctest::Approx(1.0));
    CHECK(m.eigenvalues(1) == 0.0);
    Matrix want(2, 2);
    want << 0.5, 0.5, 0.5, 0.5;
    CHECK((m.transform * m.transform.transpose() - want).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("asymmetric input is rejected") {
    Matrix a = Matrix::Identity(2, 2);
    a(0, 1) = 1e-6;
    CHECK_THROWS_AS(fit_embedding(a), std::invalid_argument);
  }

  TEST_CASE("reconstruction against an independent Jacobi PSD projection") {
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
      const std::size_t dim = 2 + seed * 2;
      const auto labels = random_labels(dim, 40 + 7 * seed, 1000 + seed);
      const Matrix ppmi = compute_ppmi(compute_pmi(count_cooccurrences(labels)));
      const EmbeddingModel m = fit_embedding(ppmi);
      const oracle::Mat e = to_mat(m.transform);
      const oracle::Mat eet = oracle::matmul(e, oracle::transpose(e));
      CHECK(max_abs_diff(eet, oracle::clamp_psd(to_mat(ppmi))) <= 1e-8);

      // U is orthonormal, eigenvalues descending and non-negative.
      const oracle::Mat u = to_mat(m.eigenvectors);
      const oracle::Mat utu = oracle::matmul(oracle::transpose(u), u);
      for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j < dim; ++j) CHECK(std::abs(utu[i][j] - (i == j ? 1.0 : 0.0)) <= 1e-8);
      for (Eigen::Index i = 0; i < m.eigenvalues.size(); ++i) {
        CHECK(m.eigenvalues(i) >= 0.0);
        if (i > 0) CHECK(m.eigenvalues(i - 1) >= m.eigenvalues(i));
        // Sign convention: the largest-magnitude entry of each column is positive.
        Eigen::Index arg = 0;
        m.eigenvectors.col(i).cwiseAbs().maxCoeff(&arg);
        CHECK(m.eigenvectors(arg, i) > 0.0);
      }
    }
  }
}

TEST_SUITE("projection") {
  TEST_CASE("identity and diagonal transforms") {
    const EmbeddingModel id = fit_embedding(Matrix::Identity(3, 3));
    const Vector x = testing::random_vector(3, 2);
    // Degenerate spectrum: any orthonormal basis is valid, so only the norm is fixed.
    CHECK(std::abs(project(id, x).norm() - x.norm()) < 1e-12);
    Matrix d = Matrix::Zero(2, 2);
    d(0, 0) = 4.0;
    d(1, 1) = 1.0;
    const Vector y = project(fit_embedding(d), Vector::Ones(2));
    CHECK(std::abs(std::abs(y(0)) - 2.0) < 1e-12);
    CHECK(std::abs(std::abs(y(1)) - 1.0) < 1e-12);
    CHECK_THROWS_AS(project(id, Vector::Ones(2)), std::invalid_argument);
    CHECK_THROWS_AS(backproject(id, Vector::Ones(4)), std::invalid_argument);
  }

  TEST_CASE("project equals a naive mat-vec") {
    const auto labels = random_labels(6, 80, 7);
    const EmbeddingModel m = fit_embedding_from_labels(labels);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Vector x = testing::random_vector(6, seed);
      const auto want = oracle::matvec(to_mat(m.transform), std::vector<double>(x.data(), x.data() + 6));
      const Vector got = project(m, x);
      for (int i = 0; i < 6; ++i) CHECK(std::abs(got(i) - want[static_cast<std::size_t>(i)]) <= 1e-12);
    }
  }

  TEST_CASE("full-rank round trip") {
    Matrix a = Matrix::Identity(5, 5) * 2.0;
    a(0, 1) = a(1, 0) = 0.5;
    a(2, 4) = a(4, 2) = 0.3;
    const EmbeddingModel m = fit_embedding(a);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const Vector x = testing::random_vector(5, seed);
      CHECK((backproject(m, project(m, x)) - x).cwiseAbs().maxCoeff() <= 1e-8);
    }
  }

  TEST_CASE("rank-deficient transform backprojects onto the row space") {
    Matrix a(3, 3);
    a << 1, 1, 0, 1, 1, 0, 0, 0, 2;  // eigenvalues 2, 2, 0
    const EmbeddingModel m = fit_embedding(a);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Vector x = testing::random_vector(3, seed);
      const Vector z = project(m, x);
      const auto want = oracle::min_norm_least_squares(to_mat(m.transform),
                                                       std::vector<double>(z.data(), z.data() + 3));
      const Vector got = backproject(m, z);
      for (int i = 0; i < 3; ++i) CHECK(std::abs(got(i) - want[static_cast<std::size_t>(i)]) <= 1e-8);
    }
  }
}

TEST_SUITE("embedding file") {
  TEST_CASE("round trip is exact") {
    const EmbeddingModel m = fit_embedding_from_labels(random_labels(5, 50, 3));
    std::stringstream s;
    write_embedding(s, m);
    CHECK(s.str().rfind("ppmi-embed v1 dim=5\n", 0) == 0);
    const EmbeddingModel back = read_embedding(s);
    CHECK(back.ppmi == m.ppmi);
    CHECK(back.transform == m.transform);
    CHECK(back.eigenvalues == m.eigenvalues);
  }

  TEST_CASE("malformed input") {
    std::stringstream bad_header("ppmi-embed v2 dim=2\n");
    CHECK_THROWS(read_embedding(bad_header));
    const EmbeddingModel m = fit_embedding(Matrix::Identity(2, 2));
    std::stringstream s;
    write_embedding(s, m);
    std::string text = s.str();
    std::stringstream cut(text.substr(0, text.size() - 8));
    CHECK_THROWS(read_embedding(cut));
  }
}
