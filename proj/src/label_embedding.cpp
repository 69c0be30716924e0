#include "wsod/label_embedding.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "wsod/text_format.hpp"

namespace wsod {

CooccurrenceTable::CooccurrenceTable(std::size_t class_dim, std::vector<std::int64_t> joint_counts,
                                     std::int64_t unit_count)
    : class_dim_(class_dim), joint_(std::move(joint_counts)), unit_count_(unit_count) {
  if (joint_.size() != class_dim_ * class_dim_) {
    throw std::invalid_argument("cooccurrence table: expected " +
                                std::to_string(class_dim_ * class_dim_) + " counts");
  }
  if (unit_count_ < 1) throw std::invalid_argument("cooccurrence table: unit_count must be >= 1");
  for (std::size_t i = 0; i < class_dim_; ++i) {
    for (std::size_t j = 0; j < class_dim_; ++j) {
      const auto v = joint(i, j);
      if (v < 0) throw std::invalid_argument("cooccurrence table: negative count");
      if (v != joint(j, i)) throw std::invalid_argument("cooccurrence table: not symmetric");
      if (v > std::min(joint(i, i), joint(j, j)) || joint(i, i) > unit_count_) {
        throw std::invalid_argument("cooccurrence table: joint count exceeds marginal");
      }
    }
  }
}

CooccurrenceTable count_cooccurrences(std::span<const BitVector> label_vectors) {
  if (label_vectors.empty()) throw std::invalid_argument("no labeled units");
  const std::size_t dim = label_vectors.front().size();
  std::vector<std::int64_t> joint(dim * dim, 0);
  std::vector<std::size_t> active;
  active.reserve(dim);
  for (const BitVector& v : label_vectors) {
    if (v.size() != dim) {
      throw std::invalid_argument("count_cooccurrences: label vector of length " +
                                  std::to_string(v.size()) + ", expected " + std::to_string(dim));
    }
    active.clear();
    for (std::size_t i = 0; i < dim; ++i) {
      if (v[i] > 1) throw std::invalid_argument("count_cooccurrences: label values must be 0/1");
      if (v[i]) active.push_back(i);
    }
    for (std::size_t a : active)
      for (std::size_t b : active) ++joint[a * dim + b];
  }
  return CooccurrenceTable(dim, std::move(joint), static_cast<std::int64_t>(label_vectors.size()));
}

PmiMatrix compute_pmi(const CooccurrenceTable& table) {
  const auto n = static_cast<Eigen::Index>(table.class_dim());
  const double m = static_cast<double>(table.unit_count());
  PmiMatrix pmi{Matrix::Zero(n, n), decltype(PmiMatrix::defined)::Constant(n, n, false)};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto joint = table.joint(i, j);
      const auto mi = table.marginal(i);
      const auto mj = table.marginal(j);
      if (joint == 0 || mi == 0 || mj == 0) continue;
      // p(i,j) / (p(i) p(j)) = joint * M / (mi * mj)
      pmi.values(i, j) = std::log(static_cast<double>(joint) * m /
                                  (static_cast<double>(mi) * static_cast<double>(mj)));
      pmi.defined(i, j) = true;
    }
  }
  return pmi;
}

Matrix compute_ppmi(const PmiMatrix& pmi) {
  const auto n = pmi.values.rows();
  Matrix out = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (pmi.defined(i, j)) out(i, j) = std::max(0.0, pmi.values(i, j));
  return out;
}

namespace {

void check_symmetric(const Matrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() < 1) {
    throw std::invalid_argument(std::string(what) + ": expected a non-empty square matrix");
  }
  if (!m.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite entry");
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10) {
    throw std::invalid_argument(std::string(what) + ": matrix not symmetric (max asymmetry " +
                                std::to_string(asym) + ")");
  }
}

struct SortedEigen {
  Vector values;  // descending, unclamped
  Matrix vectors;
};

SortedEigen sorted_eigen(const Matrix& symmetric) {
  const Matrix s = 0.5 * (symmetric + symmetric.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(s);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("eigendecomposition did not converge");
  }
  const auto n = s.rows();
  SortedEigen out{Vector(n), Matrix(n, n)};
  // Eigen returns ascending order.
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values(k) = solver.eigenvalues()(n - 1 - k);
    out.vectors.col(k) = solver.eigenvectors().col(n - 1 - k);
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index arg = 0;
    for (Eigen::Index i = 1; i < n; ++i) {
      if (std::abs(out.vectors(i, k)) > std::abs(out.vectors(arg, k))) arg = i;
    }
    if (out.vectors(arg, k) < 0.0) out.vectors.col(k) *= -1.0;
  }
  return out;
}

}  // namespace

Matrix clamp_psd(const Matrix& symmetric) {
  check_symmetric(symmetric, "clamp_psd");
  const SortedEigen e = sorted_eigen(symmetric);
  const Vector clamped = e.values.cwiseMax(0.0);
  return e.vectors * clamped.asDiagonal() * e.vectors.transpose();
}

EmbeddingModel fit_embedding(const Matrix& ppmi) {
  check_symmetric(ppmi, "fit_embedding");
  const auto n = ppmi.rows();
  const SortedEigen e = sorted_eigen(ppmi);

  EmbeddingModel model;
  model.ppmi = ppmi;
  model.eigenvectors = e.vectors;
  model.eigenvalues = Vector(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double lambda = e.values(k);
    if (lambda < 0.0) model.clamped_mass += -lambda;
    model.eigenvalues(k) = std::max(0.0, lambda);
  }

  const Vector root = model.eigenvalues.cwiseSqrt();
  model.transform = e.vectors * root.asDiagonal();

  // pinv(U sqrt(S)) = sqrt(S)^+ U^T. Eigenvalues at round-off level relative
  // to the largest are treated as zero.
  const double lambda_max = n > 0 ? model.eigenvalues(0) : 0.0;
  const double tol = static_cast<double>(n) * std::numeric_limits<double>::epsilon() * lambda_max;
  Vector inv_root = Vector::Zero(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (model.eigenvalues(k) > tol && model.eigenvalues(k) > 0.0) inv_root(k) = 1.0 / root(k);
  }
  model.transform_pinv = inv_root.asDiagonal() * e.vectors.transpose();
  return model;
}

EmbeddingModel fit_embedding_from_labels(std::span<const BitVector> label_vectors) {
  return fit_embedding(compute_ppmi(compute_pmi(count_cooccurrences(label_vectors))));
}

Vector project(const EmbeddingModel& model, const Vector& x) {
  if (static_cast<std::size_t>(x.size()) != model.class_dim()) {
    throw std::invalid_argument("project: vector length " + std::to_string(x.size()) +
                                " does not match embedding dim " +
                                std::to_string(model.class_dim()));
  }
  return model.transform * x;
}

Vector backproject(const EmbeddingModel& model, const Vector& z) {
  if (static_cast<std::size_t>(z.size()) != model.class_dim()) {
    throw std::invalid_argument("backproject: vector length " + std::to_string(z.size()) +
                                " does not match embedding dim " +
                                std::to_string(model.class_dim()));
  }
  return model.transform_pinv * z;
}

void write_embedding(std::ostream& out, const EmbeddingModel& model) {
  const auto n = static_cast<Eigen::Index>(model.class_dim());
  out << "ppmi-embed v1 dim=" << n << '\n';
  auto write_row = [&](auto&& row) {
    for (Eigen::Index j = 0; j < row.size(); ++j) {
      if (j) out << ' ';
      out << format_double(row(j));
    }
    out << '\n';
  };
  for (Eigen::Index i = 0; i < n; ++i) write_row(model.ppmi.row(i));
  write_row(model.eigenvalues);
  for (Eigen::Index i = 0; i < n; ++i) write_row(model.transform.row(i));
}

EmbeddingModel read_embedding(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("embedding: empty input");
  const std::string prefix = "ppmi-embed v1 dim=";
  if (header.rfind(prefix, 0) != 0) {
    throw std::runtime_error("embedding: bad header '" + header + "'");
  }
  const long dim = parse_integer(header.substr(prefix.size()), "embedding dim");
  if (dim < 1) throw std::runtime_error("embedding: dim must be >= 1");
  const auto n = static_cast<Eigen::Index>(dim);

  TokenReader reader(in, "embedding", 2);
  Matrix ppmi(n, n), transform(n, n);
  Vector eigenvalues(n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) ppmi(i, j) = reader.next_double();
  for (Eigen::Index k = 0; k < n; ++k) eigenvalues(k) = reader.next_double();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) transform(i, j) = reader.next_double();
  reader.expect_end();

  EmbeddingModel model = fit_embedding(ppmi);
  const double drift = std::max((model.transform - transform).cwiseAbs().maxCoeff(),
                                (model.eigenvalues - eigenvalues).cwiseAbs().maxCoeff());
  if (drift > 1e-9) {
    throw std::runtime_error("embedding: stored transform inconsistent with stored ppmi (drift " +
                             std::to_string(drift) + ")");
  }
  model.transform = transform;
  model.eigenvalues = eigenvalues;
  return model;
}

void save_embedding(const std::filesystem::path& path, const EmbeddingModel& model) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_embedding(out, model);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

EmbeddingModel load_embedding(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  try {
    return read_embedding(in);
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace wsod
