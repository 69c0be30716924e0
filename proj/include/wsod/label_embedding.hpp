#pragma once

// Label co-occurrence statistics and the positive-PMI embedding.
//
// Pipeline: binary label vectors -> CooccurrenceTable -> PmiMatrix -> PPMI
// matrix -> EmbeddingModel (PPMI = E E^T with E = U sqrt(Sigma)). The model
// projects score and label vectors with E and can map back with pinv(E).

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "wsod/tensor.hpp"

namespace wsod {

/// Joint/marginal counts of labels over M labeled units (images or tiles).
/// joint(i, i) is the number of units where label i is present.
class CooccurrenceTable {
 public:
  CooccurrenceTable(std::size_t class_dim, std::vector<std::int64_t> joint_counts,
                    std::int64_t unit_count);

  std::size_t class_dim() const { return class_dim_; }
  std::int64_t unit_count() const { return unit_count_; }
  std::int64_t joint(std::size_t i, std::size_t j) const { return joint_[i * class_dim_ + j]; }
  std::int64_t marginal(std::size_t i) const { return joint(i, i); }

  friend bool operator==(const CooccurrenceTable&, const CooccurrenceTable&) = default;

 private:
  std::size_t class_dim_;
  std::vector<std::int64_t> joint_;
  std::int64_t unit_count_;
};

/// PMI values plus a mask marking where the logarithm is defined
/// (joint and both marginals non-zero).
struct PmiMatrix {
  Matrix values;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> defined;

  std::size_t class_dim() const { return static_cast<std::size_t>(values.rows()); }
};

struct EmbeddingModel {
  Matrix ppmi;
  /// Descending; negative eigenvalues of the PPMI matrix are clamped to zero.
  Vector eigenvalues;
  /// Orthonormal U; each column's largest-magnitude entry is positive.
  Matrix eigenvectors;
  /// E = U sqrt(Sigma).
  Matrix transform;
  Matrix transform_pinv;
  /// Sum of |lambda| over the eigenvalues that were clamped.
  double clamped_mass = 0.0;

  std::size_t class_dim() const { return static_cast<std::size_t>(ppmi.rows()); }
};

CooccurrenceTable count_cooccurrences(std::span<const BitVector> label_vectors);

/// Natural-log PMI from raw maximum-likelihood estimates.
PmiMatrix compute_pmi(const CooccurrenceTable& table);

/// max(0, PMI) where defined, 0 elsewhere.
Matrix compute_ppmi(const PmiMatrix& pmi);

EmbeddingModel fit_embedding(const Matrix& ppmi);

/// Convenience: counts -> PMI -> PPMI -> fit.
EmbeddingModel fit_embedding_from_labels(std::span<const BitVector> label_vectors);

/// Projection onto the positive-semidefinite cone (negative eigenvalues set
/// to zero). Equals E E^T for the fitted model.
Matrix clamp_psd(const Matrix& symmetric);

Vector project(const EmbeddingModel& model, const Vector& x);
Vector backproject(const EmbeddingModel& model, const Vector& z);

/// Text format:
///   ppmi-embed v1 dim=<n>
///   <n rows of ppmi>
///   <eigenvalues>
///   <n rows of E>
/// with values printed to 17 significant digits.
void write_embedding(std::ostream& out, const EmbeddingModel& model);
EmbeddingModel read_embedding(std::istream& in);
void save_embedding(const std::filesystem::path& path, const EmbeddingModel& model);
EmbeddingModel load_embedding(const std::filesystem::path& path);

}  // namespace wsod
