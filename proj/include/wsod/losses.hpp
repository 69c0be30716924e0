#pragma once

#include <optional>

#include "wsod/label_embedding.hpp"
#include "wsod/tensor.hpp"

namespace wsod {

struct LossOutput {
  double value = 0.0;
  /// Gradient with respect to the prediction argument.
  Vector gradient;
};

inline constexpr double kCosineNormEpsilon = 1e-12;

/// 1 - <y_hat, y> / (|y_hat| |y|). Throws std::domain_error ("degenerate
/// direction") when either norm is at most kCosineNormEpsilon.
LossOutput cosine_loss(const Vector& y_hat, const Vector& y);

/// Mean sigmoid cross-entropy over the entries, in the overflow-free form
/// max(s,0) - s t + log(1 + exp(-|s|)). Gradient entry (sigmoid(s) - t) / n.
LossOutput binary_logistic_loss(const Vector& scores, const BitVector& targets);

/// Cosine loss between E * pooled_scores and E * labels. The gradient is
/// taken with respect to pooled_scores, i.e. the embedding-space gradient
/// pulled back through the fixed layer with E^T. Returns nullopt for an
/// all-zero label vector or one the embedding maps to zero (such samples are
/// excluded from cosine batches).
std::optional<LossOutput> embedded_cosine_loss(const Vector& pooled_scores, const BitVector& labels,
                                               const EmbeddingModel& model);

/// Same, with the projection given directly as the fixed layer's weights.
std::optional<LossOutput> embedded_cosine_loss(const Vector& pooled_scores, const BitVector& labels,
                                               const Matrix& transform);

}  // namespace wsod
