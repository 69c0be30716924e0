#include "wsod/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "wsod/layers.hpp"
#include "wsod/pyramid.hpp"

namespace wsod {

LossOutput cosine_loss(const Vector& y_hat, const Vector& y) {
  if (y_hat.size() != y.size()) {
    throw std::invalid_argument("cosine_loss: length " + std::to_string(y_hat.size()) + " vs " +
                                std::to_string(y.size()));
  }
  const double norm_hat = y_hat.norm();
  const double norm_y = y.norm();
  if (norm_hat <= kCosineNormEpsilon || norm_y <= kCosineNormEpsilon) {
    throw std::domain_error("cosine_loss: degenerate direction");
  }
  const double dot = y_hat.dot(y);
  const double cosine = dot / (norm_hat * norm_y);
  LossOutput out;
  out.value = std::clamp(1.0 - cosine, 0.0, 2.0);
  // d/dy_hat of -cos = -(y / (|y_hat||y|) - dot * y_hat / (|y_hat|^3 |y|))
  out.gradient = -(y / (norm_hat * norm_y) -
                   (dot / (norm_hat * norm_hat * norm_hat * norm_y)) * y_hat);
  return out;
}

LossOutput binary_logistic_loss(const Vector& scores, const BitVector& targets) {
  if (static_cast<std::size_t>(scores.size()) != targets.size()) {
    throw std::invalid_argument("binary_logistic_loss: length mismatch");
  }
  const auto n = scores.size();
  if (n == 0) throw std::invalid_argument("binary_logistic_loss: empty input");
  LossOutput out{0.0, Vector(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = scores(i);
    const double t = targets[static_cast<std::size_t>(i)];
    out.value += std::max(s, 0.0) - s * t + std::log1p(std::exp(-std::abs(s)));
    out.gradient(i) = (sigmoid(s) - t) / static_cast<double>(n);
  }
  out.value /= static_cast<double>(n);
  return out;
}

std::optional<LossOutput> embedded_cosine_loss(const Vector& pooled_scores, const BitVector& labels,
                                               const EmbeddingModel& model) {
  return embedded_cosine_loss(pooled_scores, labels, model.transform);
}

std::optional<LossOutput> embedded_cosine_loss(const Vector& pooled_scores, const BitVector& labels,
                                               const Matrix& transform) {
  if (transform.rows() != transform.cols()) {
    throw std::invalid_argument("embedded_cosine_loss: transform must be square");
  }
  const auto dim = static_cast<std::size_t>(transform.cols());
  if (static_cast<std::size_t>(pooled_scores.size()) != dim || labels.size() != dim) {
    throw std::invalid_argument("embedded_cosine_loss: dims do not match embedding dim " +
                                std::to_string(dim));
  }
  if (std::none_of(labels.begin(), labels.end(), [](std::uint8_t b) { return b != 0; })) {
    return std::nullopt;
  }
  const Vector y = fixed_linear_forward(to_real(labels), transform);
  // The embedding can map a label set to zero (e.g. a class present in every
  // training image has a zero PPMI diagonal); there is no direction to match.
  if (y.norm() <= kCosineNormEpsilon) return std::nullopt;
  const Vector y_hat = fixed_linear_forward(pooled_scores, transform);
  LossOutput embedded = cosine_loss(y_hat, y);
  embedded.gradient = fixed_linear_backward(embedded.gradient, transform);
  return embedded;
}

}  // namespace wsod
