#include "wsod/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "wsod/text_format.hpp"

namespace wsod {

std::string to_string(LossMode mode) {
  switch (mode) {
    case LossMode::CosinePpmi:
      return "cosine-ppmi";
    case LossMode::BinaryLogistic:
      return "logistic";
  }
  return "unknown";
}

TrainingConfig TrainingConfig::paper_schedule() {
  TrainingConfig c;
  c.batch_size = 256;
  c.iterations = 2000;
  return c;
}

void TrainingConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("training: batch size must be >= 1");
  if (iterations < 0) throw std::invalid_argument("training: iterations must be >= 0");
  if (warmup_iters < 0 || warmup_iters > iterations) {
    throw std::invalid_argument("training: warmup iterations must be in [0, iterations]");
  }
  if (!(warmup_lr > 0) || !(base_lr > 0)) {
    throw std::invalid_argument("training: learning rates must be positive");
  }
  if (!(momentum >= 0 && momentum < 1)) {
    throw std::invalid_argument("training: momentum must be in [0, 1)");
  }
  if (pyramid_levels.empty() || pyramid_levels.front() != 1) {
    throw std::invalid_argument("training: pyramid levels must start with 1");
  }
}

double TrainingConfig::learning_rate(int iteration) const {
  return iteration < warmup_iters ? warmup_lr : base_lr;
}

std::string format_iteration(const IterationRecord& record) {
  return "iter=" + std::to_string(record.iteration) + " lr=" + format_double(record.learning_rate) +
         " loss=" + format_double(record.loss);
}

PyramidLabelVector encode_sample_labels(const Sample& sample, const PyramidSpec& spec) {
  PyramidLabelVector labels = encode_image_labels(sample.classes(), spec);
  const std::vector<LabeledPoint> points = sample.visible_points();
  const PyramidLabelVector tiles = encode_point_labels(points, sample.size(), spec);
  // Image-level bits come from every instance, even when its point was
  // augmented out of frame; tile bits only from visible points.
  for (std::size_t i = 0; i < labels.bits.size(); ++i) labels.bits[i] |= tiles.bits[i];
  return labels;
}

EmbeddingModel fit_training_embedding(std::span<const Sample> samples, const PyramidSpec& spec) {
  std::vector<BitVector> vectors;
  vectors.reserve(samples.size());
  for (const Sample& s : samples) vectors.push_back(encode_sample_labels(s, spec).bits);
  return fit_embedding_from_labels(vectors);
}

namespace {

std::optional<SampleLoss> loss_with_transform(const Network& net, const Sample& sample,
                                              const PyramidSpec& spec, LossMode mode,
                                              const Matrix* transform) {
  const BitVector labels = encode_sample_labels(sample, spec).bits;
  const ForwardTrace trace = forward_with_trace(net, sample.image);
  const Vector pooled = spp_average_pool(trace.cam(), spec);

  std::optional<LossOutput> loss;
  if (mode == LossMode::CosinePpmi) {
    if (transform == nullptr) throw std::invalid_argument("cosine loss needs an embedding");
    loss = embedded_cosine_loss(pooled, labels, *transform);
    if (!loss) return std::nullopt;
  } else {
    loss = binary_logistic_loss(pooled, labels);
  }
  const Tensor grad_cam = spp_average_pool_backward(loss->gradient, trace.cam().shape(), spec);
  return SampleLoss{loss->value, backward(net, trace, grad_cam).params};
}

}  // namespace

std::optional<SampleLoss> sample_loss(const Network& net, const Sample& sample,
                                      const PyramidSpec& spec, LossMode mode,
                                      const EmbeddingModel* embedding) {
  return loss_with_transform(net, sample, spec, mode,
                             embedding != nullptr ? &embedding->transform : nullptr);
}

Trainer::Trainer(Network& net, TrainingConfig config, AugmentationConfig augmentation,
                 std::optional<EmbeddingModel> embedding)
    : net_(net),
      config_(std::move(config)),
      augmentation_(augmentation),
      spec_(config_.pyramid_levels, net.config().class_count),
      embedding_(std::move(embedding)) {
  config_.validate();
  augmentation_.validate();
  if (config_.loss_mode == LossMode::CosinePpmi) {
    if (!embedding_) throw std::invalid_argument("cosine-ppmi training requires an embedding");
    if (embedding_->class_dim() != spec_.total_dim()) {
      throw std::invalid_argument("embedding dimension " + std::to_string(embedding_->class_dim()) +
                                  " does not match label dimension " +
                                  std::to_string(spec_.total_dim()));
    }
    ppmi_layer_.emplace(embedding_->transform);
  }
}

std::vector<IterationRecord> Trainer::run(std::span<const Sample> samples,
                                          const IterationCallback& on_iteration) {
  if (samples.empty()) throw std::invalid_argument("training: no samples");
  const auto batch = static_cast<std::size_t>(config_.batch_size);
  const Matrix* transform = ppmi_layer_ ? &ppmi_layer_->weights() : nullptr;

  std::mt19937_64 order_rng(config_.seed);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), order_rng);
  std::size_t cursor = 0;

  std::vector<double> params = flatten_parameters(net_);
  std::vector<double> velocity(params.size(), 0.0);
  std::vector<IterationRecord> history;
  history.reserve(static_cast<std::size_t>(config_.iterations));

  const auto seed_lo = static_cast<std::uint32_t>(config_.seed);
  const auto seed_hi = static_cast<std::uint32_t>(config_.seed >> 32);

  for (int it = 0; it < config_.iterations; ++it) {
    std::vector<std::size_t> picks(batch);
    for (std::size_t& p : picks) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), order_rng);
        cursor = 0;
      }
      p = order[cursor++];
    }

    std::vector<std::optional<SampleLoss>> results(batch);
    const Network& net = net_;
    std::vector<std::exception_ptr> errors(batch);
    // Each slot has its own RNG stream, so results do not depend on the
    // thread count.
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t slot = 0; slot < static_cast<std::ptrdiff_t>(batch); ++slot) {
      try {
        std::seed_seq seq{seed_lo, seed_hi, static_cast<std::uint32_t>(it),
                          static_cast<std::uint32_t>(slot)};
        std::mt19937_64 rng(seq);
        const Sample augmented =
            augment(samples[picks[static_cast<std::size_t>(slot)]], augmentation_, rng);
        results[static_cast<std::size_t>(slot)] =
            loss_with_transform(net, augmented, spec_, config_.loss_mode, transform);
      } catch (...) {
        errors[static_cast<std::size_t>(slot)] = std::current_exception();
      }
    }
    for (const std::exception_ptr& e : errors)
      if (e) std::rethrow_exception(e);

    ParameterGradients total = ParameterGradients::zeros_like(net_);
    double loss_sum = 0.0;
    std::size_t used = 0;
    for (const auto& r : results) {
      if (!r) continue;
      total += r->gradients;
      loss_sum += r->loss;
      ++used;
    }

    IterationRecord record{it, config_.learning_rate(it), 0.0};
    if (used > 0) {
      total *= 1.0 / static_cast<double>(used);
      record.loss = loss_sum / static_cast<double>(used);
      const std::vector<double> grad = flatten_gradients(total);
      for (std::size_t i = 0; i < params.size(); ++i) {
        velocity[i] = config_.momentum * velocity[i] - record.learning_rate * grad[i];
        params[i] += velocity[i];
      }
      assign_parameters(net_, params);
    }
    history.push_back(record);
    if (on_iteration) on_iteration(record);
  }
  return history;
}

std::vector<IterationRecord> train(Network& net, std::span<const Sample> samples,
                                   const TrainingConfig& config,
                                   const AugmentationConfig& augmentation,
                                   std::optional<EmbeddingModel> embedding,
                                   const Trainer::IterationCallback& on_iteration) {
  Trainer trainer(net, config, augmentation, std::move(embedding));
  return trainer.run(samples, on_iteration);
}

}  // namespace wsod
