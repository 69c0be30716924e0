#pragma once

// SGD-with-momentum training of the CAM network against pyramid-pooled
// scores, with either the PPMI-embedded cosine loss or the binary logistic
// baseline.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wsod/augment.hpp"
#include "wsod/dataset.hpp"
#include "wsod/label_embedding.hpp"
#include "wsod/layers.hpp"
#include "wsod/losses.hpp"
#include "wsod/network.hpp"
#include "wsod/pyramid.hpp"

namespace wsod {

enum class LossMode { CosinePpmi, BinaryLogistic };

std::string to_string(LossMode mode);

struct TrainingConfig {
  int batch_size = 32;
  int iterations = 3000;
  double warmup_lr = 1e-4;
  int warmup_iters = 600;
  double base_lr = 1e-3;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  LossMode loss_mode = LossMode::CosinePpmi;
  /// Pyramid levels for pooling and labels: {1} for image-level labels,
  /// {1, 2} for 2x2 point labels.
  std::vector<int> pyramid_levels{1};

  /// Batch 256 for 2000 iterations; learning rates are the defaults.
  static TrainingConfig paper_schedule();

  void validate() const;
  double learning_rate(int iteration) const;
};

struct IterationRecord {
  int iteration = 0;
  double learning_rate = 0.0;
  double loss = 0.0;
};

/// `iter=<n> lr=<v> loss=<v>`
std::string format_iteration(const IterationRecord& record);

/// Pyramid label vector of a (possibly augmented) sample: tile bits from the
/// visible points, level-1 bits from every instance.
PyramidLabelVector encode_sample_labels(const Sample& sample, const PyramidSpec& spec);

/// Fits the PPMI embedding on the un-augmented training labels.
EmbeddingModel fit_training_embedding(std::span<const Sample> samples, const PyramidSpec& spec);

struct SampleLoss {
  double loss = 0.0;
  ParameterGradients gradients;
};

/// Loss and parameter gradients for one sample (no augmentation). Returns
/// nullopt for a cosine-mode sample whose label vector is all zero.
std::optional<SampleLoss> sample_loss(const Network& net, const Sample& sample,
                                      const PyramidSpec& spec, LossMode mode,
                                      const EmbeddingModel* embedding);

class Trainer {
 public:
  /// `embedding` is required for LossMode::CosinePpmi and must match the
  /// pyramid label dimension.
  Trainer(Network& net, TrainingConfig config, AugmentationConfig augmentation,
          std::optional<EmbeddingModel> embedding);

  using IterationCallback = std::function<void(const IterationRecord&)>;
  std::vector<IterationRecord> run(std::span<const Sample> samples,
                                   const IterationCallback& on_iteration = {});

  /// The fixed projection layer (absent in logistic mode).
  const FixedLinearLayer* ppmi_layer() const { return ppmi_layer_ ? &*ppmi_layer_ : nullptr; }
  const PyramidSpec& pyramid() const { return spec_; }

 private:
  Network& net_;
  TrainingConfig config_;
  AugmentationConfig augmentation_;
  PyramidSpec spec_;
  std::optional<EmbeddingModel> embedding_;
  std::optional<FixedLinearLayer> ppmi_layer_;
};

std::vector<IterationRecord> train(Network& net, std::span<const Sample> samples,
                                   const TrainingConfig& config,
                                   const AugmentationConfig& augmentation,
                                   std::optional<EmbeddingModel> embedding,
                                   const Trainer::IterationCallback& on_iteration = {});

}  // namespace wsod
