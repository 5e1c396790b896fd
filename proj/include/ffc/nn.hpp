#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ffc/tensor.hpp"

namespace ffc {

struct LabeledDataset;

enum class Architecture { mlp, convnet };

std::string to_string(Architecture arch);
Architecture parse_architecture(const std::string& name);

/// Network description. `hidden` lists MLP hidden widths (empty gives a single
/// linear layer). For the convnet, `conv_channels` holds the output channels of
/// its two 'same'-padded convolutions, followed by 2x2 average pooling and a
/// dense classifier.
struct ModelSpec {
  Architecture arch = Architecture::mlp;
  std::array<std::size_t, 3> input_shape{1, 32, 32};  // C, H, W
  std::size_t classes = 2;
  std::vector<std::size_t> hidden{256};
  std::vector<std::size_t> conv_channels{4, 8};
  std::size_t kernel = 3;
  std::string activation = "relu";

  std::size_t input_size() const noexcept { return input_shape[0] * input_shape[1] * input_shape[2]; }
  std::size_t parameter_count() const;
  /// Throws UsageError if layer dimensions do not chain from input to classes.
  void validate() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct TrainingMeta {
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  double step_size = 0.0;
  std::size_t batch_size = 0;
  double final_loss = 0.0;
  double final_accuracy = 0.0;
  std::vector<double> loss_history;      // mean training loss per epoch, not persisted
  std::vector<double> accuracy_history;  // training accuracy per epoch, not persisted
};

/// Frozen network: spec plus flat parameter vector.
struct Checkpoint {
  ModelSpec spec;
  std::vector<double> parameters;
  TrainingMeta meta;

  void validate() const;
};

/// Row-major logits [B, K] for a batch [B, C, H, W].
Tensor forward(const Checkpoint& model, const Tensor& batch);

/// Single-sample convenience: logits for one [C, H, W] input.
std::vector<double> forward_one(const Checkpoint& model, std::span<const double> input);
std::size_t predict_one(const Checkpoint& model, std::span<const double> input);

/// Row-wise softmax with max subtraction.
Tensor softmax_confidence(const Tensor& logits);
std::vector<double> softmax(std::span<const double> logits);

/// Mean over the batch of -log softmax(logits)[target].
double cross_entropy(const Tensor& logits, std::span<const std::size_t> targets);

/// d cross_entropy / d input, same shape as the batch. The loss is the batch
/// mean, so each sample's gradient carries a 1/B factor.
Tensor input_gradient(const Checkpoint& model, const Tensor& batch, std::span<const std::size_t> targets);

/// Loss and input gradient for a single sample (B = 1).
struct LossGradient {
  double loss = 0.0;
  std::vector<double> gradient;
};
LossGradient loss_gradient_one(const Checkpoint& model, std::span<const double> input, std::size_t target);

/// d logit[target] / d input for a single sample.
std::vector<double> logit_gradient_one(const Checkpoint& model, std::span<const double> input, std::size_t target);

/// d cross_entropy / d parameters, used by training.
std::vector<double> parameter_gradient(const Checkpoint& model, const Tensor& batch,
                                       std::span<const std::size_t> targets);

/// He-uniform weights, zero biases, drawn from a seeded generator.
Checkpoint initialize(const ModelSpec& spec, std::uint64_t seed);

struct TrainOptions {
  std::uint64_t seed = 0;
  std::size_t epochs = 30;
  double step_size = 0.05;
  std::size_t batch_size = 16;
};

/// Plain minibatch SGD. Deterministic for a fixed seed; throws NumericalError on
/// a non-finite loss.
Checkpoint train(const ModelSpec& spec, const LabeledDataset& data, const TrainOptions& options);

double accuracy(const Checkpoint& model, const LabeledDataset& data);

/// FNV-1a over the raw parameter bytes; used to check that evaluation never
/// mutates a checkpoint.
std::uint64_t parameter_hash(const Checkpoint& model);

}  // namespace ffc
