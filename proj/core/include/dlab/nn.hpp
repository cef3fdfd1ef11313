#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "dlab/dataset.hpp"
#include "dlab/matrix.hpp"

namespace dlab {

enum class Activation { ReLU, Identity };

struct DenseLayer {
  Matrix weights;            // out_dim x in_dim
  std::vector<double> bias;  // out_dim
  Activation activation = Activation::Identity;

  std::size_t in_dim() const { return weights.cols(); }
  std::size_t out_dim() const { return weights.rows(); }
};

/// Fully connected network: ReLU on every hidden layer, identity on the
/// final one, whose rows act as per-class templates.
struct NetworkParams {
  std::vector<DenseLayer> layers;
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;

  const DenseLayer& final_layer() const { return layers.back(); }
  /// Width of the representation feeding the final layer; equals input_dim
  /// for a single-layer network.
  std::size_t penultimate_dim() const { return layers.back().in_dim(); }
};

/// Everything forward() computed, kept around for backward().
struct ForwardTrace {
  std::vector<double> input;
  std::vector<std::vector<double>> pre_activations;  // per layer
  std::vector<std::vector<double>> activations;      // per layer

  std::span<const double> logits() const { return activations.back(); }
  /// Activation feeding the final layer; the raw input for one-layer nets.
  std::span<const double> penultimate() const {
    return activations.size() > 1 ? std::span<const double>(
                                        activations[activations.size() - 2])
                                  : std::span<const double>(input);
  }
};

struct LayerGrads {
  Matrix weights;
  std::vector<double> bias;
};
using Gradients = std::vector<LayerGrads>;

struct SgdConfig {
  double learning_rate = 0.01;
  double momentum = 0.0;
  std::size_t epochs = 1;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
  /// At the start of each listed epoch the learning rate is multiplied by
  /// lr_decay_factor (0.1 reproduces the usual decay-by-ten schedule).
  std::vector<std::size_t> lr_decay_epochs;
  double lr_decay_factor = 0.1;
};

/// Weights drawn uniformly from ±1/sqrt(in_dim) per layer, biases zero.
/// dims lists every layer width including input and output; it needs at
/// least two positive entries.
NetworkParams init_network(const std::vector<std::size_t>& dims,
                           std::uint64_t seed);

ForwardTrace forward(const NetworkParams& net, std::span<const double> input);

Gradients zero_gradients(const NetworkParams& net);

/// Backpropagates d(loss)/d(logits) through the trace.
Gradients backward(const NetworkParams& net, const ForwardTrace& trace,
                   std::span<const double> dloss_dlogits);

/// Momentum update: velocity <- momentum * velocity - lr * grad;
/// params += velocity.
void sgd_step(NetworkParams& net, const Gradients& grads, Gradients& velocity,
              const SgdConfig& cfg);

/// Per-sample objective: fills grad_out with d(loss)/d(logits) for the given
/// dataset row and returns the loss value.
using LossFn = std::function<double(
    std::size_t sample, std::span<const double> logits,
    std::span<double> grad_out)>;

/// Shuffled mini-batch SGD; the gradient of a batch is the mean over its
/// samples. Returns the mean training loss per epoch. Throws DivergenceError
/// naming the epoch if a batch loss turns non-finite.
std::vector<double> train(NetworkParams& net, const LabeledDataset& data,
                          const LossFn& loss, const SgdConfig& cfg);

/// Binary checkpoint, bit-exact round trip.
void save_checkpoint(const NetworkParams& net,
                     const std::filesystem::path& path);
NetworkParams load_checkpoint(const std::filesystem::path& path);

}  // namespace dlab
