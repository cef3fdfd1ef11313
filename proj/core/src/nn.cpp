#include "dlab/nn.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "dlab/io.hpp"
#include "dlab/rng.hpp"

namespace dlab {

NetworkParams init_network(const std::vector<std::size_t>& dims,
                           std::uint64_t seed) {
  if (dims.size() < 2) {
    throw DomainError("init_network: need input and output widths, got " +
                      std::to_string(dims.size()) + " entries");
  }
  for (std::size_t d : dims) {
    if (d < 1) {
      throw DomainError("init_network: every layer width must be positive");
    }
  }
  Rng rng(seed);
  NetworkParams net;
  net.input_dim = dims.front();
  net.num_classes = dims.back();
  net.layers.reserve(dims.size() - 1);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    DenseLayer layer;
    layer.weights = Matrix(dims[l + 1], dims[l]);
    layer.bias.assign(dims[l + 1], 0.0);
    layer.activation =
        (l + 2 == dims.size()) ? Activation::Identity : Activation::ReLU;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    for (std::size_t r = 0; r < layer.weights.rows(); ++r) {
      for (std::size_t c = 0; c < layer.weights.cols(); ++c) {
        layer.weights(r, c) = rng.uniform(-scale, scale);
      }
    }
    net.layers.push_back(std::move(layer));
  }
  return net;
}

ForwardTrace forward(const NetworkParams& net, std::span<const double> input) {
  if (input.size() != net.input_dim) {
    throw ShapeError("forward: input has " + std::to_string(input.size()) +
                     " entries, network expects " +
                     std::to_string(net.input_dim));
  }
  ForwardTrace trace;
  trace.input.assign(input.begin(), input.end());
  trace.pre_activations.reserve(net.layers.size());
  trace.activations.reserve(net.layers.size());
  std::span<const double> x = trace.input;
  for (const DenseLayer& layer : net.layers) {
    std::vector<double> z(layer.out_dim());
    for (std::size_t r = 0; r < layer.out_dim(); ++r) {
      z[r] = layer.bias[r] + dot(layer.weights.row(r), x);
    }
    trace.pre_activations.push_back(z);
    if (layer.activation == Activation::ReLU) {
      for (double& v : z) {
        v = v > 0.0 ? v : 0.0;
      }
    }
    trace.activations.push_back(std::move(z));
    x = trace.activations.back();
  }
  return trace;
}

Gradients zero_gradients(const NetworkParams& net) {
  Gradients grads;
  grads.reserve(net.layers.size());
  for (const DenseLayer& layer : net.layers) {
    grads.push_back({Matrix(layer.out_dim(), layer.in_dim()),
                     std::vector<double>(layer.out_dim(), 0.0)});
  }
  return grads;
}

Gradients backward(const NetworkParams& net, const ForwardTrace& trace,
                   std::span<const double> dloss_dlogits) {
  if (trace.activations.size() != net.layers.size()) {
    throw ShapeError("backward: trace does not match network depth");
  }
  if (dloss_dlogits.size() != net.num_classes) {
    throw ShapeError("backward: upstream gradient has wrong width");
  }
  Gradients grads = zero_gradients(net);
  std::vector<double> delta(dloss_dlogits.begin(), dloss_dlogits.end());
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const DenseLayer& layer = net.layers[l];
    const std::span<const double> below =
        l == 0 ? std::span<const double>(trace.input)
               : std::span<const double>(trace.activations[l - 1]);
    for (std::size_t r = 0; r < layer.out_dim(); ++r) {
      grads[l].bias[r] = delta[r];
      for (std::size_t c = 0; c < layer.in_dim(); ++c) {
        grads[l].weights(r, c) = delta[r] * below[c];
      }
    }
    if (l == 0) {
      break;
    }
    std::vector<double> next(layer.in_dim(), 0.0);
    for (std::size_t r = 0; r < layer.out_dim(); ++r) {
      for (std::size_t c = 0; c < layer.in_dim(); ++c) {
        next[c] += layer.weights(r, c) * delta[r];
      }
    }
    if (net.layers[l - 1].activation == Activation::ReLU) {
      const std::vector<double>& z = trace.pre_activations[l - 1];
      for (std::size_t c = 0; c < next.size(); ++c) {
        if (z[c] <= 0.0) {
          next[c] = 0.0;
        }
      }
    }
    delta = std::move(next);
  }
  return grads;
}

void sgd_step(NetworkParams& net, const Gradients& grads, Gradients& velocity,
              const SgdConfig& cfg) {
  if (grads.size() != net.layers.size() || velocity.size() != net.layers.size()) {
    throw ShapeError("sgd_step: gradient or velocity depth mismatch");
  }
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    DenseLayer& layer = net.layers[l];
    if (grads[l].weights.rows() != layer.out_dim() ||
        grads[l].weights.cols() != layer.in_dim() ||
        velocity[l].weights.rows() != layer.out_dim() ||
        velocity[l].weights.cols() != layer.in_dim()) {
      throw ShapeError("sgd_step: layer " + std::to_string(l) +
                       " shape mismatch");
    }
    double* w = layer.weights.data();
    const double* g = grads[l].weights.data();
    double* v = velocity[l].weights.data();
    const std::size_t n = layer.out_dim() * layer.in_dim();
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = cfg.momentum * v[i] - cfg.learning_rate * g[i];
      w[i] += v[i];
    }
    for (std::size_t r = 0; r < layer.out_dim(); ++r) {
      velocity[l].bias[r] = cfg.momentum * velocity[l].bias[r] -
                            cfg.learning_rate * grads[l].bias[r];
      layer.bias[r] += velocity[l].bias[r];
    }
  }
}

std::vector<double> train(NetworkParams& net, const LabeledDataset& data,
                          const LossFn& loss, const SgdConfig& cfg) {
  if (data.size() == 0) {
    throw DomainError("train: empty dataset");
  }
  if (cfg.batch_size < 1) {
    throw DomainError("train: batch_size must be positive");
  }
  std::vector<double> history;
  if (cfg.epochs == 0) {
    return history;
  }
  Rng rng(cfg.seed);
  Gradients velocity = zero_gradients(net);
  Gradients batch_grads = zero_gradients(net);
  SgdConfig step_cfg = cfg;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> sample_grad(net.num_classes);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t decay_epoch : cfg.lr_decay_epochs) {
      if (decay_epoch == epoch) {
        step_cfg.learning_rate *= cfg.lr_decay_factor;
      }
    }
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      const std::size_t end = std::min(start + cfg.batch_size, order.size());
      const double inv = 1.0 / static_cast<double>(end - start);
      for (LayerGrads& lg : batch_grads) {
        std::fill(lg.bias.begin(), lg.bias.end(), 0.0);
        std::fill(lg.weights.data(),
                  lg.weights.data() + lg.weights.rows() * lg.weights.cols(),
                  0.0);
      }
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t row = order[i];
        const ForwardTrace trace = forward(net, data.inputs.row(row));
        for (double logit : trace.logits()) {
          if (!std::isfinite(logit)) {
            throw DivergenceError(epoch,
                                  "train: non-finite logits in epoch " +
                                      std::to_string(epoch));
          }
        }
        batch_loss += loss(row, trace.logits(), sample_grad);
        const Gradients g = backward(net, trace, sample_grad);
        for (std::size_t l = 0; l < g.size(); ++l) {
          const std::size_t n = g[l].weights.rows() * g[l].weights.cols();
          for (std::size_t j = 0; j < n; ++j) {
            batch_grads[l].weights.data()[j] += g[l].weights.data()[j] * inv;
          }
          for (std::size_t j = 0; j < g[l].bias.size(); ++j) {
            batch_grads[l].bias[j] += g[l].bias[j] * inv;
          }
        }
      }
      batch_loss *= inv;
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError(epoch, "train: non-finite loss in epoch " +
                                         std::to_string(epoch));
      }
      sgd_step(net, batch_grads, velocity, step_cfg);
      epoch_loss += batch_loss;
      ++batches;
    }
    history.push_back(epoch_loss / static_cast<double>(batches));
  }
  return history;
}

namespace {

constexpr char kMagic[4] = {'D', 'L', 'A', 'B'};
constexpr std::uint16_t kVersion = 1;

}  // namespace

void save_checkpoint(const NetworkParams& net,
                     const std::filesystem::path& path) {
  if (net.layers.empty()) {
    throw DomainError("save_checkpoint: network has no layers");
  }
  // The format stores widths only; activations are positional (ReLU hidden,
  // identity final), so refuse anything else.
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const Activation expected = (l + 1 == net.layers.size())
                                    ? Activation::Identity
                                    : Activation::ReLU;
    if (net.layers[l].activation != expected) {
      throw DomainError(
          "save_checkpoint: only ReLU-hidden/identity-final networks are "
          "representable");
    }
  }
  std::ofstream out = io::open_output(path, /*binary=*/true);
  out.write(kMagic, 4);
  io::write_u16(out, kVersion);
  io::write_u32(out, static_cast<std::uint32_t>(net.layers.size() + 1));
  io::write_u32(out, static_cast<std::uint32_t>(net.input_dim));
  for (const DenseLayer& layer : net.layers) {
    io::write_u32(out, static_cast<std::uint32_t>(layer.out_dim()));
  }
  for (const DenseLayer& layer : net.layers) {
    for (std::size_t r = 0; r < layer.out_dim(); ++r) {
      for (double v : layer.weights.row(r)) {
        io::write_f64(out, v);
      }
    }
    for (double b : layer.bias) {
      io::write_f64(out, b);
    }
  }
  if (!out) {
    throw IoError("save_checkpoint: write failed for " + path.string());
  }
}

NetworkParams load_checkpoint(const std::filesystem::path& path) {
  io::Reader in(path);
  char magic[4];
  in.bytes(magic, 4);
  if (std::string(magic, 4) != std::string(kMagic, 4)) {
    throw ParseError(0, path.string() + ": not a checkpoint file (bad magic)");
  }
  const std::uint16_t version = in.u16();
  if (version != kVersion) {
    in.fail("unsupported checkpoint version " + std::to_string(version));
  }
  const std::size_t num_dims = in.u32();
  if (num_dims < 2) {
    in.fail("checkpoint needs at least two layer widths");
  }
  std::vector<std::size_t> dims(num_dims);
  for (std::size_t& d : dims) {
    d = in.u32();
    if (d < 1) {
      in.fail("zero layer width");
    }
  }
  NetworkParams net;
  net.input_dim = dims.front();
  net.num_classes = dims.back();
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    DenseLayer layer;
    layer.weights = Matrix(dims[l + 1], dims[l]);
    layer.bias.resize(dims[l + 1]);
    layer.activation =
        (l + 2 == dims.size()) ? Activation::Identity : Activation::ReLU;
    net.layers.push_back(std::move(layer));
  }
  for (DenseLayer& layer : net.layers) {
    for (std::size_t r = 0; r < layer.out_dim(); ++r) {
      for (std::size_t c = 0; c < layer.in_dim(); ++c) {
        layer.weights(r, c) = in.f64();
      }
    }
    for (double& b : layer.bias) {
      b = in.f64();
    }
  }
  if (!in.at_end()) {
    in.fail("trailing data after checkpoint payload");
  }
  return net;
}

}  // namespace dlab
