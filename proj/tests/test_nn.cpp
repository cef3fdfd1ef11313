#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "dlab/dataset.hpp"
#include "dlab/nn.hpp"
#include "dlab/objectives.hpp"
#include "dlab/rng.hpp"
#include "doctest.h"

using namespace dlab;
namespace fs = std::filesystem;

namespace {

bool same_params(const NetworkParams& a, const NetworkParams& b) {
  if (a.layers.size() != b.layers.size()) {
    return false;
  }
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    if (a.layers[l].weights != b.layers[l].weights ||
        a.layers[l].bias != b.layers[l].bias ||
        a.layers[l].activation != b.layers[l].activation) {
      return false;
    }
  }
  return true;
}

std::vector<double> random_vec(Rng& rng, std::size_t n, double scale) {
  std::vector<double> v(n);
  for (double& x : v) {
    x = rng.uniform(-scale, scale);
  }
  return v;
}

// Matrix-chain evaluation written independently of forward().
std::vector<double> chain_eval(const NetworkParams& net,
                               const std::vector<double>& input) {
  std::vector<double> x = input;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const DenseLayer& layer = net.layers[l];
    std::vector<double> y(layer.out_dim(), 0.0);
    for (std::size_t r = 0; r < layer.out_dim(); ++r) {
      double s = layer.bias[r];
      for (std::size_t c = 0; c < layer.in_dim(); ++c) {
        s += layer.weights(r, c) * x[c];
      }
      y[r] = layer.activation == Activation::ReLU && s < 0.0 ? 0.0 : s;
    }
    x = std::move(y);
  }
  return x;
}

LabeledDataset two_blobs(std::size_t per_class, double gap, std::uint64_t seed) {
  Rng rng(seed);
  LabeledDataset data;
  data.num_classes = 2;
  data.inputs = Matrix(2 * per_class, 2);
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const int label = i < per_class ? 0 : 1;
    const double cx = label == 0 ? -gap : gap;
    data.inputs(i, 0) = cx + 0.3 * rng.gaussian();
    data.inputs(i, 1) = 0.3 * rng.gaussian();
    data.labels.push_back(label);
  }
  return data;
}

LossFn plain_ce(const LabeledDataset& data) {
  return [&data](std::size_t sample, std::span<const double> logits,
                 std::span<double> grad_out) {
    const SmoothingConfig cfg{0.0, data.num_classes};
    const std::vector<double> g =
        smoothed_loss_grad(logits, data.labels[sample], cfg);
    std::copy(g.begin(), g.end(), grad_out.begin());
    return smoothed_loss(logits, data.labels[sample], cfg);
  };
}

double train_accuracy(const NetworkParams& net, const LabeledDataset& data) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const ForwardTrace t = forward(net, data.inputs.row(i));
    std::size_t best = 0;
    for (std::size_t k = 1; k < t.logits().size(); ++k) {
      if (t.logits()[k] > t.logits()[best]) {
        best = k;
      }
    }
    hits += static_cast<int>(best) == data.labels[i] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace

TEST_CASE("network init is deterministic and shaped by dims") {
  const NetworkParams a = init_network({4, 8, 3}, 7);
  const NetworkParams b = init_network({4, 8, 3}, 7);
  CHECK(same_params(a, b));
  CHECK(a.input_dim == 4);
  CHECK(a.num_classes == 3);
  CHECK(a.layers.size() == 2);
  CHECK(a.layers[0].activation == Activation::ReLU);
  CHECK(a.layers[1].activation == Activation::Identity);

  // Weights live in +-1/sqrt(in_dim); biases start at zero.
  for (const DenseLayer& layer : a.layers) {
    const double bound = 1.0 / std::sqrt(double(layer.in_dim()));
    for (std::size_t r = 0; r < layer.out_dim(); ++r) {
      CHECK(layer.bias[r] == 0.0);
      for (std::size_t c = 0; c < layer.in_dim(); ++c) {
        CHECK(std::abs(layer.weights(r, c)) <= bound);
      }
    }
  }

  const NetworkParams single = init_network({4, 3}, 1);
  CHECK(single.penultimate_dim() == 4);
  const ForwardTrace trace = forward(single, std::vector<double>{1, 2, 3, 4});
  REQUIRE(trace.penultimate().size() == 4);
  CHECK(trace.penultimate()[0] == 1.0);
  CHECK(trace.penultimate()[3] == 4.0);

  CHECK_THROWS_AS(init_network({4, 0, 3}, 1), DomainError);
  CHECK_THROWS_AS(init_network({4}, 1), DomainError);
}

TEST_CASE("forward computes the layer chain") {
  NetworkParams idnet;
  idnet.input_dim = 2;
  idnet.num_classes = 2;
  DenseLayer layer;
  layer.weights = Matrix(2, 2);
  layer.weights(0, 0) = 1.0;
  layer.weights(1, 1) = 1.0;
  layer.bias = {0.0, 0.0};
  idnet.layers.push_back(layer);

  const ForwardTrace t = forward(idnet, std::vector<double>{1.0, 2.0});
  CHECK(t.logits()[0] == 1.0);
  CHECK(t.logits()[1] == 2.0);

  // Zero input with zero biases gives zero logits through any depth.
  const NetworkParams deep = init_network({3, 6, 5, 4}, 19);
  const ForwardTrace z = forward(deep, std::vector<double>{0.0, 0.0, 0.0});
  for (double v : z.logits()) {
    CHECK(v == 0.0);
  }

  // Random nets match an independent evaluation.
  Rng rng(99);
  for (int round = 0; round < 10; ++round) {
    const NetworkParams net = init_network({5, 7, 4}, 100 + round);
    const std::vector<double> x = random_vec(rng, 5, 2.0);
    const ForwardTrace tr = forward(net, x);
    const std::vector<double> want = chain_eval(net, x);
    for (std::size_t k = 0; k < want.size(); ++k) {
      CHECK(tr.logits()[k] == doctest::Approx(want[k]).epsilon(1e-14));
    }
  }

  CHECK_THROWS_AS(forward(idnet, std::vector<double>{1.0}), ShapeError);
}

TEST_CASE("hidden activations are nonnegative under ReLU") {
  Rng rng(7);
  for (int round = 0; round < 5; ++round) {
    const NetworkParams net = init_network({6, 9, 8, 3}, 55 + round);
    const ForwardTrace t = forward(net, random_vec(rng, 6, 3.0));
    for (std::size_t l = 0; l + 1 < t.activations.size(); ++l) {
      for (double v : t.activations[l]) {
        CHECK(v >= 0.0);
      }
    }
  }
}

TEST_CASE("backward handles the degenerate gradients exactly") {
  const NetworkParams net = init_network({4, 6, 3}, 3);
  const ForwardTrace t = forward(net, std::vector<double>{0.5, -1.0, 2.0, 0.1});

  const Gradients zero = backward(net, t, std::vector<double>{0.0, 0.0, 0.0});
  for (const LayerGrads& lg : zero) {
    for (std::size_t j = 0; j < lg.weights.rows() * lg.weights.cols(); ++j) {
      CHECK(lg.weights.data()[j] == 0.0);
    }
    for (double b : lg.bias) {
      CHECK(b == 0.0);
    }
  }

  // One linear layer with loss = logit_0: gradient row 0 is the input.
  const NetworkParams lin = init_network({4, 3}, 17);
  const std::vector<double> x{0.5, -1.0, 2.0, 0.1};
  const ForwardTrace lt = forward(lin, x);
  const Gradients g = backward(lin, lt, std::vector<double>{1.0, 0.0, 0.0});
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(g[0].weights(0, c) == x[c]);
    CHECK(g[0].weights(1, c) == 0.0);
    CHECK(g[0].weights(2, c) == 0.0);
  }
  CHECK(g[0].bias[0] == 1.0);
  CHECK(g[0].bias[1] == 0.0);
}

TEST_CASE("backward matches central finite differences through the network") {
  Rng rng(41);
  int checked = 0;
  for (int round = 0; round < 10; ++round) {
    NetworkParams net = init_network({3, 5, 4, 3}, 200 + round);
    const std::vector<double> x = random_vec(rng, 3, 2.0);
    const int label = static_cast<int>(rng.below(3));
    const SmoothingConfig scfg{0.1, 3};

    const ForwardTrace t = forward(net, x);
    const std::vector<double> dlogits =
        smoothed_loss_grad(t.logits(), label, scfg);
    const Gradients g = backward(net, t, dlogits);

    const double h = 1e-5;
    auto loss_at = [&]() {
      return smoothed_loss(forward(net, x).logits(), label, scfg);
    };
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      Matrix& w = net.layers[l].weights;
      for (std::size_t j = 0; j < w.rows() * w.cols(); ++j) {
        const double keep = w.data()[j];
        w.data()[j] = keep + h;
        const double up = loss_at();
        w.data()[j] = keep - h;
        const double down = loss_at();
        w.data()[j] = keep;
        const double fd = (up - down) / (2.0 * h);
        const double a = g[l].weights.data()[j];
        const double denom = std::max({1.0, std::abs(fd), std::abs(a)});
        CHECK(std::abs(fd - a) / denom < 1e-4);
        ++checked;
      }
      for (std::size_t j = 0; j < net.layers[l].bias.size(); ++j) {
        const double keep = net.layers[l].bias[j];
        net.layers[l].bias[j] = keep + h;
        const double up = loss_at();
        net.layers[l].bias[j] = keep - h;
        const double down = loss_at();
        net.layers[l].bias[j] = keep;
        const double fd = (up - down) / (2.0 * h);
        const double a = g[l].bias[j];
        const double denom = std::max({1.0, std::abs(fd), std::abs(a)});
        CHECK(std::abs(fd - a) / denom < 1e-4);
        ++checked;
      }
    }
  }
  CHECK(checked > 500);
}

TEST_CASE("sgd step follows the momentum recurrence") {
  auto one_param_net = []() {
    NetworkParams net;
    net.input_dim = 1;
    net.num_classes = 1;
    DenseLayer layer;
    layer.weights = Matrix(1, 1);
    layer.weights(0, 0) = 1.0;
    layer.bias = {0.5};
    net.layers.push_back(layer);
    return net;
  };

  SgdConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.momentum = 0.0;

  NetworkParams net = one_param_net();
  Gradients grads = zero_gradients(net);
  grads[0].weights(0, 0) = 2.0;
  grads[0].bias[0] = -1.0;
  Gradients velocity = zero_gradients(net);

  sgd_step(net, grads, velocity, cfg);
  CHECK(net.layers[0].weights(0, 0) == doctest::Approx(1.0 - 0.1 * 2.0).epsilon(1e-15));
  CHECK(net.layers[0].bias[0] == doctest::Approx(0.5 + 0.1).epsilon(1e-15));

  // Zero gradient with zero velocity is a fixed point.
  NetworkParams still = one_param_net();
  Gradients no_grad = zero_gradients(still);
  Gradients no_vel = zero_gradients(still);
  sgd_step(still, no_grad, no_vel, cfg);
  CHECK(still.layers[0].weights(0, 0) == 1.0);
  CHECK(still.layers[0].bias[0] == 0.5);

  // Two momentum steps with a constant gradient move by lr*g*(1 + 1.9).
  cfg.momentum = 0.9;
  NetworkParams roll = one_param_net();
  Gradients const_grad = zero_gradients(roll);
  const_grad[0].weights(0, 0) = 2.0;
  Gradients vel = zero_gradients(roll);
  sgd_step(roll, const_grad, vel, cfg);
  sgd_step(roll, const_grad, vel, cfg);
  CHECK(roll.layers[0].weights(0, 0) ==
        doctest::Approx(1.0 - 2.9 * 0.1 * 2.0).epsilon(1e-15));
}

TEST_CASE("training separates separable blobs and is reproducible") {
  const LabeledDataset data = two_blobs(25, 2.0, 5);
  SgdConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.momentum = 0.9;
  cfg.epochs = 50;
  cfg.batch_size = 10;
  cfg.seed = 9;

  NetworkParams net = init_network({2, 6, 2}, 9);
  const std::vector<double> history = train(net, data, plain_ce(data), cfg);
  CHECK(history.size() == cfg.epochs);
  CHECK(train_accuracy(net, data) == 1.0);

  NetworkParams again = init_network({2, 6, 2}, 9);
  train(again, data, plain_ce(data), cfg);
  CHECK(same_params(net, again));
}

TEST_CASE("training edge cases") {
  const LabeledDataset data = two_blobs(10, 2.0, 6);
  NetworkParams net = init_network({2, 4, 2}, 1);
  const NetworkParams before = net;

  SgdConfig cfg;
  cfg.epochs = 0;
  CHECK(train(net, data, plain_ce(data), cfg).empty());
  CHECK(same_params(net, before));

  cfg.epochs = 5;
  cfg.learning_rate = 1e3;
  bool diverged = false;
  std::size_t at_epoch = 0;
  try {
    train(net, data, plain_ce(data), cfg);
  } catch (const DivergenceError& e) {
    diverged = true;
    at_epoch = e.epoch();
  }
  CHECK(diverged);
  CHECK(at_epoch < 5);

  LabeledDataset empty;
  empty.num_classes = 2;
  NetworkParams fresh = init_network({2, 2}, 1);
  CHECK_THROWS_AS(train(fresh, empty, plain_ce(empty), cfg), DomainError);
}

TEST_CASE("learning rate decay kicks in at the listed epochs") {
  // One sample, one weight, constant unit gradient, momentum 0: each epoch
  // moves the weight by the current learning rate.
  LabeledDataset data;
  data.num_classes = 1;
  data.inputs = Matrix(1, 1);
  data.inputs(0, 0) = 1.0;
  data.labels = {0};

  NetworkParams net;
  net.input_dim = 1;
  net.num_classes = 1;
  DenseLayer layer;
  layer.weights = Matrix(1, 1);
  layer.bias = {0.0};
  net.layers.push_back(layer);

  const LossFn unit_grad = [](std::size_t, std::span<const double> logits,
                              std::span<double> grad_out) {
    grad_out[0] = 1.0;
    return logits[0];
  };

  SgdConfig cfg;
  cfg.learning_rate = 1.0;
  cfg.epochs = 4;
  cfg.lr_decay_epochs = {2};
  cfg.lr_decay_factor = 0.1;
  train(net, data, unit_grad, cfg);
  // Epochs 0,1 at lr 1.0; epochs 2,3 at lr 0.1.
  CHECK(net.layers[0].weights(0, 0) == doctest::Approx(-2.2).epsilon(1e-12));
}

TEST_CASE("checkpoints round trip bit exactly") {
  const NetworkParams net = init_network({5, 9, 4}, 77);
  const fs::path dir = fs::temp_directory_path() / "dlab_nn_test";
  fs::create_directories(dir);
  const fs::path path = dir / "net.dlab";

  save_checkpoint(net, path);
  const NetworkParams back = load_checkpoint(path);
  CHECK(same_params(net, back));
  CHECK(back.input_dim == net.input_dim);
  CHECK(back.num_classes == net.num_classes);

  // Saving the loaded copy reproduces the file byte for byte.
  const fs::path path2 = dir / "net2.dlab";
  save_checkpoint(back, path2);
  std::ifstream a(path, std::ios::binary);
  std::ifstream b(path2, std::ios::binary);
  const std::string bytes_a((std::istreambuf_iterator<char>(a)),
                            std::istreambuf_iterator<char>());
  const std::string bytes_b((std::istreambuf_iterator<char>(b)),
                            std::istreambuf_iterator<char>());
  CHECK(bytes_a == bytes_b);
  CHECK(!bytes_a.empty());

  // Corrupt magic is rejected.
  std::ofstream bad(dir / "bad.dlab", std::ios::binary);
  bad << "NOPE" << bytes_a.substr(4);
  bad.close();
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.dlab"), ParseError);

  fs::remove_all(dir);
}
