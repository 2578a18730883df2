// Copyright 2026 The KnowMAN-cpp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef KNOWMAN_NN_CORE_HPP_
#define KNOWMAN_NN_CORE_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

namespace knowman {

// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

// Trainable array with its gradient accumulator and Adam moments.
struct Param {
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;

  Param() = default;
  explicit Param(std::size_t n) : value(n, 0.0), grad(n, 0.0), m(n, 0.0), v(n, 0.0) {}
  std::size_t size() const { return value.size(); }

  friend bool operator==(const Param&, const Param&) = default;
};

enum class LayerKind { dense, relu, dropout, batchnorm, log_softmax };

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  double p = 0.0;  // dropout probability

  static LayerSpec dense(std::size_t in, std::size_t out) { return {LayerKind::dense, in, out, 0.0}; }
  static LayerSpec relu(std::size_t dim = 0) { return {LayerKind::relu, dim, dim, 0.0}; }
  static LayerSpec dropout(double p, std::size_t dim = 0) { return {LayerKind::dropout, dim, dim, p}; }
  static LayerSpec batchnorm(std::size_t dim = 0) { return {LayerKind::batchnorm, dim, dim, 0.0}; }
  static LayerSpec log_softmax(std::size_t dim = 0) { return {LayerKind::log_softmax, dim, dim, 0.0}; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// How batchnorm normalises: with the current batch's statistics while
// updating the running averages, with batch statistics but leaving the
// running averages untouched, or with the running averages (inference).
enum class BatchStats { update, frozen, running };

struct NetworkMode {
  bool dropout = false;
  BatchStats batch_stats = BatchStats::running;
  std::uint64_t rng_seed = 0;  // dropout masks are a pure function of this

  static NetworkMode train(std::uint64_t seed) { return {true, BatchStats::update, seed}; }
  static NetworkMode frozen(std::uint64_t seed) { return {true, BatchStats::frozen, seed}; }
  static NetworkMode eval() { return {}; }
};

struct BatchNormConstants {
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;
};

class Network;

// Activations saved by a forward pass for the matching backward pass.
struct ForwardCache {
  const Network* network = nullptr;
  NetworkMode mode;
  std::vector<Matrix> inputs;   // input of each layer
  std::vector<Matrix> aux;      // dropout mask, batchnorm x_hat, log-softmax output
  std::vector<std::vector<double>> inv_std;  // batchnorm only
};

struct BackwardOptions {
  bool accumulate_param_grads = true;
  bool need_input_grad = true;
};

class Network {
 public:
  struct Layer {
    LayerSpec spec;
    Param weight;  // dense: in x out row-major; batchnorm: scale
    Param bias;    // dense: out; batchnorm: shift
    std::vector<double> running_mean;
    std::vector<double> running_var;

    friend bool operator==(const Layer&, const Layer&) = default;
  };

  Network() = default;
  // Dense weights are Glorot-uniform, biases zero; batchnorm starts at
  // scale 1, shift 0, running mean 0, running variance 1. Shape-preserving
  // layers with a zero dim inherit it from the previous layer.
  Network(std::vector<LayerSpec> specs, std::uint64_t seed);

  Matrix forward(const Matrix& x, const NetworkMode& mode, ForwardCache* cache = nullptr);

  // Propagates dloss/doutput back through the layers cached by forward(),
  // adding parameter gradients into each Param::grad. Returns dloss/dinput
  // (empty when options.need_input_grad is false).
  Matrix backward(const ForwardCache& cache, const Matrix& upstream,
                  const BackwardOptions& options = {});

  void zero_grad();
  std::vector<Param*> params();
  std::vector<const Param*> params() const;
  std::size_t num_parameters() const;

  std::size_t in_dim() const { return layers_.empty() ? 0 : layers_.front().spec.in_dim; }
  std::size_t out_dim() const { return layers_.empty() ? 0 : layers_.back().spec.out_dim; }
  std::vector<LayerSpec> specs() const;
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  void write(std::ostream& out) const;
  static Network read(std::istream& in);

  friend bool operator==(const Network& a, const Network& b) { return a.layers_ == b.layers_; }

 private:
  std::vector<Layer> layers_;
};

inline Network init_network(std::vector<LayerSpec> specs, std::uint64_t seed) {
  return Network(std::move(specs), seed);
}

struct NllResult {
  double loss = 0.0;
  Matrix grad;  // dloss/dlog_probs
};

// Mean negative log-likelihood of the target entries of log_probs.
NllResult nll_loss(const Matrix& log_probs, std::span<const int> targets);

std::vector<int> argmax_rows(const Matrix& m);

enum class OptimizerKind { adam, adamw };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // adamw only
};

// Bias-corrected Adam. Throws NumericError, leaving every parameter
// untouched, if any gradient is non-finite.
void adam_step(std::span<Param* const> params, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);
// Adam with decoupled weight decay applied before the Adam delta.
void adamw_step(std::span<Param* const> params, double lr, double weight_decay,
                double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
void optimizer_step(std::span<Param* const> params, const OptimizerConfig& config);

void zero_grads(std::span<Param* const> params);

// Compares the analytic gradient (computed once by grad_fn into Param::grad)
// with central differences of loss_fn on n_probes random coordinates.
// Relative error |a - n| / max(|a|, |n|) falls back to the absolute error
// when both are below 1e-7. Parameter values are restored afterwards.
double finite_diff_check(std::span<Param* const> params,
                         const std::function<double()>& loss_fn,
                         const std::function<void()>& grad_fn, std::size_t n_probes,
                         double h = 1e-5, std::uint64_t seed = 0);

// Convenience overload: NLL of the network's output on (x, targets) with a
// fixed mode. The mode must not update batchnorm statistics.
double finite_diff_check(Network& net, const Matrix& x, std::span<const int> targets,
                         const NetworkMode& mode, std::size_t n_probes, double h = 1e-5,
                         std::uint64_t seed = 0);

}  // namespace knowman

#endif  // KNOWMAN_NN_CORE_HPP_
