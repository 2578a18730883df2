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

#include "knowman/nn_core.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "knowman/error.hpp"
#include "knowman/rng.hpp"

namespace knowman {
namespace {

constexpr std::size_t kNoSlot = static_cast<std::size_t>(-1);

void check_finite(const Matrix& x, const char* what) {
  for (double v : x.data)
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + what);
}

bool uses_batch_stats(const NetworkMode& mode) { return mode.batch_stats != BatchStats::running; }

void put_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("truncated network record");
  return v;
}

void put_doubles(std::ostream& out, const std::vector<double>& v) {
  put_u64(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> get_doubles(std::istream& in) {
  const auto n = get_u64(in);
  if (n > (std::uint64_t{1} << 34)) throw IoError("implausible array length in network record");
  std::vector<double> v(n);
  if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double))))
    throw IoError("truncated network record");
  return v;
}

void put_param(std::ostream& out, const Param& p) {
  put_doubles(out, p.value);
  put_doubles(out, p.m);
  put_doubles(out, p.v);
  put_u64(out, p.step);
}

Param get_param(std::istream& in) {
  Param p;
  p.value = get_doubles(in);
  p.m = get_doubles(in);
  p.v = get_doubles(in);
  p.step = get_u64(in);
  if (p.m.size() != p.value.size() || p.v.size() != p.value.size())
    throw IoError("inconsistent parameter record");
  p.grad.assign(p.value.size(), 0.0);
  return p;
}

// y = x W + b, skipping zero inputs (the first layer sees sparse TF-IDF rows).
Matrix dense_forward(const Network::Layer& layer, const Matrix& x) {
  const std::size_t in = layer.spec.in_dim, out = layer.spec.out_dim;
  Matrix y(x.rows, out);
  const double* w = layer.weight.value.data();
  for (std::size_t r = 0; r < x.rows; ++r) {
    double* yr = &y.data[r * out];
    std::copy(layer.bias.value.begin(), layer.bias.value.end(), yr);
    const double* xr = &x.data[r * in];
    for (std::size_t k = 0; k < in; ++k) {
      const double xv = xr[k];
      if (xv == 0.0) continue;
      const double* wk = w + k * out;
      for (std::size_t j = 0; j < out; ++j) yr[j] += xv * wk[j];
    }
  }
  return y;
}

}  // namespace

Network::Network(std::vector<LayerSpec> specs, std::uint64_t seed) {
  if (specs.empty()) throw ShapeError("network needs at least one layer");
  std::size_t prev = 0;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    LayerSpec s = specs[i];
    if (s.kind != LayerKind::dense) {
      if (s.in_dim == 0) s.in_dim = prev;
      if (s.out_dim == 0) s.out_dim = s.in_dim;
      if (s.out_dim != s.in_dim) throw ShapeError("shape-preserving layer with in_dim != out_dim");
    }
    if (s.in_dim == 0 || s.out_dim == 0)
      throw ShapeError("layer " + std::to_string(i) + " has a zero dimension");
    if (i > 0 && s.in_dim != prev)
      throw ShapeError("layer " + std::to_string(i) + " expects " + std::to_string(s.in_dim) +
                       " inputs but receives " + std::to_string(prev));
    if (s.kind == LayerKind::dropout && !(s.p >= 0.0 && s.p < 1.0))
      throw ShapeError("dropout probability must lie in [0, 1)");

    Layer layer;
    layer.spec = s;
    if (s.kind == LayerKind::dense) {
      layer.weight = Param(s.in_dim * s.out_dim);
      layer.bias = Param(s.out_dim);
      const double bound = std::sqrt(6.0 / static_cast<double>(s.in_dim + s.out_dim));
      Rng rng(derive_seed(seed, "init", i));
      for (auto& w : layer.weight.value) w = (2.0 * uniform01(rng) - 1.0) * bound;
    } else if (s.kind == LayerKind::batchnorm) {
      layer.weight = Param(s.out_dim);
      std::fill(layer.weight.value.begin(), layer.weight.value.end(), 1.0);
      layer.bias = Param(s.out_dim);
      layer.running_mean.assign(s.out_dim, 0.0);
      layer.running_var.assign(s.out_dim, 1.0);
    }
    layers_.push_back(std::move(layer));
    prev = s.out_dim;
  }
}

std::vector<LayerSpec> Network::specs() const {
  std::vector<LayerSpec> out;
  for (const auto& l : layers_) out.push_back(l.spec);
  return out;
}

Matrix Network::forward(const Matrix& x, const NetworkMode& mode, ForwardCache* cache) {
  if (x.cols != in_dim())
    throw ShapeError("input has " + std::to_string(x.cols) + " columns, network expects " +
                     std::to_string(in_dim()));
  check_finite(x, "network input");
  if (cache) {
    cache->network = this;
    cache->mode = mode;
    cache->inputs.assign(layers_.size(), Matrix{});
    cache->aux.assign(layers_.size(), Matrix{});
    cache->inv_std.assign(layers_.size(), {});
  }

  Matrix h = x;
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    Layer& layer = layers_[li];
    const std::size_t n = h.rows, d = layer.spec.out_dim;
    Matrix y;
    switch (layer.spec.kind) {
      case LayerKind::dense:
        y = dense_forward(layer, h);
        break;
      case LayerKind::relu:
        y = h;
        for (auto& v : y.data) v = v > 0.0 ? v : 0.0;
        break;
      case LayerKind::dropout: {
        y = h;
        if (mode.dropout && layer.spec.p > 0.0) {
          Matrix mask(n, d);
          Rng rng(derive_seed(mode.rng_seed, "dropout", li));
          const double scale = 1.0 / (1.0 - layer.spec.p);
          for (auto& m : mask.data) m = uniform01(rng) < layer.spec.p ? 0.0 : scale;
          for (std::size_t k = 0; k < y.data.size(); ++k) y.data[k] *= mask.data[k];
          if (cache) cache->aux[li] = std::move(mask);
        }
        break;
      }
      case LayerKind::batchnorm: {
        y = Matrix(n, d);
        Matrix xhat(n, d);
        std::vector<double> inv_std(d);
        const auto& gamma = layer.weight.value;
        const auto& beta = layer.bias.value;
        if (uses_batch_stats(mode)) {
          if (n < 2) throw ShapeError("batchnorm needs a batch of at least 2 rows in training");
          for (std::size_t j = 0; j < d; ++j) {
            double mean = 0.0;
            for (std::size_t r = 0; r < n; ++r) mean += h(r, j);
            mean /= static_cast<double>(n);
            double var = 0.0;
            for (std::size_t r = 0; r < n; ++r) var += (h(r, j) - mean) * (h(r, j) - mean);
            var /= static_cast<double>(n);
            inv_std[j] = 1.0 / std::sqrt(var + BatchNormConstants::kEps);
            for (std::size_t r = 0; r < n; ++r) {
              xhat(r, j) = (h(r, j) - mean) * inv_std[j];
              y(r, j) = gamma[j] * xhat(r, j) + beta[j];
            }
            if (mode.batch_stats == BatchStats::update) {
              constexpr double m = BatchNormConstants::kMomentum;
              const double unbiased = var * static_cast<double>(n) / static_cast<double>(n - 1);
              layer.running_mean[j] = (1.0 - m) * layer.running_mean[j] + m * mean;
              layer.running_var[j] = (1.0 - m) * layer.running_var[j] + m * unbiased;
            }
          }
        } else {
          for (std::size_t j = 0; j < d; ++j) {
            inv_std[j] = 1.0 / std::sqrt(layer.running_var[j] + BatchNormConstants::kEps);
            for (std::size_t r = 0; r < n; ++r) {
              xhat(r, j) = (h(r, j) - layer.running_mean[j]) * inv_std[j];
              y(r, j) = gamma[j] * xhat(r, j) + beta[j];
            }
          }
        }
        if (cache) {
          cache->aux[li] = std::move(xhat);
          cache->inv_std[li] = std::move(inv_std);
        }
        break;
      }
      case LayerKind::log_softmax: {
        y = Matrix(n, d);
        for (std::size_t r = 0; r < n; ++r) {
          auto in = h.row(r);
          auto out = y.row(r);
          const double mx = *std::max_element(in.begin(), in.end());
          double sum = 0.0;
          for (std::size_t j = 0; j < d; ++j) sum += std::exp(in[j] - mx);
          const double lse = mx + std::log(sum);
          for (std::size_t j = 0; j < d; ++j) out[j] = in[j] - lse;
        }
        if (cache) cache->aux[li] = y;
        break;
      }
    }
    if (cache) cache->inputs[li] = std::move(h);
    h = std::move(y);
  }
  return h;
}

Matrix Network::backward(const ForwardCache& cache, const Matrix& upstream,
                         const BackwardOptions& options) {
  if (cache.network != this || cache.inputs.size() != layers_.size())
    throw ShapeError("forward cache does not belong to this network");
  const std::size_t n = cache.inputs.front().rows;
  if (upstream.rows != n || upstream.cols != out_dim())
    throw ShapeError("upstream gradient shape does not match the network output");

  Matrix g = upstream;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    Layer& layer = layers_[li];
    const Matrix& x = cache.inputs[li];
    const std::size_t d = layer.spec.out_dim;
    const bool want_input = li > 0 || options.need_input_grad;
    Matrix dx;
    switch (layer.spec.kind) {
      case LayerKind::dense: {
        const std::size_t in = layer.spec.in_dim;
        if (options.accumulate_param_grads) {
          // Sum this call's contribution separately, then add it in one go,
          // so repeated calls accumulate exactly. Only input columns that are
          // nonzero somewhere in the batch get a slot.
          std::vector<std::size_t> slot(in, kNoSlot);
          std::vector<std::size_t> touched;
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t k = 0; k < in; ++k)
              if (x.data[r * in + k] != 0.0 && slot[k] == kNoSlot) {
                slot[k] = touched.size();
                touched.push_back(k);
              }
          std::vector<double> local(touched.size() * d, 0.0);
          std::vector<double> local_bias(d, 0.0);
          for (std::size_t r = 0; r < n; ++r) {
            const double* gr = &g.data[r * d];
            const double* xr = &x.data[r * in];
            for (std::size_t k = 0; k < in; ++k) {
              const double xv = xr[k];
              if (xv == 0.0) continue;
              double* lk = &local[slot[k] * d];
              for (std::size_t j = 0; j < d; ++j) lk[j] += xv * gr[j];
            }
            for (std::size_t j = 0; j < d; ++j) local_bias[j] += gr[j];
          }
          double* gw = layer.weight.grad.data();
          for (std::size_t t = 0; t < touched.size(); ++t) {
            double* gwk = gw + touched[t] * d;
            const double* lk = &local[t * d];
            for (std::size_t j = 0; j < d; ++j) gwk[j] += lk[j];
          }
          for (std::size_t j = 0; j < d; ++j) layer.bias.grad[j] += local_bias[j];
        }
        if (want_input) {
          dx = Matrix(n, in);
          const double* w = layer.weight.value.data();
          for (std::size_t r = 0; r < n; ++r) {
            const double* gr = &g.data[r * d];
            for (std::size_t k = 0; k < in; ++k) {
              const double* wk = w + k * d;
              double s = 0.0;
              for (std::size_t j = 0; j < d; ++j) s += gr[j] * wk[j];
              dx(r, k) = s;
            }
          }
        }
        break;
      }
      case LayerKind::relu:
        dx = g;
        for (std::size_t k = 0; k < dx.data.size(); ++k)
          if (!(x.data[k] > 0.0)) dx.data[k] = 0.0;
        break;
      case LayerKind::dropout:
        dx = g;
        if (!cache.aux[li].data.empty())
          for (std::size_t k = 0; k < dx.data.size(); ++k) dx.data[k] *= cache.aux[li].data[k];
        break;
      case LayerKind::batchnorm: {
        const Matrix& xhat = cache.aux[li];
        const auto& inv_std = cache.inv_std[li];
        const auto& gamma = layer.weight.value;
        dx = Matrix(n, d);
        for (std::size_t j = 0; j < d; ++j) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t r = 0; r < n; ++r) {
            sum_g += g(r, j);
            sum_gx += g(r, j) * xhat(r, j);
          }
          if (options.accumulate_param_grads) {
            layer.weight.grad[j] += sum_gx;
            layer.bias.grad[j] += sum_g;
          }
          if (uses_batch_stats(cache.mode)) {
            // d x_hat = g * gamma; the batch mean and variance depend on x too.
            const double nn = static_cast<double>(n);
            const double s1 = gamma[j] * sum_g, s2 = gamma[j] * sum_gx;
            for (std::size_t r = 0; r < n; ++r)
              dx(r, j) = inv_std[j] / nn * (nn * gamma[j] * g(r, j) - s1 - xhat(r, j) * s2);
          } else {
            for (std::size_t r = 0; r < n; ++r) dx(r, j) = g(r, j) * gamma[j] * inv_std[j];
          }
        }
        break;
      }
      case LayerKind::log_softmax: {
        const Matrix& out = cache.aux[li];
        dx = Matrix(n, d);
        for (std::size_t r = 0; r < n; ++r) {
          double sum = 0.0;
          for (std::size_t j = 0; j < d; ++j) sum += g(r, j);
          for (std::size_t j = 0; j < d; ++j) dx(r, j) = g(r, j) - std::exp(out(r, j)) * sum;
        }
        break;
      }
    }
    if (!want_input) return {};
    g = std::move(dx);
  }
  return g;
}

void Network::zero_grad() {
  for (Param* p : params()) std::fill(p->grad.begin(), p->grad.end(), 0.0);
}

std::vector<Param*> Network::params() {
  std::vector<Param*> out;
  for (auto& l : layers_)
    if (l.spec.kind == LayerKind::dense || l.spec.kind == LayerKind::batchnorm) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
  return out;
}

std::vector<const Param*> Network::params() const {
  std::vector<const Param*> out;
  for (const auto& l : layers_)
    if (l.spec.kind == LayerKind::dense || l.spec.kind == LayerKind::batchnorm) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
  return out;
}

std::size_t Network::num_parameters() const {
  std::size_t n = 0;
  for (const Param* p : params()) n += p->size();
  return n;
}

void Network::write(std::ostream& out) const {
  put_u64(out, layers_.size());
  for (const auto& l : layers_) {
    put_u64(out, static_cast<std::uint64_t>(l.spec.kind));
    put_u64(out, l.spec.in_dim);
    put_u64(out, l.spec.out_dim);
    out.write(reinterpret_cast<const char*>(&l.spec.p), sizeof l.spec.p);
    if (l.spec.kind == LayerKind::dense || l.spec.kind == LayerKind::batchnorm) {
      put_param(out, l.weight);
      put_param(out, l.bias);
    }
    if (l.spec.kind == LayerKind::batchnorm) {
      put_doubles(out, l.running_mean);
      put_doubles(out, l.running_var);
    }
  }
}

Network Network::read(std::istream& in) {
  Network net;
  const auto n_layers = get_u64(in);
  if (n_layers == 0 || n_layers > 10000) throw IoError("implausible layer count in network record");
  std::size_t prev = 0;
  for (std::uint64_t i = 0; i < n_layers; ++i) {
    Layer l;
    const auto kind = get_u64(in);
    if (kind > static_cast<std::uint64_t>(LayerKind::log_softmax)) throw IoError("unknown layer kind");
    l.spec.kind = static_cast<LayerKind>(kind);
    l.spec.in_dim = get_u64(in);
    l.spec.out_dim = get_u64(in);
    if (!in.read(reinterpret_cast<char*>(&l.spec.p), sizeof l.spec.p))
      throw IoError("truncated network record");
    if (l.spec.in_dim == 0 || (i > 0 && l.spec.in_dim != prev))
      throw IoError("inconsistent layer dimensions in network record");
    const std::size_t wsize =
        l.spec.kind == LayerKind::dense ? l.spec.in_dim * l.spec.out_dim : l.spec.out_dim;
    if (l.spec.kind == LayerKind::dense || l.spec.kind == LayerKind::batchnorm) {
      l.weight = get_param(in);
      l.bias = get_param(in);
      if (l.weight.size() != wsize || l.bias.size() != l.spec.out_dim)
        throw IoError("parameter sizes do not match layer dimensions");
    }
    if (l.spec.kind == LayerKind::batchnorm) {
      l.running_mean = get_doubles(in);
      l.running_var = get_doubles(in);
      if (l.running_mean.size() != l.spec.out_dim || l.running_var.size() != l.spec.out_dim)
        throw IoError("batchnorm statistics do not match layer dimensions");
    }
    prev = l.spec.out_dim;
    net.layers_.push_back(std::move(l));
  }
  return net;
}

NllResult nll_loss(const Matrix& log_probs, std::span<const int> targets) {
  if (targets.size() != log_probs.rows) throw ShapeError("one target per row required");
  if (log_probs.rows == 0) throw ShapeError("nll_loss on an empty batch");
  NllResult res;
  res.grad = Matrix(log_probs.rows, log_probs.cols);
  const double inv_b = 1.0 / static_cast<double>(log_probs.rows);
  double sum = 0.0;
  for (std::size_t r = 0; r < log_probs.rows; ++r) {
    const int t = targets[r];
    if (t < 0 || static_cast<std::size_t>(t) >= log_probs.cols)
      throw ShapeError("target " + std::to_string(t) + " out of range");
    sum += log_probs(r, static_cast<std::size_t>(t));
    res.grad(r, static_cast<std::size_t>(t)) = -inv_b;
  }
  res.loss = -sum * inv_b;
  return res;
}

std::vector<int> argmax_rows(const Matrix& m) {
  std::vector<int> out(m.rows);
  for (std::size_t r = 0; r < m.rows; ++r) {
    auto row = m.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

namespace {

void require_finite_grads(std::span<Param* const> params) {
  for (const Param* p : params)
    for (double g : p->grad)
      if (!std::isfinite(g)) throw NumericError("non-finite gradient; optimizer step refused");
}

void adam_update(std::span<Param* const> params, double lr, double beta1, double beta2,
                 double eps, double decay) {
  require_finite_grads(params);
  for (Param* p : params) {
    ++p->step;
    const double t = static_cast<double>(p->step);
    const double c1 = 1.0 - std::pow(beta1, t);
    const double c2 = 1.0 - std::pow(beta2, t);
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double g = p->grad[i];
      p->m[i] = beta1 * p->m[i] + (1.0 - beta1) * g;
      p->v[i] = beta2 * p->v[i] + (1.0 - beta2) * g * g;
      if (decay != 0.0) p->value[i] -= lr * decay * p->value[i];
      const double mhat = p->m[i] / c1;
      const double vhat = p->v[i] / c2;
      p->value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

}  // namespace

void adam_step(std::span<Param* const> params, double lr, double beta1, double beta2,
               double eps) {
  adam_update(params, lr, beta1, beta2, eps, 0.0);
}

void adamw_step(std::span<Param* const> params, double lr, double weight_decay, double beta1,
                double beta2, double eps) {
  adam_update(params, lr, beta1, beta2, eps, weight_decay);
}

void optimizer_step(std::span<Param* const> params, const OptimizerConfig& c) {
  if (c.kind == OptimizerKind::adamw)
    adamw_step(params, c.lr, c.weight_decay, c.beta1, c.beta2, c.eps);
  else
    adam_step(params, c.lr, c.beta1, c.beta2, c.eps);
}

void zero_grads(std::span<Param* const> params) {
  for (Param* p : params) std::fill(p->grad.begin(), p->grad.end(), 0.0);
}

double finite_diff_check(std::span<Param* const> params,
                         const std::function<double()>& loss_fn,
                         const std::function<void()>& grad_fn, std::size_t n_probes, double h,
                         std::uint64_t seed) {
  zero_grads(params);
  grad_fn();
  std::vector<std::vector<double>> analytic;
  std::size_t total = 0;
  for (const Param* p : params) {
    analytic.push_back(p->grad);
    total += p->size();
  }
  if (total == 0) return 0.0;

  Rng rng(derive_seed(seed, "fd-probe"));
  double worst = 0.0;
  for (std::size_t probe = 0; probe < n_probes; ++probe) {
    std::size_t flat = uniform_index(rng, total);
    std::size_t pi = 0;
    while (flat >= params[pi]->size()) flat -= params[pi++]->size();
    double& theta = params[pi]->value[flat];
    const double saved = theta;
    theta = saved + h;
    const double up = loss_fn();
    theta = saved - h;
    const double down = loss_fn();
    theta = saved;

    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic[pi][flat];
    const double scale = std::max(std::abs(a), std::abs(numeric));
    const double err = scale < 1e-7 ? std::abs(a - numeric) : std::abs(a - numeric) / scale;
    worst = std::max(worst, err);
  }
  return worst;
}

double finite_diff_check(Network& net, const Matrix& x, std::span<const int> targets,
                         const NetworkMode& mode, std::size_t n_probes, double h,
                         std::uint64_t seed) {
  if (mode.batch_stats == BatchStats::update)
    throw ShapeError("finite_diff_check needs a mode that leaves batchnorm statistics alone");
  auto params = net.params();
  auto loss = [&] { return nll_loss(net.forward(x, mode), targets).loss; };
  auto grad = [&] {
    ForwardCache cache;
    const Matrix out = net.forward(x, mode, &cache);
    net.backward(cache, nll_loss(out, targets).grad);
  };
  return finite_diff_check(params, loss, grad, n_probes, h, seed);
}

}  // namespace knowman
