#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "freqctrl/rng.hpp"

namespace freqctrl::learner {

// Dueling multilayer perceptron over a shared tanh trunk:
//   Q(s,a) = V(s) + A(s,a) - mean_a' A(s,a')
// Parameters live in one flat double vector (trunk layers in order, each as
// row-major weights then biases, then the value head, then the advantage
// head) so optimizer steps, target syncs, finite-difference checks, and
// checkpoints all operate on a single array.
class QNetwork {
 public:
  QNetwork(int input_dim, std::vector<int> hidden_sizes, int n_actions)
      : input_dim_(input_dim),
        hidden_sizes_(std::move(hidden_sizes)),
        n_actions_(n_actions) {
    if (input_dim_ < 1) throw std::invalid_argument("input_dim must be >= 1");
    if (n_actions_ < 1) throw std::invalid_argument("n_actions must be >= 1");
    for (int h : hidden_sizes_)
      if (h < 1) throw std::invalid_argument("hidden sizes must be >= 1");

    int in = input_dim_;
    std::size_t off = 0;
    for (int h : hidden_sizes_) {
      layers_.push_back(LayerSpec{in, h, off, off + static_cast<std::size_t>(in) * h});
      off += static_cast<std::size_t>(in) * h + h;
      in = h;
    }
    value_ = LayerSpec{in, 1, off, off + static_cast<std::size_t>(in)};
    off += static_cast<std::size_t>(in) + 1;
    advantage_ =
        LayerSpec{in, n_actions_, off, off + static_cast<std::size_t>(in) * n_actions_};
    off += static_cast<std::size_t>(in) * n_actions_ + n_actions_;
    params_.assign(off, 0.0);
  }

  // Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)], seed-deterministic.
  static QNetwork initialized(int input_dim, std::vector<int> hidden_sizes,
                              int n_actions, std::uint64_t seed) {
    QNetwork net(input_dim, std::move(hidden_sizes), n_actions);
    Rng rng(seed);
    auto fill = [&](const LayerSpec& l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
      const std::size_t count =
          static_cast<std::size_t>(l.in) * l.out + l.out;
      for (std::size_t k = 0; k < count; ++k)
        net.params_[l.w_off + k] = rng.uniform(-bound, bound);
    };
    for (const LayerSpec& l : net.layers_) fill(l);
    fill(net.value_);
    fill(net.advantage_);
    return net;
  }

  int input_dim() const { return input_dim_; }
  int n_actions() const { return n_actions_; }
  const std::vector<int>& hidden_sizes() const { return hidden_sizes_; }
  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }

  struct ForwardDetail {
    double value = 0.0;
    std::vector<double> advantage;
    std::vector<double> q;
  };

  ForwardDetail forward_detail(std::span<const double> x) const {
    Trace t;
    return run_forward(x, t);
  }

  std::vector<double> forward(std::span<const double> x) const {
    Trace t;
    return run_forward(x, t).q;
  }

  // Gradient of (Q(x)[action] - target)^2 with respect to every parameter,
  // accumulated into grad. Returns the squared error itself.
  double backprop(std::span<const double> x, int action, double target,
                  std::span<double> grad) const {
    if (grad.size() != params_.size())
      throw std::invalid_argument("gradient buffer size mismatch");
    if (action < 0 || action >= n_actions_)
      throw std::invalid_argument("action index out of range");

    Trace t;
    const ForwardDetail out = run_forward(x, t);
    const double err = out.q[static_cast<std::size_t>(action)] - target;
    const double g = 2.0 * err;

    const std::vector<double>& last = t.activations.back();
    // Value head: dQ_k/dV = 1 for every k, so dL/dV = g.
    for (int i = 0; i < value_.in; ++i)
      grad[value_.w_off + static_cast<std::size_t>(i)] += g * last[static_cast<std::size_t>(i)];
    grad[value_.b_off] += g;

    // Advantage head: dL/dA_j = g * (1[j==action] - 1/K).
    std::vector<double> dh(last.size(), 0.0);
    const double mean_share = 1.0 / static_cast<double>(n_actions_);
    for (int j = 0; j < n_actions_; ++j) {
      const double da = g * ((j == action ? 1.0 : 0.0) - mean_share);
      for (int i = 0; i < advantage_.in; ++i) {
        const std::size_t wi =
            advantage_.w_off + static_cast<std::size_t>(j) * advantage_.in + i;
        grad[wi] += da * last[static_cast<std::size_t>(i)];
        dh[static_cast<std::size_t>(i)] += da * params_[wi];
      }
      grad[advantage_.b_off + static_cast<std::size_t>(j)] += da;
    }
    for (int i = 0; i < value_.in; ++i)
      dh[static_cast<std::size_t>(i)] +=
          g * params_[value_.w_off + static_cast<std::size_t>(i)];

    // Trunk, newest layer first. tanh'(z) = 1 - tanh(z)^2.
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const LayerSpec& l = layers_[li];
      const std::vector<double>& in_act = t.activations[li];
      const std::vector<double>& out_act = t.activations[li + 1];
      std::vector<double> dz(static_cast<std::size_t>(l.out));
      for (int j = 0; j < l.out; ++j) {
        const double a = out_act[static_cast<std::size_t>(j)];
        dz[static_cast<std::size_t>(j)] =
            dh[static_cast<std::size_t>(j)] * (1.0 - a * a);
      }
      std::vector<double> dprev(static_cast<std::size_t>(l.in), 0.0);
      for (int j = 0; j < l.out; ++j) {
        const double d = dz[static_cast<std::size_t>(j)];
        for (int i = 0; i < l.in; ++i) {
          const std::size_t wi =
              l.w_off + static_cast<std::size_t>(j) * l.in + i;
          grad[wi] += d * in_act[static_cast<std::size_t>(i)];
          dprev[static_cast<std::size_t>(i)] += d * params_[wi];
        }
        grad[l.b_off + static_cast<std::size_t>(j)] += d;
      }
      dh = std::move(dprev);
    }
    return err * err;
  }

 private:
  struct LayerSpec {
    int in = 0;
    int out = 0;
    std::size_t w_off = 0;  // row-major [out][in]
    std::size_t b_off = 0;
  };

  struct Trace {
    std::vector<std::vector<double>> activations;  // input, then each trunk output
  };

  void affine(const LayerSpec& l, const std::vector<double>& in,
              std::vector<double>& out) const {
    out.assign(static_cast<std::size_t>(l.out), 0.0);
    for (int j = 0; j < l.out; ++j) {
      double z = params_[l.b_off + static_cast<std::size_t>(j)];
      const std::size_t row = l.w_off + static_cast<std::size_t>(j) * l.in;
      for (int i = 0; i < l.in; ++i)
        z += params_[row + static_cast<std::size_t>(i)] * in[static_cast<std::size_t>(i)];
      out[static_cast<std::size_t>(j)] = z;
    }
  }

  ForwardDetail run_forward(std::span<const double> x, Trace& t) const {
    if (static_cast<int>(x.size()) != input_dim_)
      throw std::invalid_argument("feature vector length does not match input layer");
    t.activations.clear();
    t.activations.emplace_back(x.begin(), x.end());
    std::vector<double> buf;
    for (const LayerSpec& l : layers_) {
      affine(l, t.activations.back(), buf);
      for (double& v : buf) v = std::tanh(v);
      t.activations.push_back(buf);
    }

    ForwardDetail out;
    std::vector<double> v;
    affine(value_, t.activations.back(), v);
    out.value = v[0];
    affine(advantage_, t.activations.back(), out.advantage);
    double mean = 0.0;
    for (double a : out.advantage) mean += a;
    mean /= static_cast<double>(n_actions_);
    out.q.resize(static_cast<std::size_t>(n_actions_));
    for (int k = 0; k < n_actions_; ++k)
      out.q[static_cast<std::size_t>(k)] =
          out.value + out.advantage[static_cast<std::size_t>(k)] - mean;
    return out;
  }

  int input_dim_;
  std::vector<int> hidden_sizes_;
  int n_actions_;
  std::vector<LayerSpec> layers_;
  LayerSpec value_;
  LayerSpec advantage_;
  std::vector<double> params_;
};

// Central finite differences of the squared-error loss against the analytic
// gradient, over every parameter. Returns the worst relative disagreement
// |g_a - g_n| / max(1e-12, |g_a| + |g_n|).
inline double gradient_check(const QNetwork& net, std::span<const double> x,
                             int action, double target, double eps) {
  if (eps < 1e-7 || eps > 1e-3)
    throw std::invalid_argument("eps must be in [1e-7, 1e-3]");
  std::vector<double> analytic(net.parameters().size(), 0.0);
  net.backprop(x, action, target, analytic);

  QNetwork probe = net;
  std::vector<double>& p = probe.parameters();
  auto loss = [&]() {
    const std::vector<double> q = probe.forward(x);
    const double err = q[static_cast<std::size_t>(action)] - target;
    return err * err;
  };

  double worst = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double saved = p[k];
    p[k] = saved + eps;
    const double up = loss();
    p[k] = saved - eps;
    const double down = loss();
    p[k] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double denom = std::max(1e-12, std::abs(analytic[k]) + std::abs(numeric));
    worst = std::max(worst, std::abs(analytic[k] - numeric) / denom);
  }
  return worst;
}

}  // namespace freqctrl::learner
