#pragma once

// Per-reward-type value network: flatten(7x40x40) -> dense(H, ReLU) -> dense(4).
//
//   z = b1 + W1^T (input_gain * x)          W1 stored input-major [input][hidden]
//   h = act(z)
//   y = value_scale * (b2 + hidden_gain * W2 h)   W2 stored [output][hidden]
//
// With output_bias off, b2 stays zero and takes no updates.
//
// Inputs are mostly zero (object footprints only), so forward and backward
// passes visit the non-zero inputs only.

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "xrl/error.hpp"
#include "xrl/game.hpp"
#include "xrl/rng.hpp"

namespace xrl {

enum class Activation : std::uint8_t { ReLU, Identity };

struct Architecture {
  std::size_t inputs = kTensorSize;
  std::size_t hidden = 64;
  Activation activation = Activation::ReLU;
  double input_gain = 1.0 / 32.0;
  /// Network outputs are expressed in units of this many points.
  double value_scale = 100.0;
  double hidden_init_std = 1.4142135623730951;
  double hidden_bias_init = 0.01;
  double output_init_std = 0.1;
  bool output_bias = true;

  static constexpr std::size_t outputs = kNumActions;

  double hidden_gain() const { return 1.0 / std::sqrt(static_cast<double>(hidden)); }
  std::size_t parameter_count() const {
    return inputs * hidden + hidden + outputs * hidden + outputs;
  }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

using ActionValues = std::array<double, kNumActions>;

/// Intermediate values of one forward pass, reused by the backward pass.
struct ForwardPass {
  std::vector<std::uint32_t> active;  // indices of non-zero inputs
  std::vector<double> scaled;         // input_gain * x at those indices
  std::vector<double> pre;            // z
  std::vector<double> hidden;         // h
  ActionValues out{};
};

class ValueNet {
public:
  ValueNet() = default;

  static ValueNet zeros(const Architecture& arch) {
    ValueNet n;
    n.arch_ = arch;
    n.w1_.assign(arch.inputs * arch.hidden, 0.0);
    n.b1_.assign(arch.hidden, 0.0);
    n.w2_.assign(Architecture::outputs * arch.hidden, 0.0);
    n.b2_.assign(Architecture::outputs, 0.0);
    return n;
  }

  /// He-style seeded initialization (gains folded into the layer maps).
  static ValueNet initialized(const Architecture& arch, std::uint64_t seed) {
    ValueNet n = zeros(arch);
    Rng rng(mix_seed(seed, 0x6e6574));
    for (double& w : n.w1_) w = arch.hidden_init_std * rng.normal();
    for (double& b : n.b1_) b = arch.hidden_bias_init;
    for (double& w : n.w2_) w = arch.output_init_std * rng.normal();
    return n;
  }

  const Architecture& architecture() const { return arch_; }

  ForwardPass evaluate(std::span<const double> x) const {
    if (x.size() != arch_.inputs)
      throw PreconditionError("input size " + std::to_string(x.size()) + " does not match " +
                              std::to_string(arch_.inputs));
    const std::size_t H = arch_.hidden;
    ForwardPass fp;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] != 0.0) {
        fp.active.push_back(static_cast<std::uint32_t>(i));
        fp.scaled.push_back(arch_.input_gain * x[i]);
      }
    }
    fp.pre = b1_;
    for (std::size_t k = 0; k < fp.active.size(); ++k) {
      const double v = fp.scaled[k];
      const double* row = &w1_[fp.active[k] * H];
      for (std::size_t j = 0; j < H; ++j) fp.pre[j] += v * row[j];
    }
    fp.hidden.resize(H);
    for (std::size_t j = 0; j < H; ++j) fp.hidden[j] = activate(fp.pre[j]);

    const double g = arch_.hidden_gain();
    for (std::size_t a = 0; a < Architecture::outputs; ++a) {
      const double* row = &w2_[a * H];
      double acc = 0.0;
      for (std::size_t j = 0; j < H; ++j) acc += row[j] * fp.hidden[j];
      fp.out[a] = arch_.value_scale * ((arch_.output_bias ? b2_[a] : 0.0) + g * acc);
      if (!std::isfinite(fp.out[a]))
        throw NumericError("non-finite network output " + std::to_string(fp.out[a]) +
                           " for action " + std::to_string(a) + " (" +
                           std::to_string(fp.active.size()) + " active inputs)");
    }
    return fp;
  }

  ActionValues forward(std::span<const double> x) const { return evaluate(x).out; }

  /// theta += coef * d out[action] / d theta, using the cached forward pass.
  void add_gradient(const ForwardPass& fp, std::size_t action, double coef) {
    if (coef == 0.0) return;
    const std::size_t H = arch_.hidden;
    const double K = arch_.value_scale;
    const double g = arch_.hidden_gain();
    double* w2 = &w2_[action * H];

    dz_.resize(H);
    for (std::size_t j = 0; j < H; ++j)
      dz_[j] = coef * K * g * w2[j] * activation_slope(fp.pre[j]);

    if (arch_.output_bias) b2_[action] += coef * K;
    for (std::size_t j = 0; j < H; ++j) w2[j] += coef * K * g * fp.hidden[j];
    for (std::size_t j = 0; j < H; ++j) b1_[j] += dz_[j];
    for (std::size_t k = 0; k < fp.active.size(); ++k) {
      const double v = fp.scaled[k];
      double* row = &w1_[fp.active[k] * H];
      for (std::size_t j = 0; j < H; ++j) row[j] += dz_[j] * v;
    }
  }

  /// Dense gradient of out[action] in flat parameter order.
  std::vector<double> gradient(std::span<const double> x, std::size_t action) const {
    ValueNet probe = zeros(arch_);
    probe.w2_ = w2_;
    const ForwardPass fp = evaluate(x);
    probe.add_gradient(fp, action, 1.0);
    // add_gradient adds onto W2 in place; recover the pure increment.
    for (std::size_t i = 0; i < w2_.size(); ++i) probe.w2_[i] -= w2_[i];
    return probe.flat();
  }

  // Flat parameter order: W1, b1, W2, b2.
  std::size_t parameter_count() const { return arch_.parameter_count(); }

  double& parameter(std::size_t i) { return const_cast<double&>(std::as_const(*this).parameter(i)); }
  const double& parameter(std::size_t i) const {
    if (i < w1_.size()) return w1_[i];
    i -= w1_.size();
    if (i < b1_.size()) return b1_[i];
    i -= b1_.size();
    if (i < w2_.size()) return w2_[i];
    i -= w2_.size();
    return b2_.at(i);
  }

  std::vector<double> flat() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    out.insert(out.end(), w1_.begin(), w1_.end());
    out.insert(out.end(), b1_.begin(), b1_.end());
    out.insert(out.end(), w2_.begin(), w2_.end());
    out.insert(out.end(), b2_.begin(), b2_.end());
    return out;
  }

  void assign_flat(std::span<const double> values) {
    if (values.size() != parameter_count()) throw LoadError("parameter count mismatch");
    auto it = values.begin();
    auto take = [&](std::vector<double>& dst) {
      std::copy(it, it + static_cast<std::ptrdiff_t>(dst.size()), dst.begin());
      it += static_cast<std::ptrdiff_t>(dst.size());
    };
    take(w1_);
    take(b1_);
    take(w2_);
    take(b2_);
  }

  const std::vector<double>& w1() const { return w1_; }
  const std::vector<double>& b1() const { return b1_; }
  const std::vector<double>& w2() const { return w2_; }
  const std::vector<double>& b2() const { return b2_; }

  bool all_finite() const {
    for (std::size_t i = 0; i < parameter_count(); ++i)
      if (!std::isfinite(parameter(i))) return false;
    return true;
  }

  friend bool operator==(const ValueNet& a, const ValueNet& b) {
    return a.arch_ == b.arch_ && a.w1_ == b.w1_ && a.b1_ == b.b1_ && a.w2_ == b.w2_ &&
           a.b2_ == b.b2_;
  }

private:
  double activate(double z) const {
    return arch_.activation == Activation::ReLU ? (z > 0.0 ? z : 0.0) : z;
  }
  double activation_slope(double z) const {
    return arch_.activation == Activation::ReLU ? (z > 0.0 ? 1.0 : 0.0) : 1.0;
  }

  Architecture arch_;
  std::vector<double> w1_, b1_, w2_, b2_;
  std::vector<double> dz_;  // scratch
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t checked = 0;
  std::size_t worst_parameter = 0;
};

/// Compares analytic d out[a] / d theta against central differences
/// (f(theta+h) - f(theta-h)) / 2h on `samples` random (parameter, action)
/// pairs. Relative error is |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
/// First-layer weights are sampled among non-zero inputs when there are any.
inline GradCheckReport grad_check(const ValueNet& net, std::span<const double> x, double h,
                                  std::size_t samples, std::uint64_t seed) {
  if (!(h > 0.0)) throw PreconditionError("grad_check: step must be positive");
  GradCheckReport rep;
  Rng rng(mix_seed(seed, 0x67726164));
  ValueNet probe = net;
  const Architecture& arch = net.architecture();
  const std::size_t w1_size = arch.inputs * arch.hidden;

  std::vector<std::uint32_t> active;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] != 0.0) active.push_back(static_cast<std::uint32_t>(i));

  std::array<std::vector<double>, kNumActions> analytic;
  for (std::size_t a = 0; a < kNumActions; ++a) analytic[a] = net.gradient(x, a);

  for (std::size_t s = 0; s < samples; ++s) {
    const std::size_t a = rng.index(kNumActions);
    std::size_t p;
    if (rng.uniform() < 0.5 && !active.empty()) {
      p = active[rng.index(active.size())] * arch.hidden + rng.index(arch.hidden);
    } else {
      p = w1_size + rng.index(net.parameter_count() - w1_size);
    }
    const double saved = probe.parameter(p);
    probe.parameter(p) = saved + h;
    const double up = probe.forward(x)[a];
    probe.parameter(p) = saved - h;
    const double down = probe.forward(x)[a];
    probe.parameter(p) = saved;

    const double numeric = (up - down) / (2.0 * h);
    const double exact = analytic[a][p];
    const double abs_err = std::abs(exact - numeric);
    const double rel = abs_err / std::max({std::abs(exact), std::abs(numeric), 1e-6});
    rep.max_absolute_error = std::max(rep.max_absolute_error, abs_err);
    if (rel > rep.max_relative_error) {
      rep.max_relative_error = rel;
      rep.worst_parameter = p;
    }
    ++rep.checked;
  }
  return rep;
}

}  // namespace xrl
