#pragma once

#include <optional>
#include <sstream>

#include "gradguess/mlp.hpp"

namespace gg {

struct OptimizerSpec {
  enum class Kind { Sgd, AdamW, StableAdamW };
  Kind kind = Kind::AdamW;
  double momentum = 0.0;  // Sgd only
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  std::string describe() const {
    std::ostringstream os;
    switch (kind) {
      case Kind::Sgd: os << "sgd:momentum=" << momentum; break;
      case Kind::AdamW:
      case Kind::StableAdamW:
        os << (kind == Kind::AdamW ? "adamw" : "stable_adamw") << ":b1=" << beta1
           << ",b2=" << beta2 << ",eps=" << eps << ",wd=" << weight_decay;
        break;
    }
    return os.str();
  }

  static OptimizerSpec parse(const std::string& text) {
    OptimizerSpec s;
    auto starts_with = [&](const char* p) { return text.rfind(p, 0) == 0; };
    if (starts_with("sgd")) {
      s.kind = Kind::Sgd;
      const auto pos = text.find("momentum=");
      if (pos != std::string::npos) s.momentum = std::stod(text.substr(pos + 9));
    } else if (starts_with("stable_adamw")) {
      s.kind = Kind::StableAdamW;
    } else if (starts_with("adamw")) {
      s.kind = Kind::AdamW;
    } else {
      throw std::invalid_argument("unknown optimizer '" + text + "'");
    }
    return s;
  }
};

/// Holds the per-parameter moment buffers; one instance per training run.
template <typename T>
class Optimizer {
 public:
  Optimizer(OptimizerSpec spec, const MlpParams<T>& params) : spec_(spec) {
    if (spec_.kind != OptimizerSpec::Kind::Sgd || spec_.momentum != 0.0)
      m_ = zero_like(params);
    if (spec_.kind != OptimizerSpec::Kind::Sgd) v_ = zero_like(params);
  }

  long step_count() const { return step_; }
  long rejected_count() const { return rejected_; }
  const OptimizerSpec& spec() const { return spec_; }

  /// Applies one update in place. Non-finite estimates are rejected and
  /// counted instead of corrupting the parameters.
  void apply(MlpParams<T>& params, const GradEstimate<T>& estimate, double lr) {
    if (!(lr > 0)) throw std::invalid_argument("apply_update: lr must be > 0");
    if (!est_finite(estimate)) {
      ++rejected_;
      return;
    }
    ++step_;
    switch (spec_.kind) {
      case OptimizerSpec::Kind::Sgd: apply_sgd(params, estimate, lr); break;
      case OptimizerSpec::Kind::AdamW: apply_adamw(params, estimate, lr, false); break;
      case OptimizerSpec::Kind::StableAdamW: apply_adamw(params, estimate, lr, true); break;
    }
  }

 private:
  template <typename Body>
  static void for_each_tensor(MlpParams<T>& params, Body&& body) {
    for (std::size_t i = 0; i < params.weights.size(); ++i)
      body(i, params.weights[i].data);
    for (std::size_t i = 0; i < params.biases.size(); ++i)
      body(params.weights.size() + i, params.biases[i].data);
  }

  std::vector<T>& buffer(GradEstimate<T>& e, std::size_t idx, std::size_t n_weights) {
    return idx < n_weights ? e.weights[idx].data : e.biases[idx - n_weights].data;
  }

  const std::vector<T>& grad_of(const GradEstimate<T>& e, std::size_t idx,
                                std::size_t n_weights) const {
    return idx < n_weights ? e.weights[idx].data : e.biases[idx - n_weights].data;
  }

  void apply_sgd(MlpParams<T>& params, const GradEstimate<T>& est, double lr) {
    const std::size_t nw = params.weights.size();
    for_each_tensor(params, [&](std::size_t idx, std::vector<T>& p) {
      const std::vector<T>& g = grad_of(est, idx, nw);
      if (spec_.momentum != 0.0) {
        std::vector<T>& m = buffer(*m_, idx, nw);
        const T mu = static_cast<T>(spec_.momentum);
        for (std::size_t t = 0; t < p.size(); ++t) {
          m[t] = mu * m[t] + g[t];
          p[t] -= static_cast<T>(lr) * m[t];
        }
      } else {
        for (std::size_t t = 0; t < p.size(); ++t) p[t] -= static_cast<T>(lr) * g[t];
      }
    });
  }

  void apply_adamw(MlpParams<T>& params, const GradEstimate<T>& est, double lr, bool stable) {
    const std::size_t nw = params.weights.size();
    const double b1 = spec_.beta1, b2 = spec_.beta2, eps = spec_.eps;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    for_each_tensor(params, [&](std::size_t idx, std::vector<T>& p) {
      const std::vector<T>& g = grad_of(est, idx, nw);
      std::vector<T>& m = buffer(*m_, idx, nw);
      std::vector<T>& v = buffer(*v_, idx, nw);
      for (std::size_t t = 0; t < p.size(); ++t) {
        m[t] = static_cast<T>(b1 * m[t] + (1.0 - b1) * g[t]);
        v[t] = static_cast<T>(b2 * v[t] + (1.0 - b2) * static_cast<double>(g[t]) * g[t]);
      }
      double lr_t = lr;
      if (stable) {
        // Per-tensor RMS of g^2 / max(v_hat, eps^2), floored at 1,
        // divides the learning rate.
        double sum = 0;
        for (std::size_t t = 0; t < p.size(); ++t) {
          const double vhat = v[t] / bc2;
          const double gt = g[t];
          sum += gt * gt / std::max(vhat, eps * eps);
        }
        const double rms = std::sqrt(sum / static_cast<double>(p.size()));
        lr_t = lr / std::max(1.0, rms);
      }
      for (std::size_t t = 0; t < p.size(); ++t) {
        const double mhat = m[t] / bc1;
        const double vhat = v[t] / bc2;
        // decoupled weight decay
        p[t] -= static_cast<T>(lr_t * spec_.weight_decay * p[t]);
        p[t] -= static_cast<T>(lr_t * mhat / (std::sqrt(vhat) + eps));
      }
    });
  }

  OptimizerSpec spec_;
  std::optional<GradEstimate<T>> m_;
  std::optional<GradEstimate<T>> v_;
  long step_ = 0;
  long rejected_ = 0;
};

}  // namespace gg
