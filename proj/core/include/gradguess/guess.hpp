#pragma once

#include <algorithm>
#include <optional>
#include <sstream>

#include "gradguess/linalg.hpp"
#include "gradguess/mlp.hpp"

namespace gg {

enum class GuessKind {
  Backprop,  // oracle baseline, used by the harness for comparison runs
  DirectionalDescent,
  ActivationPerturbation,
  ActivationMixing,
  WTranspose,
  LDownstream,
  SelfSharpening,
  SvdPowerWT,
  SlerpMatched,
};

enum class NormScope { None, PerExample, PerLayer };

struct GuessMethod {
  GuessKind kind = GuessKind::DirectionalDescent;
  int downstream = 1;        // LDownstream depth l
  double svd_power = 1.0;    // SvdPowerWT exponent
  double slerp_theta = 0.0;  // SlerpMatched angle, radians
  bool preserve_top_sigma = true;  // SvdPowerWT: rescale spectrum so sigma_1 is unchanged
  NormScope norm_scope;

  GuessMethod() : norm_scope(NormScope::None) {}
  explicit GuessMethod(GuessKind k) : kind(k), norm_scope(default_norm(k)) {}

  static NormScope default_norm(GuessKind k) {
    switch (k) {
      case GuessKind::ActivationMixing:
      case GuessKind::WTranspose:
      case GuessKind::LDownstream:
      case GuessKind::SvdPowerWT:
        return NormScope::PerExample;
      default:
        return NormScope::None;
    }
  }

  // SlerpMatched and Backprop read the exact gradient; they are controls,
  // never backprop-free methods.
  bool uses_oracle() const {
    return kind == GuessKind::Backprop || kind == GuessKind::SlerpMatched;
  }

  void validate() const {
    if (kind == GuessKind::LDownstream && downstream < 1)
      throw std::invalid_argument("GuessMethod: downstream l must be >= 1");
    if (kind == GuessKind::SvdPowerWT && !(svd_power > 0))
      throw std::invalid_argument("GuessMethod: svd power must be > 0");
    if (kind == GuessKind::SlerpMatched &&
        !(slerp_theta >= 0.0 && slerp_theta <= 1.5707963267948966 + 1e-12))
      throw std::invalid_argument("GuessMethod: slerp theta must be in [0, pi/2]");
  }

  std::string describe() const {
    std::ostringstream os;
    switch (kind) {
      case GuessKind::Backprop: return "backprop[oracle]";
      case GuessKind::DirectionalDescent: return "directional";
      case GuessKind::ActivationPerturbation: return "act_perturb";
      case GuessKind::ActivationMixing: os << "mixing"; break;
      case GuessKind::WTranspose: os << "w_transpose"; break;
      case GuessKind::LDownstream: os << "downstream:l=" << downstream; break;
      case GuessKind::SelfSharpening: return "self_sharpen:noise=uniform,last=error";
      case GuessKind::SvdPowerWT:
        os << "svd_power:p=" << svd_power << ",keep_s1=" << (preserve_top_sigma ? 1 : 0);
        break;
      case GuessKind::SlerpMatched: os << "slerp[oracle]:theta=" << slerp_theta; break;
    }
    os << ",norm=" << (norm_scope == NormScope::PerExample ? "example"
                       : norm_scope == NormScope::PerLayer ? "layer" : "none");
    return os.str();
  }

  static GuessMethod parse(const std::string& text);
};

/// One draw from a guess generator. Exactly one of weight_dir / preact
/// is populated: weight space for directional descent and slerp,
/// per-layer per-example pre-activation tangents for everything else.
template <typename T>
struct GuessSet {
  std::optional<GradEstimate<T>> weight_dir;
  std::vector<Mat<T>> preact;  // per layer, B x dims[i+1]
  bool fell_back = false;      // mixing with B=1 degrades to perturbation
};

namespace detail {

template <typename T>
void normalize_guess(std::vector<Mat<T>>& preact, NormScope scope) {
  if (scope == NormScope::None) return;
  const std::size_t B = preact.front().rows;
  for (std::size_t b = 0; b < B; ++b) {
    if (scope == NormScope::PerExample) {
      T sq{0};
      for (const auto& g : preact) {
        const T* row = g.row_ptr(b);
        for (std::size_t j = 0; j < g.cols; ++j) sq += row[j] * row[j];
      }
      const T nrm = std::sqrt(sq);
      if (nrm > T{0})
        for (auto& g : preact) {
          T* row = g.row_ptr(b);
          for (std::size_t j = 0; j < g.cols; ++j) row[j] /= nrm;
        }
    } else {
      for (auto& g : preact) {
        T* row = g.row_ptr(b);
        T sq{0};
        for (std::size_t j = 0; j < g.cols; ++j) sq += row[j] * row[j];
        const T nrm = std::sqrt(sq);
        if (nrm > T{0})
          for (std::size_t j = 0; j < g.cols; ++j) row[j] /= nrm;
      }
    }
  }
}

// Noise at pre-activations of layer min(i+l, k-1), backpropagated down
// to layer i through the given effective weights and stored masks.
// Shared by W^T (l=1), general downstream, SVD-power, self-sharpening.
template <typename T>
std::vector<Mat<T>> downstream_preact(const std::vector<Mat<T>>& eff_weights,
                                      const ForwardTrace<T>& trace, RngStream& rng, int l,
                                      bool uniform_noise, bool last_layer_true_error) {
  const std::size_t k = eff_weights.size();
  const std::size_t B = trace.batch_size();
  std::vector<Mat<T>> preact;
  preact.reserve(k);
  for (std::size_t i = 0; i + 1 < k; ++i) {
    const std::size_t guess_at = std::min(i + static_cast<std::size_t>(l), k - 1);
    Mat<T> g(B, trace.preacts[i].cols);
    for (std::size_t b = 0; b < B; ++b) {
      Vec<T> v = uniform_noise ? randu<T>(rng, trace.preacts[guess_at].cols)
                               : randn<T>(rng, trace.preacts[guess_at].cols);
      for (std::size_t j = guess_at; j > i; --j) {
        v = matvec_t(eff_weights[j], v);
        const T* mrow = trace.masks[j - 1].row_ptr(b);
        for (std::size_t t = 0; t < v.size(); ++t) v[t] *= mrow[t];
      }
      std::copy(v.data.begin(), v.data.end(), g.row_ptr(b));
    }
    preact.push_back(std::move(g));
  }
  // Last layer: no downstream structure exists; plain noise, or the true
  // softmax error when the caller asks for it (local information).
  Mat<T> last(B, trace.preacts.back().cols);
  if (last_layer_true_error) {
    last = trace.probs;
    for (std::size_t b = 0; b < B; ++b)
      last(b, static_cast<std::size_t>(trace.labels[b])) -= T{1};
  } else {
    for (std::size_t b = 0; b < B; ++b) {
      Vec<T> v = randn<T>(rng, last.cols);
      std::copy(v.data.begin(), v.data.end(), last.row_ptr(b));
    }
  }
  preact.push_back(std::move(last));
  return preact;
}

}  // namespace detail

/// Isotropic weight-space direction, entries N(0, 1/N) variance so
/// E[|eps|^2] = 1 regardless of parameter count.
template <typename T>
GuessSet<T> gen_directional(const MlpParams<T>& params, RngStream& rng) {
  GuessSet<T> gs;
  GradEstimate<T> dir = zero_like(params);
  const T scale = T{1} / std::sqrt(static_cast<T>(params.param_count()));
  for (auto& w : dir.weights)
    for (auto& x : w.data) x = static_cast<T>(rng.normal()) * scale;
  for (auto& b : dir.biases)
    for (auto& x : b.data) x = static_cast<T>(rng.normal()) * scale;
  gs.weight_dir = std::move(dir);
  return gs;
}

/// i.i.d. N(0,1) tangent on every pre-activation, every layer.
template <typename T>
GuessSet<T> gen_activation_perturbation(const ForwardTrace<T>& trace, RngStream& rng) {
  GuessSet<T> gs;
  for (const auto& s : trace.preacts) gs.preact.push_back(randn_mat<T>(rng, s.rows, s.cols));
  return gs;
}

/// Random mixtures of the batch's own post-activations (one mixture per
/// layer, shared across the batch), masked per example, then normalized.
template <typename T>
GuessSet<T> gen_activation_mixing(const ForwardTrace<T>& trace, RngStream& rng,
                                  NormScope norm_scope = NormScope::PerExample) {
  const std::size_t B = trace.batch_size();
  if (B < 2) {
    GuessSet<T> gs = gen_activation_perturbation(trace, rng);
    gs.fell_back = true;
    return gs;
  }
  const std::size_t k = trace.preacts.size();
  GuessSet<T> gs;
  for (std::size_t i = 0; i + 1 < k; ++i) {
    const Vec<T> alpha = randn<T>(rng, B);
    const Mat<T>& acts = trace.postacts[i];  // x_{i+1} = relu(s_i)
    Vec<T> mixture(acts.cols);
    for (std::size_t b = 0; b < B; ++b) {
      const T* row = acts.row_ptr(b);
      for (std::size_t j = 0; j < acts.cols; ++j) mixture[j] += alpha[b] * row[j];
    }
    Mat<T> g(B, acts.cols);
    for (std::size_t b = 0; b < B; ++b) {
      const T* mrow = trace.masks[i].row_ptr(b);
      T* grow = g.row_ptr(b);
      for (std::size_t j = 0; j < acts.cols; ++j) grow[j] = mixture[j] * mrow[j];
    }
    gs.preact.push_back(std::move(g));
  }
  gs.preact.push_back(randn_mat<T>(rng, B, trace.preacts.back().cols));
  detail::normalize_guess(gs.preact, norm_scope);
  return gs;
}

/// Per-layer guess mask * (W_{i+1}^T n), n ~ N(0,1): the combined
/// architecture-aware method. Identical in law to 1-layer downstream.
template <typename T>
GuessSet<T> gen_w_transpose(const MlpParams<T>& params, const ForwardTrace<T>& trace,
                            RngStream& rng, NormScope norm_scope = NormScope::PerExample) {
  GuessSet<T> gs;
  gs.preact = detail::downstream_preact(params.weights, trace, rng, 1, false, false);
  detail::normalize_guess(gs.preact, norm_scope);
  return gs;
}

/// Noise placed l layers downstream and backpropagated through the
/// stored masks and weights (partial backpropagation). The guess point
/// clamps at the logits, so l = depth-1 places every layer's noise there.
template <typename T>
GuessSet<T> gen_l_downstream(const MlpParams<T>& params, const ForwardTrace<T>& trace,
                             RngStream& rng, int l,
                             NormScope norm_scope = NormScope::PerExample) {
  if (l < 1 || static_cast<std::size_t>(l) > params.config.depth - 1)
    throw std::invalid_argument("gen_l_downstream: l must be in [1, depth-1]");
  GuessSet<T> gs;
  gs.preact = detail::downstream_preact(params.weights, trace, rng, l, false, false);
  detail::normalize_guess(gs.preact, norm_scope);
  return gs;
}

/// Uniform-noise 1-layer downstream with the true last-layer error
/// vector (softmax - onehot). Not normalized: the last layer must stay
/// exactly the error vector.
template <typename T>
GuessSet<T> gen_self_sharpening(const MlpParams<T>& params, const ForwardTrace<T>& trace,
                                RngStream& rng) {
  GuessSet<T> gs;
  gs.preact = detail::downstream_preact(params.weights, trace, rng, 1, true, true);
  return gs;
}

/// Effective weights for SVD-power guessing: W~ = U diag(sigma^p) V^T,
/// optionally rescaled so the top singular value is preserved.
template <typename T>
std::vector<Mat<T>> svd_power_weights(const MlpParams<T>& params, double power,
                                      bool preserve_top_sigma = true) {
  std::vector<Mat<T>> mats;
  mats.reserve(params.weights.size());
  for (const auto& w : params.weights) {
    SvdResult<T> dec = svd(w);
    Vec<T>& s = dec.singular_values;
    const double top = static_cast<double>(s[0]);
    double new_top = top > 0 ? std::pow(top, power) : 0.0;
    const double rescale = (preserve_top_sigma && new_top > 0) ? top / new_top : 1.0;
    Mat<T> us = dec.u;
    for (std::size_t j = 0; j < s.size(); ++j) {
      const double sj = std::pow(static_cast<double>(s[j]), power) * rescale;
      for (std::size_t i = 0; i < us.rows; ++i) us(i, j) *= static_cast<T>(sj);
    }
    mats.push_back(matmul(us, dec.v_t));
  }
  return mats;
}

template <typename T>
GuessSet<T> gen_svd_power(const MlpParams<T>& params, const ForwardTrace<T>& trace,
                          RngStream& rng, double power, bool preserve_top_sigma = true,
                          NormScope norm_scope = NormScope::PerExample) {
  if (!(power >= 0.1 && power <= 4.0))
    throw std::invalid_argument("gen_svd_power: power must be in [0.1, 4]");
  const auto mats = svd_power_weights(params, power, preserve_top_sigma);
  GuessSet<T> gs;
  gs.preact = detail::downstream_preact(mats, trace, rng, 1, false, false);
  detail::normalize_guess(gs.preact, norm_scope);
  return gs;
}

// Same as gen_svd_power but with the modified weights precomputed once
// (they only change when params change, not per replicate).
template <typename T>
GuessSet<T> gen_svd_power_prepared(const std::vector<Mat<T>>& eff_weights,
                                   const ForwardTrace<T>& trace, RngStream& rng,
                                   NormScope norm_scope = NormScope::PerExample) {
  GuessSet<T> gs;
  gs.preact = detail::downstream_preact(eff_weights, trace, rng, 1, false, false);
  detail::normalize_guess(gs.preact, norm_scope);
  return gs;
}

/// Measurement control with prescribed cosine to the oracle gradient:
/// cos(theta) g_par + sin(theta) g_perp. Oracle-using by construction.
template <typename T>
GuessSet<T> gen_slerp_matched(const Gradients<T>& oracle, RngStream& rng, double theta) {
  GradEstimate<T> g_par = grads_to_estimate(oracle);
  const T gnorm = est_norm(g_par);
  if (!(gnorm > T{0})) throw std::invalid_argument("gen_slerp_matched: zero oracle gradient");
  est_scale(g_par, T{1} / gnorm);

  GradEstimate<T> perp;
  for (const auto& w : g_par.weights) {
    Mat<T> r(w.rows, w.cols);
    for (auto& x : r.data) x = static_cast<T>(rng.normal());
    perp.weights.push_back(std::move(r));
  }
  for (const auto& b : g_par.biases) {
    Vec<T> r(b.size());
    for (auto& x : r.data) x = static_cast<T>(rng.normal());
    perp.biases.push_back(std::move(r));
  }
  est_axpy(perp, -est_dot(perp, g_par), g_par);
  const T pnorm = est_norm(perp);
  if (!(pnorm > T{0})) throw std::runtime_error("gen_slerp_matched: degenerate draw");
  est_scale(perp, T{1} / pnorm);

  est_scale(g_par, static_cast<T>(std::cos(theta)));
  est_axpy(g_par, static_cast<T>(std::sin(theta)), perp);
  GuessSet<T> gs;
  gs.weight_dir = std::move(g_par);
  return gs;
}

template <typename T>
GuessSet<T> generate_guess(const GuessMethod& m, const MlpParams<T>& params,
                           const ForwardTrace<T>& trace, RngStream& rng,
                           const Gradients<T>* oracle = nullptr,
                           const std::vector<Mat<T>>* prepared_svd = nullptr) {
  m.validate();
  switch (m.kind) {
    case GuessKind::DirectionalDescent:
      return gen_directional(params, rng);
    case GuessKind::ActivationPerturbation:
      return gen_activation_perturbation(trace, rng);
    case GuessKind::ActivationMixing:
      return gen_activation_mixing(trace, rng, m.norm_scope);
    case GuessKind::WTranspose:
      return gen_w_transpose(params, trace, rng, m.norm_scope);
    case GuessKind::LDownstream:
      return gen_l_downstream(params, trace, rng, m.downstream, m.norm_scope);
    case GuessKind::SelfSharpening:
      return gen_self_sharpening(params, trace, rng);
    case GuessKind::SvdPowerWT:
      if (prepared_svd) return gen_svd_power_prepared(*prepared_svd, trace, rng, m.norm_scope);
      return gen_svd_power(params, trace, rng, m.svd_power, m.preserve_top_sigma, m.norm_scope);
    case GuessKind::SlerpMatched:
      if (!oracle) throw std::invalid_argument("slerp_matched requires the oracle gradient");
      return gen_slerp_matched(*oracle, rng, m.slerp_theta);
    case GuessKind::Backprop:
      throw std::invalid_argument("backprop is not a guess generator");
  }
  throw std::logic_error("generate_guess: unreachable");
}

/// Replicate-averaged gradient estimate: draw a guess, measure its JVP,
/// scale the guess by the JVP, convert to weight space, and average.
template <typename T>
GradEstimate<T> estimate_gradient(const GuessMethod& m, const MlpParams<T>& params,
                                  const ForwardTrace<T>& trace, RngStream& rng,
                                  std::size_t replicates = 1,
                                  const Gradients<T>* oracle = nullptr) {
  if (replicates < 1) throw std::invalid_argument("estimate_gradient: replicates must be >= 1");
  std::vector<Mat<T>> prepared;
  const std::vector<Mat<T>>* prepared_ptr = nullptr;
  if (m.kind == GuessKind::SvdPowerWT) {
    prepared = svd_power_weights(params, m.svd_power, m.preserve_top_sigma);
    prepared_ptr = &prepared;
  }

  GradEstimate<T> acc = zero_like(params);
  const std::size_t B = trace.batch_size();
  for (std::size_t r = 0; r < replicates; ++r) {
    GuessSet<T> gs = generate_guess(m, params, trace, rng, oracle, prepared_ptr);
    if (gs.weight_dir) {
      const T jvp = jvp_weight(params, trace, *gs.weight_dir);
      est_axpy(acc, jvp, *gs.weight_dir);
    } else {
      const Vec<T> jvps = jvp_preact(params, trace, gs.preact);
      for (auto& g : gs.preact)
        for (std::size_t b = 0; b < B; ++b) {
          T* row = g.row_ptr(b);
          for (std::size_t j = 0; j < g.cols; ++j) row[j] *= jvps[b];
        }
      GradEstimate<T> upd =
          assemble_weight_update(trace, gs.preact, !params.biases.empty());
      est_axpy(acc, T{1}, upd);
    }
  }
  est_scale(acc, T{1} / static_cast<T>(replicates));
  return acc;
}

inline GuessMethod GuessMethod::parse(const std::string& text) {
  // method strings: backprop, directional, act_perturb, mixing,
  // w_transpose, downstream:l=2, self_sharpen, svd_power:p=2,
  // slerp:theta=1.54 (optionally slerp:cos=0.03)
  auto starts_with = [&](const char* p) { return text.rfind(p, 0) == 0; };
  auto named_value = [&](const char* key) -> double {
    const std::string k = std::string(key) + "=";
    const auto pos = text.find(k);
    if (pos == std::string::npos)
      throw std::invalid_argument("method '" + text + "' is missing " + k + "<value>");
    return std::stod(text.substr(pos + k.size()));
  };
  if (text == "backprop") return GuessMethod(GuessKind::Backprop);
  if (text == "directional") return GuessMethod(GuessKind::DirectionalDescent);
  if (text == "act_perturb") return GuessMethod(GuessKind::ActivationPerturbation);
  if (text == "mixing") return GuessMethod(GuessKind::ActivationMixing);
  if (text == "w_transpose") return GuessMethod(GuessKind::WTranspose);
  if (text == "self_sharpen") return GuessMethod(GuessKind::SelfSharpening);
  if (starts_with("downstream")) {
    GuessMethod m(GuessKind::LDownstream);
    m.downstream = static_cast<int>(named_value("l"));
    m.validate();
    return m;
  }
  if (starts_with("svd_power")) {
    GuessMethod m(GuessKind::SvdPowerWT);
    m.svd_power = named_value("p");
    m.validate();
    return m;
  }
  if (starts_with("slerp")) {
    GuessMethod m(GuessKind::SlerpMatched);
    if (text.find("cos=") != std::string::npos)
      m.slerp_theta = std::acos(named_value("cos"));
    else
      m.slerp_theta = named_value("theta");
    m.validate();
    return m;
  }
  throw std::invalid_argument("unknown guess method '" + text + "'");
}

}  // namespace gg
