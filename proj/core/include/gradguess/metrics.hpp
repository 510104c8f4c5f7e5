#pragma once

#include <string>
#include <utility>

#include "gradguess/guess.hpp"
#include "gradguess/linalg.hpp"

namespace gg {

/// One row of experiment output; streamed to CSV by the harness.
struct MetricRecord {
  std::string run_id;
  std::uint64_t seed = 0;
  long epoch = -1;
  long step = -1;
  std::string method;
  std::string metric;
  int layer = -1;  // -1 = not layer-specific
  double value = 0.0;
};

template <typename T>
T cosine(const GradEstimate<T>& a, const GradEstimate<T>& b) {
  const T na = est_norm(a), nb = est_norm(b);
  if (!(na > T{0}) || !(nb > T{0}))
    throw std::invalid_argument("cosine_similarity: zero-norm input");
  return est_dot(a, b) / (na * nb);
}

template <typename T>
T cosine_similarity(const GradEstimate<T>& estimate, const Gradients<T>& oracle) {
  return cosine(estimate, grads_to_estimate(oracle));
}

template <typename T>
std::vector<T> cosine_per_layer(const GradEstimate<T>& estimate, const Gradients<T>& oracle) {
  std::vector<T> out;
  for (std::size_t i = 0; i < estimate.weights.size(); ++i) {
    const T na = frob_norm(estimate.weights[i]);
    const T nb = frob_norm(oracle.weight_grads[i]);
    if (!(na > T{0}) || !(nb > T{0}))
      throw std::invalid_argument("cosine_similarity: zero-norm layer " + std::to_string(i));
    out.push_back(frob_dot(estimate.weights[i], oracle.weight_grads[i]) / (na * nb));
  }
  return out;
}

/// exp(entropy) of the normalized singular-value distribution; a
/// continuous proxy for matrix rank.
template <typename T>
double effective_rank_from_sigma(const Vec<T>& sigma) {
  double total = 0;
  for (std::size_t i = 0; i < sigma.size(); ++i) total += sigma[i];
  if (!(total > 0)) throw std::invalid_argument("effective_rank: zero spectrum");
  double entropy = 0;
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    const double p = sigma[i] / total;
    if (p > 0) entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

template <typename T>
double effective_rank(const Mat<T>& a) {
  return effective_rank_from_sigma(svd(a).singular_values);
}

/// Cosine of replicate-averaged estimates against the oracle at each k,
/// computed over a single running sum so total cost is O(max k).
template <typename T>
std::vector<std::pair<std::size_t, double>> replication_curve(
    const GuessMethod& method, const MlpParams<T>& params, const ForwardTrace<T>& trace,
    const std::vector<std::size_t>& ks, RngStream& rng, const Gradients<T>& oracle) {
  std::vector<Mat<T>> prepared;
  const std::vector<Mat<T>>* prepared_ptr = nullptr;
  if (method.kind == GuessKind::SvdPowerWT) {
    prepared = svd_power_weights(params, method.svd_power, method.preserve_top_sigma);
    prepared_ptr = &prepared;
  }
  const GradEstimate<T> oracle_est = grads_to_estimate(oracle);
  std::size_t max_k = 0;
  for (std::size_t k : ks) max_k = std::max(max_k, k);

  GradEstimate<T> sum = zero_like(params);
  const std::size_t B = trace.batch_size();
  std::vector<std::pair<std::size_t, double>> curve;
  std::size_t next = 0;
  for (std::size_t r = 1; r <= max_k; ++r) {
    GuessSet<T> gs = generate_guess(method, params, trace, rng, &oracle, prepared_ptr);
    if (gs.weight_dir) {
      const T jvp = jvp_weight(params, trace, *gs.weight_dir);
      est_axpy(sum, jvp, *gs.weight_dir);
    } else {
      const Vec<T> jvps = jvp_preact(params, trace, gs.preact);
      for (auto& g : gs.preact)
        for (std::size_t b = 0; b < B; ++b) {
          T* row = g.row_ptr(b);
          for (std::size_t j = 0; j < g.cols; ++j) row[j] *= jvps[b];
        }
      est_axpy(sum, T{1}, assemble_weight_update(trace, gs.preact, !params.biases.empty()));
    }
    while (next < ks.size() && ks[next] == r) {
      curve.emplace_back(r, static_cast<double>(cosine(sum, oracle_est)));
      ++next;
    }
  }
  return curve;
}

template <typename T>
struct OneStepResult {
  double ratio = 0.0;         // method best reduction / backprop best reduction
  double method_best = 0.0;   // over the step-size grid
  double oracle_best = 0.0;
  bool skipped = false;       // backprop reduction <= 0; ratio undefined
};

/// Best loss reduction over a step-size grid, relative to backprop's
/// best reduction from the same starting params on the same batch.
template <typename T>
OneStepResult<T> one_step_effectiveness(const GuessMethod& method, const MlpParams<T>& params,
                                        const Mat<T>& batch, const std::vector<int>& labels,
                                        RngStream& rng,
                                        const std::vector<double>& step_grid =
                                            {1e-5, 1e-4, 1e-3, 1e-2, 1e-1},
                                        std::size_t replicates = 1) {
  const ForwardTrace<T> trace = forward(params, batch, labels);
  const Gradients<T> oracle = backprop(params, trace);

  auto best_reduction = [&](const GradEstimate<T>& dir) {
    double best = -std::numeric_limits<double>::infinity();
    for (double h : step_grid) {
      MlpParams<T> moved = params;
      for (std::size_t i = 0; i < moved.weights.size(); ++i)
        axpy_inplace(moved.weights[i], static_cast<T>(-h), dir.weights[i]);
      for (std::size_t i = 0; i < moved.biases.size(); ++i)
        for (std::size_t j = 0; j < moved.biases[i].size(); ++j)
          moved.biases[i][j] -= static_cast<T>(h) * dir.biases[i][j];
      const ForwardTrace<T> after = forward(moved, batch, labels);
      best = std::max(best, static_cast<double>(trace.mean_loss - after.mean_loss));
    }
    return best;
  };

  OneStepResult<T> out;
  out.oracle_best = best_reduction(grads_to_estimate(oracle));
  if (!(out.oracle_best > 0)) {
    out.skipped = true;
    return out;
  }
  const GradEstimate<T> est =
      method.kind == GuessKind::Backprop
          ? grads_to_estimate(oracle)
          : estimate_gradient(method, params, trace, rng, replicates, &oracle);
  out.method_best = best_reduction(est);
  out.ratio = out.method_best / out.oracle_best;
  return out;
}

struct SubspaceReport {
  int layer = -1;
  std::size_t basis_size = 0;
  double activation_cosine = 0.0;  // gradient vs projection onto PCA basis
  double random_cosine = 0.0;      // same for a random orthonormal basis
  bool truncated = false;          // m exceeded the available rank
};

/// Cosine between a gradient vector and its projection onto the top-m
/// PCA components of the given activations, against an m-dim random
/// orthonormal baseline.
template <typename T>
std::vector<SubspaceReport> subspace_alignment(const Mat<T>& activations, const Vec<T>& grad,
                                               const std::vector<std::size_t>& m_grid,
                                               RngStream& rng, bool center = true,
                                               int layer = -1) {
  const std::size_t n = activations.cols;
  if (grad.size() != n) throw std::invalid_argument("subspace_alignment: dimension mismatch");
  Mat<T> centered = activations;
  if (center) {
    for (std::size_t j = 0; j < n; ++j) {
      T mean{0};
      for (std::size_t i = 0; i < centered.rows; ++i) mean += centered(i, j);
      mean /= static_cast<T>(centered.rows);
      for (std::size_t i = 0; i < centered.rows; ++i) centered(i, j) -= mean;
    }
  }
  const SvdResult<T> pca = svd(centered);
  std::size_t rank = 0;
  const T rank_tol = pca.singular_values[0] * T(1e-6);
  for (std::size_t i = 0; i < pca.singular_values.size(); ++i)
    if (pca.singular_values[i] > rank_tol) ++rank;

  const T gnorm = norm(grad);
  if (!(gnorm > T{0})) throw std::invalid_argument("subspace_alignment: zero gradient");

  std::size_t max_m = 0;
  for (std::size_t m : m_grid) max_m = std::max(m, max_m);
  std::vector<Vec<T>> random_dirs;
  for (std::size_t i = 0; i < max_m; ++i) random_dirs.push_back(randn<T>(rng, n));
  const auto random_basis = gram_schmidt(random_dirs);

  std::vector<SubspaceReport> reports;
  for (std::size_t m : m_grid) {
    SubspaceReport rep;
    rep.layer = layer;
    rep.basis_size = std::min(m, rank);
    rep.truncated = m > rank;
    T act_sq{0};
    for (std::size_t c = 0; c < rep.basis_size; ++c) {
      T proj{0};
      for (std::size_t j = 0; j < n; ++j) proj += pca.v_t(c, j) * grad[j];
      act_sq += proj * proj;
    }
    rep.activation_cosine = std::sqrt(static_cast<double>(act_sq)) / gnorm;
    T rand_sq{0};
    const std::size_t rm = std::min(m, random_basis.basis.size());
    for (std::size_t c = 0; c < rm; ++c) {
      const T proj = dot(random_basis.basis[c], grad);
      rand_sq += proj * proj;
    }
    rep.random_cosine = std::sqrt(static_cast<double>(rand_sq)) / gnorm;
    reports.push_back(rep);
  }
  return reports;
}

struct BiasToyResult {
  double measured = 0.0;   // |E[g_hat] - g| by Monte Carlo
  double predicted = 0.0;  // (4^k - 1) |g|
};

/// Toy accumulated-Jacobian chain J = 2^k I: samples y = J n, estimates
/// E[(g.y) y], and compares the bias norm to the closed form.
inline BiasToyResult bias_toy_chain(int k, std::size_t dim, std::size_t replicates,
                                    RngStream& rng) {
  if (k < 0) throw std::invalid_argument("bias_toy_chain: k must be >= 0");
  Vec<double> g = randn<double>(rng, dim);
  const double jscale = std::pow(2.0, k);
  Vec<double> mean(dim);
  for (std::size_t r = 0; r < replicates; ++r) {
    Vec<double> y = randn<double>(rng, dim);
    for (auto& x : y.data) x *= jscale;
    const double jvp = dot(g, y);
    for (std::size_t j = 0; j < dim; ++j) mean[j] += jvp * y[j];
  }
  for (auto& x : mean.data) x /= static_cast<double>(replicates);
  Vec<double> bias = mean;
  for (std::size_t j = 0; j < dim; ++j) bias[j] -= g[j];
  BiasToyResult out;
  out.measured = norm(bias);
  out.predicted = (std::pow(4.0, k) - 1.0) * norm(g);
  return out;
}

}  // namespace gg
