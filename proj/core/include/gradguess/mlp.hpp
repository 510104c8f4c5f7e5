#pragma once

#include <limits>

#include "gradguess/rng.hpp"
#include "gradguess/tensor.hpp"

namespace gg {

struct MlpConfig {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;  // class count
  std::size_t depth = 2;       // number of weight layers
  std::size_t width = 1;       // hidden size
  bool bias_enabled = false;

  // dims[i] is the input dimension of layer i; dims[depth] the logits.
  std::vector<std::size_t> dims() const {
    std::vector<std::size_t> d(depth + 1, width);
    d.front() = input_dim;
    d.back() = output_dim;
    return d;
  }

  void validate() const {
    if (depth < 2) throw std::invalid_argument("MlpConfig: depth must be >= 2");
    if (width < 1 || input_dim < 1 || output_dim < 1)
      throw std::invalid_argument("MlpConfig: dimensions must be >= 1");
  }
};

template <typename T>
struct MlpParams {
  MlpConfig config;
  std::vector<Mat<T>> weights;  // weights[i]: dims[i+1] x dims[i]
  std::vector<Vec<T>> biases;   // empty unless bias_enabled

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& w : weights) n += w.size();
    for (const auto& b : biases) n += b.size();
    return n;
  }
};

/// Weight-space gradient estimate or perturbation direction; shapes
/// mirror MlpParams.
template <typename T>
struct GradEstimate {
  std::vector<Mat<T>> weights;
  std::vector<Vec<T>> biases;
};

template <typename T>
struct ForwardTrace {
  Mat<T> input;                  // B x input_dim
  std::vector<Mat<T>> preacts;   // per layer, B x dims[i+1]; last = logits
  std::vector<Mat<T>> postacts;  // relu(preacts[i]) for i < depth-1
  std::vector<Mat<T>> masks;     // relu_mask(preacts[i]) for i < depth-1
  Mat<T> probs;                  // softmax over logits, B x C
  Vec<T> example_loss;           // per-example cross entropy
  T mean_loss = 0;
  std::vector<int> labels;

  std::size_t batch_size() const { return input.rows; }

  // x_i: activations entering layer i (x_0 = input).
  const Mat<T>& layer_input(std::size_t i) const { return i == 0 ? input : postacts[i - 1]; }
};

template <typename T>
struct Gradients {
  std::vector<Mat<T>> weight_grads;  // d(mean loss)/dW_i
  std::vector<Vec<T>> bias_grads;
  std::vector<Mat<T>> preact_grads;  // per layer, B x dims[i+1]; row b is dL_b/ds_i
};

template <typename T>
MlpParams<T> init_params(const MlpConfig& config, RngStream& rng) {
  config.validate();
  MlpParams<T> p;
  p.config = config;
  const auto dims = config.dims();
  for (std::size_t i = 0; i < config.depth; ++i) {
    const std::size_t fan_in = dims[i];
    const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
    Mat<T> w(dims[i + 1], dims[i]);
    for (auto& x : w.data) x = static_cast<T>(rng.normal() * scale);
    p.weights.push_back(std::move(w));
    if (config.bias_enabled) p.biases.emplace_back(dims[i + 1]);
  }
  return p;
}

namespace detail {

template <typename T>
void add_bias_rows(Mat<T>& s, const Vec<T>& b) {
  for (std::size_t i = 0; i < s.rows; ++i) {
    T* row = s.row_ptr(i);
    for (std::size_t j = 0; j < s.cols; ++j) row[j] += b[j];
  }
}

template <typename T>
void softmax_rows(const Mat<T>& logits, Mat<T>& probs) {
  probs = Mat<T>(logits.rows, logits.cols);
  for (std::size_t b = 0; b < logits.rows; ++b) {
    const T* in = logits.row_ptr(b);
    T* out = probs.row_ptr(b);
    T mx = in[0];
    for (std::size_t j = 1; j < logits.cols; ++j) mx = std::max(mx, in[j]);
    T sum{0};
    for (std::size_t j = 0; j < logits.cols; ++j) {
      out[j] = std::exp(in[j] - mx);
      sum += out[j];
    }
    for (std::size_t j = 0; j < logits.cols; ++j) out[j] /= sum;
  }
}

}  // namespace detail

template <typename T>
ForwardTrace<T> forward(const MlpParams<T>& params, const Mat<T>& batch,
                        const std::vector<int>& labels) {
  const std::size_t k = params.config.depth;
  if (batch.cols != params.config.input_dim)
    throw std::invalid_argument("forward: batch width does not match input_dim");
  if (labels.size() != batch.rows)
    throw std::invalid_argument("forward: label count does not match batch size");

  ForwardTrace<T> trace;
  trace.input = batch;
  trace.labels = labels;

  const Mat<T>* x = &trace.input;
  for (std::size_t i = 0; i < k; ++i) {
    Mat<T> s = matmul_nt(*x, params.weights[i]);
    if (!params.biases.empty()) detail::add_bias_rows(s, params.biases[i]);
    if (!all_finite(s)) throw std::runtime_error("forward: non-finite pre-activation at layer " +
                                                 std::to_string(i));
    trace.preacts.push_back(std::move(s));
    if (i + 1 < k) {
      trace.masks.push_back(relu_mask(trace.preacts.back()));
      trace.postacts.push_back(relu(trace.preacts.back()));
      x = &trace.postacts.back();
    }
  }

  detail::softmax_rows(trace.preacts.back(), trace.probs);
  const std::size_t B = batch.rows;
  trace.example_loss = Vec<T>(B);
  T total{0};
  for (std::size_t b = 0; b < B; ++b) {
    const int y = labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= trace.probs.cols)
      throw std::invalid_argument("forward: label out of range");
    const T p = std::max(trace.probs(b, static_cast<std::size_t>(y)),
                         std::numeric_limits<T>::min());
    trace.example_loss[b] = -std::log(p);
    total += trace.example_loss[b];
  }
  trace.mean_loss = total / static_cast<T>(B);
  return trace;
}

/// Exact gradients of the mean-batch loss. Measurement oracle only;
/// never part of a backprop-free update path.
template <typename T>
Gradients<T> backprop(const MlpParams<T>& params, const ForwardTrace<T>& trace) {
  const std::size_t k = params.config.depth;
  const std::size_t B = trace.batch_size();
  Gradients<T> g;
  g.weight_grads.resize(k);
  g.preact_grads.resize(k);
  if (!params.biases.empty()) g.bias_grads.resize(k);

  // dL_b/ds_{k-1} = softmax - onehot (per-example loss, no 1/B)
  Mat<T> ds = trace.probs;
  for (std::size_t b = 0; b < B; ++b) ds(b, static_cast<std::size_t>(trace.labels[b])) -= T{1};

  for (std::size_t ii = k; ii-- > 0;) {
    g.preact_grads[ii] = ds;
    Mat<T> dw = matmul_tn(ds, trace.layer_input(ii));
    scale_inplace(dw, T{1} / static_cast<T>(B));
    g.weight_grads[ii] = std::move(dw);
    if (!params.biases.empty()) {
      Vec<T> db(ds.cols);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t j = 0; j < ds.cols; ++j) db[j] += ds(b, j);
      for (auto& x : db.data) x /= static_cast<T>(B);
      g.bias_grads[ii] = std::move(db);
    }
    if (ii > 0) {
      Mat<T> dx = matmul(ds, params.weights[ii]);  // dL/dx_i, B x dims[i]
      const Mat<T>& mask = trace.masks[ii - 1];
      for (std::size_t t = 0; t < dx.size(); ++t) dx.data[t] *= mask.data[t];
      ds = std::move(dx);
    }
  }
  return g;
}

/// Directional derivative of the mean loss along a weight-space
/// direction, by layer-by-layer tangent propagation on the cached
/// primal trace. Equals <direction, backprop gradient>.
template <typename T>
T jvp_weight(const MlpParams<T>& params, const ForwardTrace<T>& trace,
             const GradEstimate<T>& direction) {
  const std::size_t k = params.config.depth;
  const std::size_t B = trace.batch_size();
  Mat<T> tx;  // tangent of layer input; starts at zero (inputs fixed)
  Mat<T> ts;
  for (std::size_t i = 0; i < k; ++i) {
    ts = matmul_nt(trace.layer_input(i), direction.weights[i]);
    if (!tx.empty()) {
      Mat<T> prop = matmul_nt(tx, params.weights[i]);
      for (std::size_t t = 0; t < ts.size(); ++t) ts.data[t] += prop.data[t];
    }
    if (!direction.biases.empty()) detail::add_bias_rows(ts, direction.biases[i]);
    if (i + 1 < k) {
      const Mat<T>& mask = trace.masks[i];
      tx = ts;
      for (std::size_t t = 0; t < tx.size(); ++t) tx.data[t] *= mask.data[t];
    }
  }
  // dL/ds_{k-1} contraction, mean over batch
  T acc{0};
  for (std::size_t b = 0; b < B; ++b) {
    const T* prow = trace.probs.row_ptr(b);
    const T* trow = ts.row_ptr(b);
    for (std::size_t j = 0; j < ts.cols; ++j) acc += prow[j] * trow[j];
    acc -= trow[static_cast<std::size_t>(trace.labels[b])];
  }
  return acc / static_cast<T>(B);
}

/// Per-example directional derivatives for additive pre-activation
/// tangents: out[b] = sum_i <guess_i[b], dL_b/ds_i>.
template <typename T>
Vec<T> jvp_preact(const MlpParams<T>& params, const ForwardTrace<T>& trace,
                  const std::vector<Mat<T>>& guesses) {
  const std::size_t k = params.config.depth;
  const std::size_t B = trace.batch_size();
  if (guesses.size() != k) throw std::invalid_argument("jvp_preact: need one tangent per layer");
  Mat<T> tx;
  Mat<T> ts;
  for (std::size_t i = 0; i < k; ++i) {
    ts = guesses[i];
    if (ts.rows != B || ts.cols != trace.preacts[i].cols)
      throw std::invalid_argument("jvp_preact: tangent shape mismatch at layer " +
                                  std::to_string(i));
    if (!tx.empty()) {
      Mat<T> prop = matmul_nt(tx, params.weights[i]);
      for (std::size_t t = 0; t < ts.size(); ++t) ts.data[t] += prop.data[t];
    }
    if (i + 1 < k) {
      const Mat<T>& mask = trace.masks[i];
      tx = ts;
      for (std::size_t t = 0; t < tx.size(); ++t) tx.data[t] *= mask.data[t];
    }
  }
  Vec<T> out(B);
  for (std::size_t b = 0; b < B; ++b) {
    const T* prow = trace.probs.row_ptr(b);
    const T* trow = ts.row_ptr(b);
    T acc{0};
    for (std::size_t j = 0; j < ts.cols; ++j) acc += prow[j] * trow[j];
    acc -= trow[static_cast<std::size_t>(trace.labels[b])];
    out[b] = acc;
  }
  return out;
}

/// DW_i = (1/B) sum_b scaled_guess_i[b] (outer) x_i[b]; the outer-product
/// conversion from pre-activation space to weight space.
template <typename T>
GradEstimate<T> assemble_weight_update(const ForwardTrace<T>& trace,
                                       const std::vector<Mat<T>>& scaled_guesses,
                                       bool with_bias = false) {
  const std::size_t k = trace.preacts.size();
  const std::size_t B = trace.batch_size();
  GradEstimate<T> est;
  for (std::size_t i = 0; i < k; ++i) {
    Mat<T> dw = matmul_tn(scaled_guesses[i], trace.layer_input(i));
    scale_inplace(dw, T{1} / static_cast<T>(B));
    est.weights.push_back(std::move(dw));
    if (with_bias) {
      Vec<T> db(scaled_guesses[i].cols);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t j = 0; j < db.size(); ++j) db[j] += scaled_guesses[i](b, j);
      for (auto& x : db.data) x /= static_cast<T>(B);
      est.biases.push_back(std::move(db));
    }
  }
  return est;
}

// ---- flattened weight-space helpers ----

template <typename T>
GradEstimate<T> zero_like(const MlpParams<T>& params) {
  GradEstimate<T> e;
  for (const auto& w : params.weights) e.weights.emplace_back(w.rows, w.cols);
  for (const auto& b : params.biases) e.biases.emplace_back(b.size());
  return e;
}

template <typename T>
T est_dot(const GradEstimate<T>& a, const GradEstimate<T>& b) {
  T acc{0};
  for (std::size_t i = 0; i < a.weights.size(); ++i) acc += frob_dot(a.weights[i], b.weights[i]);
  for (std::size_t i = 0; i < a.biases.size(); ++i) acc += dot(a.biases[i], b.biases[i]);
  return acc;
}

template <typename T>
T est_dot_grads(const GradEstimate<T>& a, const Gradients<T>& g) {
  T acc{0};
  for (std::size_t i = 0; i < a.weights.size(); ++i)
    acc += frob_dot(a.weights[i], g.weight_grads[i]);
  for (std::size_t i = 0; i < a.biases.size(); ++i) acc += dot(a.biases[i], g.bias_grads[i]);
  return acc;
}

template <typename T>
T est_norm(const GradEstimate<T>& a) {
  return std::sqrt(est_dot(a, a));
}

template <typename T>
void est_axpy(GradEstimate<T>& y, T alpha, const GradEstimate<T>& x) {
  for (std::size_t i = 0; i < y.weights.size(); ++i)
    axpy_inplace(y.weights[i], alpha, x.weights[i]);
  for (std::size_t i = 0; i < y.biases.size(); ++i)
    for (std::size_t j = 0; j < y.biases[i].size(); ++j) y.biases[i][j] += alpha * x.biases[i][j];
}

template <typename T>
void est_scale(GradEstimate<T>& y, T alpha) {
  for (auto& w : y.weights) scale_inplace(w, alpha);
  for (auto& b : y.biases)
    for (auto& x : b.data) x *= alpha;
}

template <typename T>
GradEstimate<T> grads_to_estimate(const Gradients<T>& g) {
  GradEstimate<T> e;
  e.weights = g.weight_grads;
  e.biases = g.bias_grads;
  return e;
}

template <typename T>
bool est_finite(const GradEstimate<T>& e) {
  for (const auto& w : e.weights)
    if (!all_finite(w)) return false;
  for (const auto& b : e.biases)
    if (!all_finite(b)) return false;
  return true;
}

}  // namespace gg
