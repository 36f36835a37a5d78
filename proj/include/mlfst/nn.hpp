#pragma once

#include <Eigen/Dense>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mlfst/error.hpp"

namespace mlfst {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

// A time sequence of equally-shaped matrices; step t holds a [rows, B] batch.
template <class S>
using Seq = std::vector<Mat<S>>;

enum class LstmOutputMode { tanh_gated, relu_post };
enum class Activation { none, relu, sigmoid, linear };

inline const char* lstm_mode_name(LstmOutputMode m) {
  return m == LstmOutputMode::tanh_gated ? "tanh_gated" : "relu_post";
}

inline LstmOutputMode lstm_mode_from_name(const std::string& s) {
  if (s == "tanh_gated") return LstmOutputMode::tanh_gated;
  if (s == "relu_post") return LstmOutputMode::relu_post;
  raise(Errc::config_invalid, "unknown lstm output mode '" + s + "'");
}

namespace detail {

// Overflow-safe logistic function.
template <class S>
S stable_sigmoid(S z) {
  if (z >= S(0)) return S(1) / (S(1) + std::exp(-z));
  const S e = std::exp(z);
  return e / (S(1) + e);
}

template <class S>
Mat<S> sigmoid(const Mat<S>& z) {
  return z.unaryExpr([](S v) { return stable_sigmoid(v); });
}

template <class S>
Mat<S> tanh_m(const Mat<S>& z) {
  return z.array().tanh().matrix();
}

template <class S>
Mat<S> relu(const Mat<S>& z) {
  return z.cwiseMax(S(0));
}

}  // namespace detail

// Glorot-style uniform initialization; the draw order (row-major) is part of
// the determinism contract.
template <class S>
Mat<S> glorot_uniform(int rows, int cols, int fan_in, int fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (static_cast<double>(fan_in) + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Mat<S> m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = static_cast<S>(dist(rng));
  return m;
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

template <class S>
struct LstmParams {
  Mat<S> Wf, Wi, Wc, Wo;  // [H, F]
  Mat<S> Uf, Ui, Uc, Uo;  // [H, H]
  Mat<S> bf, bi, bc, bo;  // [H, 1]
  int hidden = 0;
  int input = 0;
  LstmOutputMode mode = LstmOutputMode::tanh_gated;
};

template <class S>
LstmParams<S> init_lstm(int hidden, int input, LstmOutputMode mode, std::mt19937_64& rng) {
  LstmParams<S> p;
  p.hidden = hidden;
  p.input = input;
  p.mode = mode;
  for (Mat<S>* w : {&p.Wf, &p.Wi, &p.Wc, &p.Wo})
    *w = glorot_uniform<S>(hidden, input, input, hidden, rng);
  for (Mat<S>* u : {&p.Uf, &p.Ui, &p.Uc, &p.Uo})
    *u = glorot_uniform<S>(hidden, hidden, hidden, hidden, rng);
  for (Mat<S>* b : {&p.bf, &p.bi, &p.bc, &p.bo}) *b = Mat<S>::Zero(hidden, 1);
  p.bf.setConstant(S(1));  // forget-gate bias 1 stabilizes early training
  return p;
}

// Gradient mirror of LstmParams (field names match for the shared visitor).
template <class S>
struct LstmGrads {
  Mat<S> Wf, Wi, Wc, Wo, Uf, Ui, Uc, Uo, bf, bi, bc, bo;
};

template <class S>
LstmGrads<S> zero_grads(const LstmParams<S>& p) {
  LstmGrads<S> g;
  for (Mat<S>* w : {&g.Wf, &g.Wi, &g.Wc, &g.Wo}) *w = Mat<S>::Zero(p.hidden, p.input);
  for (Mat<S>* u : {&g.Uf, &g.Ui, &g.Uc, &g.Uo}) *u = Mat<S>::Zero(p.hidden, p.hidden);
  for (Mat<S>* b : {&g.bf, &g.bi, &g.bc, &g.bo}) *b = Mat<S>::Zero(p.hidden, 1);
  return g;
}

// One unrolled step: gate activations plus the cell and hidden state, kept for
// backpropagation through time. `out` is what the layer emits at this step
// (h itself, or relu(h) in relu_post mode — recurrence always carries raw h).
template <class S>
struct LstmStep {
  Mat<S> f, i, ctil, C, o, h, out;  // each [H, B]
};

template <class S>
LstmStep<S> lstm_cell_forward(const LstmParams<S>& p, const Mat<S>& x, const Mat<S>& h_prev,
                              const Mat<S>& c_prev) {
  require(x.rows() == p.input, Errc::shape_mismatch,
          "lstm input rows " + std::to_string(x.rows()) + " != F " + std::to_string(p.input));
  require(h_prev.rows() == p.hidden && c_prev.rows() == p.hidden &&
              h_prev.cols() == x.cols() && c_prev.cols() == x.cols(),
          Errc::shape_mismatch, "lstm state shape does not match input batch");

  LstmStep<S> s;
  Mat<S> zf = p.Wf * x + p.Uf * h_prev;
  zf.colwise() += p.bf.col(0);
  Mat<S> zi = p.Wi * x + p.Ui * h_prev;
  zi.colwise() += p.bi.col(0);
  Mat<S> zc = p.Wc * x + p.Uc * h_prev;
  zc.colwise() += p.bc.col(0);
  Mat<S> zo = p.Wo * x + p.Uo * h_prev;
  zo.colwise() += p.bo.col(0);

  s.f = detail::sigmoid(zf);
  s.i = detail::sigmoid(zi);
  s.ctil = detail::tanh_m(zc);
  s.C = s.f.cwiseProduct(c_prev) + s.i.cwiseProduct(s.ctil);
  s.o = detail::sigmoid(zo);
  s.h = s.o.cwiseProduct(detail::tanh_m(s.C));
  s.out = p.mode == LstmOutputMode::relu_post ? detail::relu(s.h) : s.h;

#ifndef NDEBUG
  assert(((s.f.array() > S(0)) && (s.f.array() < S(1))).all());
  assert(((s.i.array() > S(0)) && (s.i.array() < S(1))).all());
  assert(((s.o.array() > S(0)) && (s.o.array() < S(1))).all());
  assert(((s.ctil.array() > S(-1)) && (s.ctil.array() < S(1))).all());
#endif
  return s;
}

template <class S>
struct LstmCache {
  Seq<S> x;                       // T inputs [F, B]
  std::vector<LstmStep<S>> steps; // T unrolled steps
  bool return_sequence = true;
  int batch = 0;
};

// Runs the cell over a sequence from zero initial state. Returns the emitted
// outputs: T matrices when return_sequence, else just the final step's output.
template <class S>
Seq<S> lstm_layer_forward(const LstmParams<S>& p, const Seq<S>& x, bool return_sequence,
                          LstmCache<S>& cache) {
  require(!x.empty(), Errc::shape_mismatch, "empty input sequence");
  const int B = static_cast<int>(x[0].cols());

  cache.x = x;
  cache.steps.clear();
  cache.steps.reserve(x.size());
  cache.return_sequence = return_sequence;
  cache.batch = B;

  Mat<S> h = Mat<S>::Zero(p.hidden, B);
  Mat<S> c = Mat<S>::Zero(p.hidden, B);
  Seq<S> out;
  out.reserve(return_sequence ? x.size() : 1);
  for (const Mat<S>& xt : x) {
    require(xt.cols() == B, Errc::shape_mismatch, "ragged batch across time steps");
    LstmStep<S> s = lstm_cell_forward(p, xt, h, c);
    h = s.h;  // recurrence carries the raw hidden state
    c = s.C;
    if (return_sequence) out.push_back(s.out);
    cache.steps.push_back(std::move(s));
  }
  if (!return_sequence) out.push_back(cache.steps.back().out);
  return out;
}

// Exact BPTT. dOut must have T entries (return_sequence) or 1 (last step only).
// Returns parameter gradients and the gradient w.r.t. the input sequence.
template <class S>
std::pair<LstmGrads<S>, Seq<S>> lstm_layer_backward(const LstmParams<S>& p,
                                                    const LstmCache<S>& cache,
                                                    const Seq<S>& dOut) {
  const std::size_t T = cache.steps.size();
  require(T > 0 && cache.x.size() == T, Errc::stale_cache, "cache does not hold a forward pass");
  require(cache.steps[0].h.rows() == p.hidden && cache.x[0].rows() == p.input,
          Errc::stale_cache, "cache shapes do not match these parameters");
  require(dOut.size() == (cache.return_sequence ? T : 1), Errc::shape_mismatch,
          "dOut length does not match the forward mode");

  const int B = cache.batch;
  LstmGrads<S> g = zero_grads(p);
  Seq<S> dx(T);

  Mat<S> dh_next = Mat<S>::Zero(p.hidden, B);
  Mat<S> dc_next = Mat<S>::Zero(p.hidden, B);
  const Mat<S> zero_state = Mat<S>::Zero(p.hidden, B);

  for (std::size_t ti = T; ti-- > 0;) {
    const LstmStep<S>& s = cache.steps[ti];
    const Mat<S>& h_prev = ti == 0 ? zero_state : cache.steps[ti - 1].h;
    const Mat<S>& c_prev = ti == 0 ? zero_state : cache.steps[ti - 1].C;

    Mat<S> dh = dh_next;
    if (cache.return_sequence) {
      Mat<S> d_emit = dOut[ti];
      if (p.mode == LstmOutputMode::relu_post)
        d_emit = d_emit.cwiseProduct((s.h.array() > S(0)).template cast<S>().matrix());
      dh += d_emit;
    } else if (ti == T - 1) {
      Mat<S> d_emit = dOut[0];
      if (p.mode == LstmOutputMode::relu_post)
        d_emit = d_emit.cwiseProduct((s.h.array() > S(0)).template cast<S>().matrix());
      dh += d_emit;
    }

    const Mat<S> tC = detail::tanh_m(s.C);
    Mat<S> do_ = dh.cwiseProduct(tC);
    Mat<S> dC = dh.cwiseProduct(s.o).cwiseProduct(
                    (Mat<S>::Ones(p.hidden, B) - tC.cwiseProduct(tC))) +
                dc_next;

    Mat<S> df = dC.cwiseProduct(c_prev);
    Mat<S> di = dC.cwiseProduct(s.ctil);
    Mat<S> dctil = dC.cwiseProduct(s.i);

    // pre-activation gradients
    Mat<S> dzf = df.cwiseProduct(s.f).cwiseProduct(Mat<S>::Ones(p.hidden, B) - s.f);
    Mat<S> dzi = di.cwiseProduct(s.i).cwiseProduct(Mat<S>::Ones(p.hidden, B) - s.i);
    Mat<S> dzc = dctil.cwiseProduct(Mat<S>::Ones(p.hidden, B) - s.ctil.cwiseProduct(s.ctil));
    Mat<S> dzo = do_.cwiseProduct(s.o).cwiseProduct(Mat<S>::Ones(p.hidden, B) - s.o);

    const Mat<S>& xt = cache.x[ti];
    g.Wf += dzf * xt.transpose();
    g.Wi += dzi * xt.transpose();
    g.Wc += dzc * xt.transpose();
    g.Wo += dzo * xt.transpose();
    g.Uf += dzf * h_prev.transpose();
    g.Ui += dzi * h_prev.transpose();
    g.Uc += dzc * h_prev.transpose();
    g.Uo += dzo * h_prev.transpose();
    g.bf += dzf.rowwise().sum();
    g.bi += dzi.rowwise().sum();
    g.bc += dzc.rowwise().sum();
    g.bo += dzo.rowwise().sum();

    dx[ti] = p.Wf.transpose() * dzf + p.Wi.transpose() * dzi + p.Wc.transpose() * dzc +
             p.Wo.transpose() * dzo;
    dh_next = p.Uf.transpose() * dzf + p.Ui.transpose() * dzi + p.Uc.transpose() * dzc +
              p.Uo.transpose() * dzo;
    dc_next = dC.cwiseProduct(s.f);
  }
  return {std::move(g), std::move(dx)};
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

template <class S>
struct DenseParams {
  Mat<S> W;  // [out, in]
  Mat<S> b;  // [out, 1]
  Activation act = Activation::none;
  int out = 0;
  int in = 0;
};

template <class S>
DenseParams<S> init_dense(int out, int in, Activation act, std::mt19937_64& rng) {
  DenseParams<S> p;
  p.W = glorot_uniform<S>(out, in, in, out, rng);
  p.b = Mat<S>::Zero(out, 1);
  p.act = act;
  p.out = out;
  p.in = in;
  return p;
}

template <class S>
struct DenseGrads {
  Mat<S> W, b;
};

template <class S>
struct DenseCache {
  Mat<S> x, z;  // input and pre-activation
};

template <class S>
Mat<S> apply_activation(const Mat<S>& z, Activation act) {
  switch (act) {
    case Activation::relu: return detail::relu(z);
    case Activation::sigmoid: return detail::sigmoid(z);
    case Activation::none:
    case Activation::linear: return z;
  }
  return z;
}

template <class S>
Mat<S> dense_forward(const DenseParams<S>& p, const Mat<S>& x, DenseCache<S>& cache) {
  require(x.rows() == p.in, Errc::shape_mismatch,
          "dense input rows " + std::to_string(x.rows()) + " != in " + std::to_string(p.in));
  cache.x = x;
  cache.z = p.W * x;
  cache.z.colwise() += p.b.col(0);
  return apply_activation(cache.z, p.act);
}

template <class S>
std::pair<DenseGrads<S>, Mat<S>> dense_backward(const DenseParams<S>& p,
                                                const DenseCache<S>& cache, const Mat<S>& dy) {
  require(cache.x.rows() == p.in && cache.z.rows() == p.out, Errc::stale_cache,
          "dense cache does not match these parameters");
  require(dy.rows() == p.out && dy.cols() == cache.x.cols(), Errc::shape_mismatch,
          "dense upstream gradient shape mismatch");

  Mat<S> dz;
  switch (p.act) {
    case Activation::relu:
      dz = dy.cwiseProduct((cache.z.array() > S(0)).template cast<S>().matrix());
      break;
    case Activation::sigmoid: {
      const Mat<S> y = detail::sigmoid(cache.z);
      dz = dy.cwiseProduct(y).cwiseProduct(Mat<S>::Ones(y.rows(), y.cols()) - y);
      break;
    }
    case Activation::none:
    case Activation::linear: dz = dy; break;
  }
  DenseGrads<S> g;
  g.W = dz * cache.x.transpose();
  g.b = dz.rowwise().sum();
  return {std::move(g), p.W.transpose() * dz};
}

// ---------------------------------------------------------------------------
// Batch normalization (per-channel over the batch axis)
// ---------------------------------------------------------------------------

template <class S>
struct BatchNormParams {
  Mat<S> gamma, beta;               // [C, 1]
  Mat<S> running_mean, running_var; // [C, 1]
  S momentum = S(0.9);
  S epsilon = S(1e-5);
  bool initialized = false;  // running stats valid
  int channels = 0;
};

template <class S>
BatchNormParams<S> init_batchnorm(int channels) {
  BatchNormParams<S> p;
  p.gamma = Mat<S>::Ones(channels, 1);
  p.beta = Mat<S>::Zero(channels, 1);
  p.running_mean = Mat<S>::Zero(channels, 1);
  p.running_var = Mat<S>::Ones(channels, 1);
  p.channels = channels;
  return p;
}

template <class S>
struct BatchNormGrads {
  Mat<S> gamma, beta;
};

template <class S>
struct BatchNormCache {
  Mat<S> xhat;     // [C, B]
  Mat<S> inv_std;  // [C, 1]
  int batch = 0;
};

// Train mode normalizes with batch statistics (population variance) and blends
// them into the running stats; infer mode uses the running stats unchanged.
template <class S>
Mat<S> batchnorm_forward(BatchNormParams<S>& p, const Mat<S>& x, bool train,
                         BatchNormCache<S>& cache) {
  require(x.rows() == p.channels, Errc::shape_mismatch,
          "batchnorm channel mismatch: " + std::to_string(x.rows()) + " != " +
              std::to_string(p.channels));
  const int B = static_cast<int>(x.cols());

  Mat<S> mean, var;
  if (train) {
    mean = x.rowwise().mean();
    Mat<S> centered = x.colwise() - mean.col(0);
    var = centered.cwiseProduct(centered).rowwise().mean();
    p.running_mean = p.momentum * p.running_mean + (S(1) - p.momentum) * mean;
    p.running_var = p.momentum * p.running_var + (S(1) - p.momentum) * var;
    p.initialized = true;
  } else {
    require(p.initialized, Errc::infer_before_train,
            "batchnorm running statistics were never initialized");
    mean = p.running_mean;
    var = p.running_var;
  }

  cache.inv_std = (var.array() + p.epsilon).rsqrt().matrix();
  cache.xhat = (x.colwise() - mean.col(0)).array().colwise() * cache.inv_std.col(0).array();
  cache.batch = B;

  Mat<S> y = cache.xhat.array().colwise() * p.gamma.col(0).array();
  y.colwise() += p.beta.col(0);
  return y;
}

// Train-mode backward (batch statistics participate in the gradient).
template <class S>
std::pair<BatchNormGrads<S>, Mat<S>> batchnorm_backward(const BatchNormParams<S>& p,
                                                        const BatchNormCache<S>& cache,
                                                        const Mat<S>& dy) {
  require(cache.xhat.rows() == p.channels && cache.batch > 0, Errc::stale_cache,
          "batchnorm cache does not match these parameters");
  require(dy.rows() == p.channels && dy.cols() == cache.xhat.cols(), Errc::shape_mismatch,
          "batchnorm upstream gradient shape mismatch");

  const S B = static_cast<S>(cache.batch);
  BatchNormGrads<S> g;
  g.gamma = dy.cwiseProduct(cache.xhat).rowwise().sum();
  g.beta = dy.rowwise().sum();

  // dx = (gamma * inv_std / B) * (B*dy - sum(dy) - xhat * sum(dy*xhat))
  Mat<S> term = B * dy;
  term.colwise() -= g.beta.col(0);
  term -= (cache.xhat.array().colwise() * g.gamma.col(0).array()).matrix();
  Mat<S> dx = term.array().colwise() *
              (p.gamma.cwiseProduct(cache.inv_std) / B).col(0).array();
  return {std::move(g), std::move(dx)};
}

// ---------------------------------------------------------------------------
// Shape utilities
// ---------------------------------------------------------------------------

template <class S>
Seq<S> repeat_vector(const Mat<S>& h, int n) {
  require(n >= 1, Errc::config_invalid, "repeat count must be >= 1");
  return Seq<S>(static_cast<std::size_t>(n), h);
}

// Applies the same dense layer to every step of a sequence.
template <class S>
Seq<S> time_distributed_forward(const DenseParams<S>& p, const Seq<S>& seq,
                                std::vector<DenseCache<S>>& caches) {
  caches.assign(seq.size(), DenseCache<S>{});
  Seq<S> out(seq.size());
  for (std::size_t t = 0; t < seq.size(); ++t) out[t] = dense_forward(p, seq[t], caches[t]);
  return out;
}

template <class S>
std::pair<DenseGrads<S>, Seq<S>> time_distributed_backward(const DenseParams<S>& p,
                                                           const std::vector<DenseCache<S>>& caches,
                                                           const Seq<S>& dOut) {
  require(caches.size() == dOut.size() && !caches.empty(), Errc::stale_cache,
          "time-distributed cache does not match the upstream gradient");
  DenseGrads<S> g{Mat<S>::Zero(p.out, p.in), Mat<S>::Zero(p.out, 1)};
  Seq<S> dx(dOut.size());
  for (std::size_t t = 0; t < dOut.size(); ++t) {
    auto [gt, dxt] = dense_backward(p, caches[t], dOut[t]);
    g.W += gt.W;
    g.b += gt.b;
    dx[t] = std::move(dxt);
  }
  return {std::move(g), std::move(dx)};
}

}  // namespace mlfst
