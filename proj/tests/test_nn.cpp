#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "mlfst/nn.hpp"
#include "matchers.hpp"
#include "oracles.hpp"

using namespace mlfst;
using Catch::Approx;

namespace {

LstmParams<double> scalar_params(const oracle::ScalarCell& c,
                                 LstmOutputMode mode = LstmOutputMode::tanh_gated) {
  LstmParams<double> p;
  p.hidden = 1;
  p.input = 1;
  p.mode = mode;
  auto m = [](double v) { return Mat<double>::Constant(1, 1, v); };
  p.Wf = m(c.wf), p.Uf = m(c.uf), p.bf = m(c.bf);
  p.Wi = m(c.wi), p.Ui = m(c.ui), p.bi = m(c.bi);
  p.Wc = m(c.wc), p.Uc = m(c.uc), p.bc = m(c.bc);
  p.Wo = m(c.wo), p.Uo = m(c.uo), p.bo = m(c.bo);
  return p;
}

LstmParams<double> random_lstm(int hidden, int input, std::mt19937_64& rng,
                               LstmOutputMode mode = LstmOutputMode::tanh_gated) {
  LstmParams<double> p = init_lstm<double>(hidden, input, mode, rng);
  // Nudge biases off zero so gradients are not accidentally symmetric.
  p.bf = oracle::random_mat(hidden, 1, rng, 0.3);
  p.bi = oracle::random_mat(hidden, 1, rng, 0.3);
  p.bc = oracle::random_mat(hidden, 1, rng, 0.3);
  p.bo = oracle::random_mat(hidden, 1, rng, 0.3);
  return p;
}

std::vector<double*> lstm_param_ptrs(LstmParams<double>& p) {
  std::vector<double*> out;
  for (Mat<double>* m : {&p.Wf, &p.Wi, &p.Wc, &p.Wo, &p.Uf, &p.Ui, &p.Uc, &p.Uo, &p.bf, &p.bi,
                         &p.bc, &p.bo})
    for (Eigen::Index j = 0; j < m->cols(); ++j)
      for (Eigen::Index i = 0; i < m->rows(); ++i) out.push_back(&(*m)(i, j));
  return out;
}

std::vector<double> lstm_grad_values(const LstmGrads<double>& g) {
  std::vector<double> out;
  for (const Mat<double>* m : {&g.Wf, &g.Wi, &g.Wc, &g.Wo, &g.Uf, &g.Ui, &g.Uc, &g.Uo, &g.bf,
                               &g.bi, &g.bc, &g.bo})
    for (Eigen::Index j = 0; j < m->cols(); ++j)
      for (Eigen::Index i = 0; i < m->rows(); ++i) out.push_back((*m)(i, j));
  return out;
}

}  // namespace

// --- cell forward against the six equations ---------------------------------

TEST_CASE("zero cell: gates at one half, state and output at zero") {
  oracle::ScalarCell c;  // all zeros
  LstmParams<double> p = scalar_params(c);
  const auto s = lstm_cell_forward<double>(p, Mat<double>::Constant(1, 1, 0.7),
                                   Mat<double>::Zero(1, 1), Mat<double>::Zero(1, 1));
  CHECK(s.f(0, 0) == 0.5);
  CHECK(s.i(0, 0) == 0.5);
  CHECK(s.o(0, 0) == 0.5);
  CHECK(s.ctil(0, 0) == 0.0);
  CHECK(s.C(0, 0) == 0.0);
  CHECK(s.h(0, 0) == 0.0);
}

TEST_CASE("saturated-gate scalar cell reproduces the hand-evaluated example") {
  oracle::ScalarCell c;
  c.bi = 20.0;   // input gate ~ 1
  c.bf = -20.0;  // forget gate ~ 0
  c.wc = 1.0;
  LstmParams<double> p = scalar_params(c);

  const double x = 0.5, c_prev = 7.0;
  const auto s = lstm_cell_forward<double>(p, Mat<double>::Constant(1, 1, x),
                                   Mat<double>::Zero(1, 1),
                                   Mat<double>::Constant(1, 1, c_prev));
  const auto want = oracle::scalar_cell(c, x, 0.0, c_prev);

  CHECK(s.C(0, 0) == Approx(want.C).margin(1e-12));
  CHECK(s.h(0, 0) == Approx(want.h).margin(1e-12));
  // The forgotten old state barely leaks through the ~0 gate.
  CHECK(s.C(0, 0) == Approx(std::tanh(0.5)).margin(1e-7));
  CHECK(s.h(0, 0) == Approx(0.2159041).margin(1e-6));
}

TEST_CASE("saturated forget gate carries the old cell state") {
  oracle::ScalarCell c;
  c.bf = 20.0;   // forget ~ 1
  c.bi = -20.0;  // input ~ 0
  LstmParams<double> p = scalar_params(c);
  const auto s = lstm_cell_forward<double>(p, Mat<double>::Constant(1, 1, 0.3),
                                   Mat<double>::Zero(1, 1),
                                   Mat<double>::Constant(1, 1, 0.9));
  CHECK(s.C(0, 0) == Approx(0.9).margin(1e-7));
}

TEST_CASE("cell forward matches the scalar oracle on random drives") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int k = 0; k < 200; ++k) {
    oracle::ScalarCell c{u(rng), u(rng), u(rng), u(rng), u(rng), u(rng),
                         u(rng), u(rng), u(rng), u(rng), u(rng), u(rng)};
    const double x = u(rng), h0 = u(rng), c0 = u(rng);
    LstmParams<double> p = scalar_params(c);
    const auto s = lstm_cell_forward<double>(p, Mat<double>::Constant(1, 1, x),
                                     Mat<double>::Constant(1, 1, h0),
                                     Mat<double>::Constant(1, 1, c0));
    const auto want = oracle::scalar_cell(c, x, h0, c0);
    CHECK(s.f(0, 0) == Approx(want.f).margin(1e-14));
    CHECK(s.i(0, 0) == Approx(want.i).margin(1e-14));
    CHECK(s.ctil(0, 0) == Approx(want.ctil).margin(1e-14));
    CHECK(s.C(0, 0) == Approx(want.C).margin(1e-14));
    CHECK(s.o(0, 0) == Approx(want.o).margin(1e-14));
    CHECK(s.h(0, 0) == Approx(want.h).margin(1e-14));
  }
}

TEST_CASE("cell rejects mismatched shapes") {
  std::mt19937_64 rng(1);
  LstmParams<double> p = init_lstm<double>(4, 3, LstmOutputMode::tanh_gated, rng);
  CHECK_THROWS_MATCHES(
      lstm_cell_forward<double>(p, Mat<double>::Zero(2, 1), Mat<double>::Zero(4, 1),
                        Mat<double>::Zero(4, 1)),
      Error, ErrcMatcher(Errc::shape_mismatch));
  CHECK_THROWS_MATCHES(
      lstm_cell_forward<double>(p, Mat<double>::Zero(3, 1), Mat<double>::Zero(5, 1),
                        Mat<double>::Zero(4, 1)),
      Error, ErrcMatcher(Errc::shape_mismatch));
}

// --- layer forward -----------------------------------------------------------

TEST_CASE("layer on a one-step sequence equals the cell from zero state") {
  std::mt19937_64 rng(31);
  LstmParams<double> p = random_lstm(4, 3, rng);
  const Mat<double> x = oracle::random_mat(3, 2, rng);

  LstmCache<double> cache;
  const Seq<double> out = lstm_layer_forward(p, Seq<double>{x}, true, cache);
  const auto s = lstm_cell_forward<double>(p, x, Mat<double>::Zero(4, 2), Mat<double>::Zero(4, 2));
  REQUIRE(out.size() == 1);
  CHECK((out[0] - s.out).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("return_sequence toggles between T outputs and the last output") {
  std::mt19937_64 rng(32);
  LstmParams<double> p = random_lstm(5, 3, rng);
  Seq<double> x;
  for (int t = 0; t < 6; ++t) x.push_back(oracle::random_mat(3, 2, rng));

  LstmCache<double> c1, c2;
  const Seq<double> full = lstm_layer_forward(p, x, true, c1);
  const Seq<double> last = lstm_layer_forward(p, x, false, c2);
  REQUIRE(full.size() == 6);
  REQUIRE(last.size() == 1);
  CHECK((full.back() - last[0]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("relu_post clips emitted outputs but the recurrence carries raw h") {
  std::mt19937_64 rng(33);
  LstmParams<double> raw_p = random_lstm(4, 3, rng, LstmOutputMode::tanh_gated);
  LstmParams<double> relu_p = raw_p;
  relu_p.mode = LstmOutputMode::relu_post;

  Seq<double> x;
  for (int t = 0; t < 5; ++t) x.push_back(oracle::random_mat(3, 2, rng, 1.0));

  LstmCache<double> c_raw, c_relu;
  const Seq<double> raw = lstm_layer_forward(raw_p, x, true, c_raw);
  const Seq<double> clipped = lstm_layer_forward(relu_p, x, true, c_relu);

  bool saw_negative = false;
  for (std::size_t t = 0; t < raw.size(); ++t) {
    // Emission is relu of the raw mode's emission...
    CHECK((clipped[t] - raw[t].cwiseMax(0.0)).cwiseAbs().maxCoeff() == 0.0);
    // ...which means the hidden state trajectories are identical.
    CHECK((c_relu.steps[t].h - c_raw.steps[t].h).cwiseAbs().maxCoeff() == 0.0);
    saw_negative = saw_negative || (raw[t].array() < 0.0).any();
  }
  REQUIRE(saw_negative);  // otherwise this test proves nothing
}

TEST_CASE("gate ranges hold over long random sequences") {
  std::mt19937_64 rng(34);
  LstmParams<double> p = random_lstm(6, 4, rng);
  Seq<double> x;
  for (int t = 0; t < 50; ++t) x.push_back(oracle::random_mat(4, 3, rng, 2.0));
  LstmCache<double> cache;
  lstm_layer_forward(p, x, true, cache);
  for (const auto& s : cache.steps) {
    CHECK(s.f.minCoeff() > 0.0);
    CHECK(s.f.maxCoeff() < 1.0);
    CHECK(s.i.minCoeff() > 0.0);
    CHECK(s.i.maxCoeff() < 1.0);
    CHECK(s.o.minCoeff() > 0.0);
    CHECK(s.o.maxCoeff() < 1.0);
    CHECK(s.ctil.minCoeff() > -1.0);
    CHECK(s.ctil.maxCoeff() < 1.0);
  }
}

// --- BPTT gradients ----------------------------------------------------------

namespace {

// Loss = sum of squares of everything the layer emits.
double lstm_sq_loss(const LstmParams<double>& p, const Seq<double>& x, bool return_sequence) {
  LstmCache<double> cache;
  const Seq<double> out = lstm_layer_forward(p, x, return_sequence, cache);
  double loss = 0.0;
  for (const auto& m : out) loss += m.squaredNorm();
  return loss;
}

void check_lstm_gradients(LstmOutputMode mode, bool return_sequence, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  LstmParams<double> p = random_lstm(4, 3, rng, mode);
  Seq<double> x;
  for (int t = 0; t < 5; ++t) x.push_back(oracle::random_mat(3, 2, rng));

  LstmCache<double> cache;
  const Seq<double> out = lstm_layer_forward(p, x, return_sequence, cache);
  Seq<double> dOut;
  for (const auto& m : out) dOut.push_back(2.0 * m);
  const auto [grads, dx] = lstm_layer_backward(p, cache, dOut);

  const auto fd = oracle::finite_difference(
      lstm_param_ptrs(p), [&] { return lstm_sq_loss(p, x, return_sequence); });
  const double worst = oracle::max_rel_err(lstm_grad_values(grads), fd);
  INFO("mode " << lstm_mode_name(mode) << " return_sequence " << return_sequence);
  CHECK(worst < 1e-4);

  // Input gradients against the same oracle.
  std::vector<double*> xin;
  for (auto& m : x)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) xin.push_back(&m(i, j));
  const auto fdx = oracle::finite_difference(
      xin, [&] { return lstm_sq_loss(p, x, return_sequence); });
  std::vector<double> dxv;
  for (const auto& m : dx)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) dxv.push_back(m(i, j));
  CHECK(oracle::max_rel_err(dxv, fdx) < 1e-4);
}

}  // namespace

TEST_CASE("BPTT matches finite differences in every mode") {
  check_lstm_gradients(LstmOutputMode::tanh_gated, true, 41);
  check_lstm_gradients(LstmOutputMode::tanh_gated, false, 42);
  check_lstm_gradients(LstmOutputMode::relu_post, true, 43);
  check_lstm_gradients(LstmOutputMode::relu_post, false, 44);
}

TEST_CASE("scalar-cell gradient matches the hand derivative") {
  // Loss = h^2 for the saturated scalar example; dL/dWc obtained symbolically:
  // h = o*tanh(C), C = f*c_prev + i*tanh(Wc*x), with o, f, i constants here.
  oracle::ScalarCell c;
  c.bi = 20.0;
  c.bf = -20.0;
  c.wc = 1.0;
  LstmParams<double> p = scalar_params(c);
  const double x = 0.5, c_prev = 7.0;

  LstmCache<double> cache;
  Seq<double> xs{Mat<double>::Constant(1, 1, x)};
  // Zero initial cell state comes from the layer contract, so drive the cell
  // directly to keep c_prev = 7.
  LstmStep<double> s = lstm_cell_forward<double>(p, xs[0], Mat<double>::Zero(1, 1),
                                         Mat<double>::Constant(1, 1, c_prev));
  const double f = s.f(0, 0), i = s.i(0, 0), o = s.o(0, 0), C = s.C(0, 0), h = s.h(0, 0);
  // dL/dWc = 2h * o * (1 - tanh(C)^2) * i * (1 - tanh(Wc x)^2) * x
  const double tC = std::tanh(C), tz = std::tanh(c.wc * x);
  const double want = 2 * h * o * (1 - tC * tC) * i * (1 - tz * tz) * x;

  // Finite difference on the cell itself confirms the symbolic value.
  const double eps = 1e-6;
  auto loss_at = [&](double wc) {
    oracle::ScalarCell cc = c;
    cc.wc = wc;
    const auto st = oracle::scalar_cell(cc, x, 0.0, c_prev);
    return st.h * st.h;
  };
  const double fd = (loss_at(c.wc + eps) - loss_at(c.wc - eps)) / (2 * eps);
  CHECK(want == Approx(fd).epsilon(1e-6));
  (void)f;
}

TEST_CASE("zero upstream gradient produces zero parameter gradients") {
  std::mt19937_64 rng(51);
  LstmParams<double> p = random_lstm(3, 2, rng);
  Seq<double> x{oracle::random_mat(2, 2, rng), oracle::random_mat(2, 2, rng)};
  LstmCache<double> cache;
  const Seq<double> out = lstm_layer_forward(p, x, true, cache);
  Seq<double> dOut;
  for (const auto& m : out) dOut.push_back(Mat<double>::Zero(m.rows(), m.cols()));
  const auto [grads, dx] = lstm_layer_backward(p, cache, dOut);
  for (const double v : lstm_grad_values(grads)) CHECK(v == 0.0);
  for (const auto& m : dx) CHECK(m.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward without a forward is a stale cache") {
  std::mt19937_64 rng(52);
  LstmParams<double> p = random_lstm(3, 2, rng);
  LstmCache<double> cache;
  CHECK_THROWS_MATCHES(lstm_layer_backward(p, cache, Seq<double>{}), Error,
                       ErrcMatcher(Errc::stale_cache));
}

// --- glorot ------------------------------------------------------------------

TEST_CASE("glorot init respects its bound and the forget bias starts at one") {
  std::mt19937_64 rng(61);
  LstmParams<double> p = init_lstm<double>(16, 8, LstmOutputMode::relu_post, rng);
  const double limit_w = std::sqrt(6.0 / (8 + 16));
  const double limit_u = std::sqrt(6.0 / (16 + 16));
  for (const Mat<double>* w : {&p.Wf, &p.Wi, &p.Wc, &p.Wo})
    CHECK(w->cwiseAbs().maxCoeff() <= limit_w);
  for (const Mat<double>* u : {&p.Uf, &p.Ui, &p.Uc, &p.Uo})
    CHECK(u->cwiseAbs().maxCoeff() <= limit_u);
  CHECK((p.bf.array() == 1.0).all());
  CHECK((p.bi.array() == 0.0).all());

  // Same seed, same weights.
  std::mt19937_64 rng2(61);
  LstmParams<double> q = init_lstm<double>(16, 8, LstmOutputMode::relu_post, rng2);
  CHECK((p.Wf - q.Wf).cwiseAbs().maxCoeff() == 0.0);
  CHECK((p.Uo - q.Uo).cwiseAbs().maxCoeff() == 0.0);
}

// --- dense -------------------------------------------------------------------

TEST_CASE("dense forward computes Wx + b with the right activation") {
  std::mt19937_64 rng(71);
  DenseParams<double> p = init_dense<double>(3, 2, Activation::relu, rng);
  p.W << 1, -1, 0, 2, -3, 0;
  p.b << 0.5, -0.5, 1.0;
  Mat<double> x(2, 2);
  x << 1, 0, 2, 1;

  DenseCache<double> cache;
  const Mat<double> y = dense_forward(p, x, cache);
  // Column 0 is x = (1, 2): rows give -0.5, 3.5, -2.0 before relu.
  CHECK(y(0, 0) == 0.0);
  CHECK(y(1, 0) == Approx(3.5));
  CHECK(y(2, 0) == 0.0);
  // Column 1 is x = (0, 1): rows give -0.5, 1.5, 1.0 before relu.
  CHECK(y(0, 1) == 0.0);
  CHECK(y(1, 1) == Approx(1.5));
  CHECK(y(2, 1) == Approx(1.0));
}

TEST_CASE("dense gradients match finite differences for every activation") {
  for (const Activation act :
       {Activation::none, Activation::relu, Activation::sigmoid, Activation::linear}) {
    std::mt19937_64 rng(81 + static_cast<int>(act));
    DenseParams<double> p = init_dense<double>(4, 3, act, rng);
    p.b = oracle::random_mat(4, 1, rng, 0.3);
    const Mat<double> x = oracle::random_mat(3, 5, rng);

    auto loss = [&] {
      DenseCache<double> c;
      return dense_forward(p, x, c).squaredNorm();
    };
    std::vector<double*> ptrs;
    for (Mat<double>* m : {&p.W, &p.b})
      for (Eigen::Index j = 0; j < m->cols(); ++j)
        for (Eigen::Index i = 0; i < m->rows(); ++i) ptrs.push_back(&(*m)(i, j));
    const auto fd = oracle::finite_difference(ptrs, loss);

    DenseCache<double> cache;
    const Mat<double> y = dense_forward(p, x, cache);
    const auto [g, dx] = dense_backward(p, cache, (2.0 * y).eval());

    std::vector<double> got;
    for (const Mat<double>* m : {&g.W, &g.b})
      for (Eigen::Index j = 0; j < m->cols(); ++j)
        for (Eigen::Index i = 0; i < m->rows(); ++i) got.push_back((*m)(i, j));
    INFO("activation " << static_cast<int>(act));
    CHECK(oracle::max_rel_err(got, fd) < 1e-4);
  }
}

// --- batchnorm ---------------------------------------------------------------

TEST_CASE("batchnorm train normalizes the batch before gamma and beta") {
  std::mt19937_64 rng(91);
  BatchNormParams<double> p = init_batchnorm<double>(3);
  // Batch with per-channel mean 3 and variance 4.
  Mat<double> x(3, 4);
  x << 1, 5, 1, 5, 3, 3, 7, -1, 5, 1, 5, 1;

  BatchNormCache<double> cache;
  const Mat<double> y = batchnorm_forward(p, x, true, cache);
  for (int ch = 0; ch < 3; ++ch) {
    CHECK(y.row(ch).mean() == Approx(0.0).margin(1e-6));
    const double var = y.row(ch).array().square().mean();
    CHECK(var == Approx(1.0).epsilon(1e-4));  // epsilon-regularized
  }
  CHECK(p.initialized);
  // Running stats moved toward the batch stats with momentum 0.9.
  CHECK(p.running_mean(0, 0) == Approx(0.9 * 0.0 + 0.1 * 3.0));
  CHECK(p.running_var(0, 0) == Approx(0.9 * 1.0 + 0.1 * 4.0));
}

TEST_CASE("batchnorm infer uses running statistics, not the batch") {
  BatchNormParams<double> p = init_batchnorm<double>(2);
  Mat<double> train_x(2, 4);
  train_x << 2, 4, 2, 4, -1, 1, -1, 1;
  BatchNormCache<double> cache;
  batchnorm_forward(p, train_x, true, cache);

  // A single inference sample: batch stats would be degenerate.
  Mat<double> x(2, 1);
  x << 3, 0;
  const Mat<double> y = batchnorm_forward(p, x, false, cache);
  const double want0 = (3 - p.running_mean(0, 0)) / std::sqrt(p.running_var(0, 0) + 1e-5);
  CHECK(y(0, 0) == Approx(want0));
}

TEST_CASE("batchnorm inference before any training batch is an error") {
  BatchNormParams<double> p = init_batchnorm<double>(2);
  BatchNormCache<double> cache;
  CHECK_THROWS_MATCHES(batchnorm_forward<double>(p, Mat<double>::Zero(2, 3), false, cache), Error,
                       ErrcMatcher(Errc::infer_before_train));
}

TEST_CASE("batchnorm gradients match finite differences") {
  std::mt19937_64 rng(92);
  BatchNormParams<double> p = init_batchnorm<double>(4);
  p.gamma = oracle::random_mat(4, 1, rng, 1.0);
  p.beta = oracle::random_mat(4, 1, rng, 1.0);
  Mat<double> x = oracle::random_mat(4, 6, rng, 2.0);

  // Loss through train-mode normalization; running stats are recomputed each
  // call but do not feed back into the loss value. The linear tilt T keeps
  // dL/dx well away from zero: on ||y||^2 alone the input gradient nearly
  // cancels across the batch and finite differences drown in rounding noise.
  const Mat<double> tilt = oracle::random_mat(4, 6, rng, 1.0);
  auto loss = [&] {
    BatchNormParams<double> q = p;
    BatchNormCache<double> c;
    const Mat<double> y = batchnorm_forward(q, x, true, c);
    return y.squaredNorm() + y.cwiseProduct(tilt).sum();
  };

  std::vector<double*> ptrs;
  for (Mat<double>* m : {&p.gamma, &p.beta})
    for (Eigen::Index i = 0; i < m->rows(); ++i) ptrs.push_back(&(*m)(i, 0));
  // Also check dx.
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i) ptrs.push_back(&x(i, j));
  const auto fd = oracle::finite_difference(ptrs, loss);

  BatchNormParams<double> q = p;
  BatchNormCache<double> cache;
  const Mat<double> y = batchnorm_forward(q, x, true, cache);
  const auto [g, dx] = batchnorm_backward(q, cache, (2.0 * y + tilt).eval());

  std::vector<double> got;
  for (const Mat<double>* m : {&g.gamma, &g.beta})
    for (Eigen::Index i = 0; i < m->rows(); ++i) got.push_back((*m)(i, 0));
  for (Eigen::Index j = 0; j < dx.cols(); ++j)
    for (Eigen::Index i = 0; i < dx.rows(); ++i) got.push_back(dx(i, j));
  CHECK(oracle::max_rel_err(got, fd) < 1e-4);
}

// --- repeat_vector and time_distributed ---------------------------------------

TEST_CASE("repeat_vector replicates the input n times") {
  Mat<double> h(2, 1);
  h << 3, -1;
  const Seq<double> r = repeat_vector(h, 3);
  REQUIRE(r.size() == 3);
  for (const auto& m : r) CHECK((m - h).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_MATCHES(repeat_vector(h, 0), Error, ErrcMatcher(Errc::config_invalid));
}

TEST_CASE("time_distributed applies one dense across steps and accumulates grads") {
  std::mt19937_64 rng(95);
  DenseParams<double> p = init_dense<double>(2, 3, Activation::relu, rng);
  p.b = oracle::random_mat(2, 1, rng, 0.3);
  Seq<double> seq;
  for (int t = 0; t < 4; ++t) seq.push_back(oracle::random_mat(3, 2, rng));

  auto loss = [&] {
    std::vector<DenseCache<double>> cs;
    const Seq<double> out = time_distributed_forward(p, seq, cs);
    double l = 0.0;
    for (const auto& m : out) l += m.squaredNorm();
    return l;
  };
  std::vector<double*> ptrs;
  for (Mat<double>* m : {&p.W, &p.b})
    for (Eigen::Index j = 0; j < m->cols(); ++j)
      for (Eigen::Index i = 0; i < m->rows(); ++i) ptrs.push_back(&(*m)(i, j));
  const auto fd = oracle::finite_difference(ptrs, loss);

  std::vector<DenseCache<double>> caches;
  const Seq<double> out = time_distributed_forward(p, seq, caches);
  Seq<double> dOut;
  for (const auto& m : out) dOut.push_back(2.0 * m);
  const auto [g, dseq] = time_distributed_backward(p, caches, dOut);

  std::vector<double> got;
  for (const Mat<double>* m : {&g.W, &g.b})
    for (Eigen::Index j = 0; j < m->cols(); ++j)
      for (Eigen::Index i = 0; i < m->rows(); ++i) got.push_back((*m)(i, j));
  CHECK(oracle::max_rel_err(got, fd) < 1e-4);
  REQUIRE(dseq.size() == 4);

  // Per-step outputs equal a direct dense call.
  for (std::size_t t = 0; t < seq.size(); ++t) {
    DenseCache<double> c;
    CHECK((out[t] - dense_forward(p, seq[t], c)).cwiseAbs().maxCoeff() == 0.0);
  }
}
