#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "mlfst/batching.hpp"
#include "mlfst/model.hpp"
#include "matchers.hpp"
#include "oracles.hpp"

using namespace mlfst;
using Catch::Approx;

namespace {

ArchConfig tiny_arch() {
  ArchConfig a;
  a.shared_units = 4;
  a.second_units = 3;
  a.cls_dense_units = 2;
  a.traj_td_units = 2;
  a.ws = 4;
  a.hs = 2;
  a.feature_count = 3;
  return a;
}

Seq<double> random_input(const ArchConfig& a, int batch, std::mt19937_64& rng) {
  Seq<double> x;
  for (int t = 0; t < a.ws; ++t) x.push_back(oracle::random_mat(a.feature_count, batch, rng));
  return x;
}

struct Targets {
  Seq<double> traj;
  Mat<double> y;
};

Targets random_targets(const ArchConfig& a, int batch, std::mt19937_64& rng) {
  Targets t;
  for (int i = 0; i < a.hs; ++i) t.traj.push_back(oracle::random_mat(3, batch, rng));
  t.y = Mat<double>::Zero(a.num_states, batch);
  std::uniform_int_distribution<int> bit(0, 1);
  for (int c = 0; c < batch; ++c) {
    bool any = false;
    for (int r = 0; r < a.num_states; ++r) {
      if (bit(rng)) {
        t.y(r, c) = 1.0;
        any = true;
      }
    }
    if (!any) t.y(rng() % a.num_states, c) = 1.0;
  }
  return t;
}

double model_loss(ModelParams<double>& m, const Seq<double>& x, const Targets& tg,
                  const LossWeights& w) {
  ModelCache<double> cache;
  const ModelOutput<double> out = model_forward(m, x, /*train=*/true, cache);
  return combined_loss(out.traj, tg.traj, out.probs, tg.y, w).total;
}

}  // namespace

TEST_CASE("default architecture has the documented parameter count") {
  // 4(HF + H^2 + H) per LSTM, oi + o per dense, 2C for batchnorm:
  // 284672 + 197120 + 256 + 8256 + 325 + 8256 + 195.
  CHECK(parameter_count(ArchConfig{}) == 499080);

  // The closed form matches the tensors the visitor actually exposes.
  for (const ArchConfig& a : {ArchConfig{}, tiny_arch()}) {
    ModelParams<double> m = build_model<double>(a, 1);
    std::int64_t total = 0;
    for_each_parameter(m, [&](const std::string&, const Mat<double>& t) {
      total += static_cast<std::int64_t>(t.size());
    });
    CHECK(total == parameter_count(a));
  }
}

TEST_CASE("parameter visitor exposes a stable name order") {
  ModelParams<double> m = build_model<double>(tiny_arch(), 3);
  std::vector<std::string> names;
  for_each_parameter(m, [&](const std::string& n, const Mat<double>&) { names.push_back(n); });
  const std::vector<std::string> want = {
      "shared_lstm.Wf", "shared_lstm.Wi", "shared_lstm.Wc", "shared_lstm.Wo",
      "shared_lstm.Uf", "shared_lstm.Ui", "shared_lstm.Uc", "shared_lstm.Uo",
      "shared_lstm.bf", "shared_lstm.bi", "shared_lstm.bc", "shared_lstm.bo",
      "second_lstm.Wf", "second_lstm.Wi", "second_lstm.Wc", "second_lstm.Wo",
      "second_lstm.Uf", "second_lstm.Ui", "second_lstm.Uc", "second_lstm.Uo",
      "second_lstm.bf", "second_lstm.bi", "second_lstm.bc", "second_lstm.bo",
      "cls_bn.gamma",   "cls_bn.beta",
      "cls_dense.W",    "cls_dense.b",
      "cls_out.W",      "cls_out.b",
      "traj_td.W",      "traj_td.b",
      "traj_out.W",     "traj_out.b",
  };
  CHECK(names == want);
}

TEST_CASE("architecture validation rejects bad configs") {
  ArchConfig a = tiny_arch();
  a.num_states = 4;
  CHECK_THROWS_MATCHES(validate_arch(a), Error, ErrcMatcher(Errc::config_invalid));
  a = tiny_arch();
  a.shared_units = 0;
  CHECK_THROWS_MATCHES(build_model<double>(a, 1), Error, ErrcMatcher(Errc::config_invalid));
}

TEST_CASE("same seed builds identical models, different seeds differ") {
  const ArchConfig a = tiny_arch();
  ModelParams<double> m1 = build_model<double>(a, 7);
  ModelParams<double> m2 = build_model<double>(a, 7);
  ModelParams<double> m3 = build_model<double>(a, 8);

  const auto v1 = oracle::flatten_values(m1);
  const auto v2 = oracle::flatten_values(m2);
  const auto v3 = oracle::flatten_values(m3);
  CHECK(v1 == v2);
  CHECK(v1 != v3);
}

TEST_CASE("forward produces the contracted shapes and probability range") {
  const ArchConfig a = tiny_arch();
  ModelParams<double> m = build_model<double>(a, 11);
  std::mt19937_64 rng(12);
  const Seq<double> x = random_input(a, 3, rng);

  ModelCache<double> cache;
  const ModelOutput<double> out = model_forward(m, x, true, cache);
  CHECK(out.probs.rows() == kNumStates);
  CHECK(out.probs.cols() == 3);
  CHECK((out.probs.array() > 0.0).all());
  CHECK((out.probs.array() < 1.0).all());
  REQUIRE(out.traj.size() == static_cast<std::size_t>(a.hs));
  for (const auto& t : out.traj) {
    CHECK(t.rows() == 3);
    CHECK(t.cols() == 3);
    CHECK(t.allFinite());
  }
  CHECK(m.cls_bn.initialized);
}

TEST_CASE("inference before any training batch fails in the batchnorm") {
  const ArchConfig a = tiny_arch();
  ModelParams<double> m = build_model<double>(a, 13);
  std::mt19937_64 rng(14);
  const Seq<double> x = random_input(a, 2, rng);
  ModelCache<double> cache;
  CHECK_THROWS_MATCHES(model_forward(m, x, false, cache), Error,
                       ErrcMatcher(Errc::infer_before_train));
}

TEST_CASE("wrong sequence length is rejected") {
  const ArchConfig a = tiny_arch();
  ModelParams<double> m = build_model<double>(a, 15);
  std::mt19937_64 rng(16);
  Seq<double> x = random_input(a, 2, rng);
  x.pop_back();
  ModelCache<double> cache;
  CHECK_THROWS_MATCHES(model_forward(m, x, true, cache), Error,
                       ErrcMatcher(Errc::shape_mismatch));
}

TEST_CASE("combined loss reproduces hand-computed values") {
  // One sample, one horizon step: mse over exactly 3 numbers.
  Seq<double> pred{(Mat<double>(3, 1) << 1.0, 2.0, 3.0).finished()};
  Seq<double> truth{(Mat<double>(3, 1) << 0.0, 2.0, 5.0).finished()};
  Mat<double> probs(5, 1);
  probs << 0.9, 0.2, 0.5, 0.1, 0.6;
  Mat<double> y(5, 1);
  y << 1, 0, 1, 0, 1;

  const LossValues lv = combined_loss(pred, truth, probs, y, LossWeights{1.0, 1.0});
  CHECK(lv.mse == Approx((1.0 + 0.0 + 4.0) / 3.0));
  const double bce = -(std::log(0.9) + std::log(0.8) + std::log(0.5) + std::log(0.9) +
                       std::log(0.6)) / 5.0;
  CHECK(lv.bce == Approx(bce));
  CHECK(lv.total == Approx(lv.mse + lv.bce));

  const LossValues weighted = combined_loss(pred, truth, probs, y, LossWeights{2.0, 0.5});
  CHECK(weighted.total == Approx(2.0 * lv.mse + 0.5 * lv.bce));
}

TEST_CASE("extreme probabilities are clamped to keep the loss finite") {
  Seq<double> pred{Mat<double>::Zero(3, 1)};
  Seq<double> truth{Mat<double>::Zero(3, 1)};
  Mat<double> probs(5, 1);
  probs << 1.0, 0.0, 1.0, 0.0, 0.5;
  Mat<double> y(5, 1);
  y << 0, 1, 1, 0, 1;  // first two are maximally wrong

  const LossValues lv = combined_loss(pred, truth, probs, y, LossWeights{1.0, 1.0});
  CHECK(std::isfinite(lv.bce));
  // Fully-wrong entries contribute -log(1e-7); the clamp also nudges the two
  // fully-right entries to -log(1 - 1e-7) instead of zero.
  const double wrong = -std::log(1e-7);
  const double right = -std::log(1.0 - 1e-7);
  const double want = (2.0 * wrong + 2.0 * right - std::log(0.5)) / 5.0;
  CHECK(lv.bce == Approx(want).epsilon(1e-9));
}

TEST_CASE("loss gradient formulas hold in logit and trajectory space") {
  std::mt19937_64 rng(21);
  const int B = 4, HS = 3;
  Seq<double> pred, truth;
  for (int t = 0; t < HS; ++t) {
    pred.push_back(oracle::random_mat(3, B, rng));
    truth.push_back(oracle::random_mat(3, B, rng));
  }
  Mat<double> probs = oracle::random_mat(5, B, rng, 0.4);
  probs = probs.array() + 0.5;  // inside (0.1, 0.9)
  Mat<double> y = Mat<double>::Zero(5, B);
  y(0, 0) = y(2, 1) = y(4, 2) = y(1, 3) = 1.0;

  const LossWeights w{1.7, 0.3};
  const LossGrads<double> g = combined_loss_grads(pred, truth, probs, y, w);
  REQUIRE(g.dtraj.size() == static_cast<std::size_t>(HS));
  for (int t = 0; t < HS; ++t) {
    const Mat<double> want = (2.0 * 1.7 / (B * HS * 3.0)) * (pred[t] - truth[t]);
    CHECK((g.dtraj[t] - want).cwiseAbs().maxCoeff() < 1e-15);
  }
  const Mat<double> want_logits = (0.3 / (B * 5.0)) * (probs - y);
  CHECK((g.dlogits - want_logits).cwiseAbs().maxCoeff() < 1e-15);

  // The logit-space shortcut equals the FD derivative of the full loss
  // against a logit z with p = sigmoid(z), where no clamping is active.
  const double z0 = 0.3, yv = 1.0;
  auto bce_of = [&](double z) {
    const double p = 1.0 / (1.0 + std::exp(-z));
    return -(yv * std::log(p) + (1 - yv) * std::log(1 - p));
  };
  const double eps = 1e-6;
  const double fd = (bce_of(z0 + eps) - bce_of(z0 - eps)) / (2 * eps);
  const double p0 = 1.0 / (1.0 + std::exp(-z0));
  CHECK(p0 - yv == Approx(fd).epsilon(1e-8));
}

TEST_CASE("full-model gradients match finite differences") {
  const ArchConfig a = tiny_arch();
  ModelParams<double> m = build_model<double>(a, 31);
  std::mt19937_64 rng(32);
  const Seq<double> x = random_input(a, 2, rng);
  const Targets tg = random_targets(a, 2, rng);
  const LossWeights w{1.0, 1.0};

  ModelCache<double> cache;
  const ModelOutput<double> out = model_forward(m, x, true, cache);
  const LossGrads<double> dLoss =
      combined_loss_grads(out.traj, tg.traj, out.probs, tg.y, w);
  const ModelGrads<double> g = model_backward(m, cache, dLoss);

  const auto fd = oracle::finite_difference(oracle::flatten(m),
                                            [&] { return model_loss(m, x, tg, w); });
  const double worst = oracle::max_rel_err(oracle::flatten_values(g), fd);
  CHECK(worst < 1e-3);
}

TEST_CASE("trunk gradients are the sum of both heads' contributions") {
  const ArchConfig a = tiny_arch();
  ModelParams<double> m = build_model<double>(a, 41);
  std::mt19937_64 rng(42);
  const Seq<double> x = random_input(a, 3, rng);
  const Targets tg = random_targets(a, 3, rng);

  auto grads_for = [&](double w_traj, double w_cls) {
    ModelCache<double> cache;
    const ModelOutput<double> out = model_forward(m, x, true, cache);
    const LossGrads<double> dLoss =
        combined_loss_grads(out.traj, tg.traj, out.probs, tg.y, {w_traj, w_cls});
    return model_backward(m, cache, dLoss);
  };

  const auto both = oracle::flatten_values(grads_for(1.0, 1.0));
  const auto traj_only = oracle::flatten_values(grads_for(1.0, 0.0));
  const auto cls_only = oracle::flatten_values(grads_for(0.0, 1.0));
  REQUIRE(both.size() == traj_only.size());
  for (std::size_t k = 0; k < both.size(); ++k)
    CHECK(both[k] == Approx(traj_only[k] + cls_only[k]).margin(1e-10));
}

TEST_CASE("zero classification weight silences the classification head") {
  const ArchConfig a = tiny_arch();
  ModelParams<double> m = build_model<double>(a, 51);
  std::mt19937_64 rng(52);
  const Seq<double> x = random_input(a, 2, rng);
  const Targets tg = random_targets(a, 2, rng);

  ModelCache<double> cache;
  const ModelOutput<double> out = model_forward(m, x, true, cache);
  const LossGrads<double> dLoss =
      combined_loss_grads(out.traj, tg.traj, out.probs, tg.y, {1.0, 0.0});
  const ModelGrads<double> g = model_backward(m, cache, dLoss);

  CHECK(g.cls_out.W.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.cls_dense.W.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.cls_bn.gamma.cwiseAbs().maxCoeff() == 0.0);
  // The trajectory head still trains.
  CHECK(g.traj_out.W.cwiseAbs().maxCoeff() > 0.0);
  CHECK(g.shared_lstm.Wc.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("doubling the trajectory weight exactly doubles its gradients") {
  const ArchConfig a = tiny_arch();
  ModelParams<double> m = build_model<double>(a, 61);
  std::mt19937_64 rng(62);
  const Seq<double> x = random_input(a, 2, rng);
  const Targets tg = random_targets(a, 2, rng);

  auto traj_grads = [&](double w_traj) {
    ModelCache<double> cache;
    const ModelOutput<double> out = model_forward(m, x, true, cache);
    const LossGrads<double> dLoss =
        combined_loss_grads(out.traj, tg.traj, out.probs, tg.y, {w_traj, 0.0});
    return model_backward(m, cache, dLoss);
  };
  const auto g1 = oracle::flatten_values(traj_grads(1.0));
  const auto g2 = oracle::flatten_values(traj_grads(2.0));
  for (std::size_t k = 0; k < g1.size(); ++k)
    CHECK(g2[k] == Approx(2.0 * g1[k]).margin(1e-14));
}

TEST_CASE("backward demands a train-mode cache") {
  const ArchConfig a = tiny_arch();
  ModelParams<double> m = build_model<double>(a, 71);
  std::mt19937_64 rng(72);
  const Seq<double> x = random_input(a, 2, rng);
  ModelCache<double> cache;
  model_forward(m, x, true, cache);   // initializes batchnorm
  model_forward(m, x, false, cache);  // overwrites with an inference cache

  LossGrads<double> dummy;
  dummy.dtraj.assign(static_cast<std::size_t>(a.hs), Mat<double>::Zero(3, 2));
  dummy.dlogits = Mat<double>::Zero(5, 2);
  CHECK_THROWS_MATCHES(model_backward(m, cache, dummy), Error,
                       ErrcMatcher(Errc::stale_cache));
}

TEST_CASE("non-finite activations are reported, not propagated") {
  const ArchConfig a = tiny_arch();
  ModelParams<double> m = build_model<double>(a, 81);
  m.traj_out.W(0, 0) = std::numeric_limits<double>::infinity();
  std::mt19937_64 rng(82);
  const Seq<double> x = random_input(a, 2, rng);
  ModelCache<double> cache;
  CHECK_THROWS_MATCHES(model_forward(m, x, true, cache), Error,
                       ErrcMatcher(Errc::non_finite_activation));
}

TEST_CASE("batch assembly casts windows into column-per-sample sequences") {
  LabeledFlight lf;
  lf.series.flight_id = "b";
  for (int t = 0; t < 12; ++t) {
    FlightRecord r;
    r.timestamp = 0.1 * t;
    r.wind_speed = 100.0 + t;
    r.orientation_w = 1.0;
    lf.series.records.push_back(r);
    lf.labels.push_back(t % kNumStates);
  }
  const WindowedDataset ds = slide_windows({lf}, 3, 2);
  const Batch<double> b = assemble_batch<double>(ds, {0, 4});
  REQUIRE(b.x.size() == 3);
  CHECK(b.x[0].rows() == kFeatureCount);
  CHECK(b.x[0].cols() == 2);
  CHECK(b.x[0](0, 0) == 100.0);   // window 0, step 0, wind_speed
  CHECK(b.x[0](0, 1) == 104.0);   // window 4
  CHECK(b.x[2](0, 1) == 106.0);
  REQUIRE(b.traj.size() == 2);
  CHECK(b.states.rows() == kNumStates);
  CHECK(b.states.cols() == 2);
  CHECK_THROWS_MATCHES(assemble_batch<double>(ds, {}), Error,
                       ErrcMatcher(Errc::empty_dataset));
}
