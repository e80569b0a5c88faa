#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "shapecm/training.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace shapecm;
using shapecm::testing::check_tape_fn;

namespace {

// One parameter store holding both transmitter and demapper segments, so a
// single bound-params lookup serves both networks in FD checks.
ad::ParamVector merge_params(const ad::ParamVector& a,
                             const ad::ParamVector& b) {
  ad::ParamVector out;
  for (const auto& seg : a.segments()) out.add(seg.name, seg.rows, seg.cols);
  for (const auto& seg : b.segments()) out.add(seg.name, seg.rows, seg.cols);
  out.values().head(a.size()) = a.values();
  out.values().tail(b.size()) = b.values();
  return out;
}

// Generic-position parameters for FD checks: every segment gets magnitudes
// large enough that no gradient entry hides in finite-difference roundoff.
void randomize_params(ad::ParamVector& pv, std::uint64_t seed) {
  RngStream rng(seed);
  for (Eigen::Index i = 0; i < pv.size(); ++i)
    pv.values()[i] += 0.35 * (2.0 * rng.uniform() - 1.0);
}

std::vector<LossExample> fixed_batch(ChannelRealization::Kind kind, int m,
                                     int batch, std::uint64_t seed) {
  RngStream rng(seed);
  std::vector<LossExample> out(batch);
  for (int e = 0; e < batch; ++e) {
    out[e].snr_db = 4.0 + 8.0 * rng.uniform();
    const double n0 = snr_to_n0(out[e].snr_db);
    out[e].ch = kind == ChannelRealization::Kind::Awgn
                    ? make_awgn_realization(n0, Eigen::Index{1} << m, rng)
                    : make_rbf_realization(n0, Eigen::Index{1} << m, rng);
  }
  return out;
}

}  // namespace

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  ad::ParamVector p;
  p.add("x", 3);
  p.segment("x") << 1.0, -2.0, 0.5;
  AdamState st(p);
  const ad::ParamVector g = p.zeros_like();
  adam_step(p, g, st, 0.1, 0.9, 0.999, 1e-8);
  CHECK(p.segment("x")[0] == 1.0);
  CHECK(p.segment("x")[1] == -2.0);
  CHECK(p.segment("x")[2] == 0.5);
  CHECK(st.t == 1);
}

TEST_CASE("adam: constant gradient steps approach the learning rate") {
  ad::ParamVector p;
  p.add("x", 1);
  p.segment("x")[0] = 0.0;
  ad::ParamVector g = p.zeros_like();
  g.segment("x")[0] = 0.37;  // any fixed sign/magnitude
  AdamState st(p);
  double prev = 0.0;
  double step = 0.0;
  for (int i = 0; i < 300; ++i) {
    adam_step(p, g, st, 0.01, 0.9, 0.999, 1e-8);
    step = std::abs(p.segment("x")[0] - prev);
    prev = p.segment("x")[0];
  }
  CHECK(step == doctest::Approx(0.01).epsilon(0.01));
}

TEST_CASE("adam drives a quadratic to the origin") {
  ad::ParamVector p;
  p.add("x", 1);
  p.segment("x")[0] = 1.0;
  AdamState st(p);
  ad::ParamVector g = p.zeros_like();
  for (int i = 0; i < 200; ++i) {
    g.segment("x")[0] = 2.0 * p.segment("x")[0];
    adam_step(p, g, st, 0.1, 0.9, 0.999, 1e-8);
  }
  CHECK(std::abs(p.segment("x")[0]) < 1e-2);
}

TEST_CASE("loss of a noiseless antipodal pair approaches -1 bit") {
  ad::Tape tape;
  TxModel meta;
  meta.kind = TxKind::UniformQam;
  meta.m = 1;
  meta.k = 1;
  TxForwardVars tx;
  Eigen::ArrayXd xr(2), xi(2), p(2);
  xr << -1.0, 1.0;
  xi << 0.0, 0.0;
  p << 0.5, 0.5;
  tx.x_re = tape.leaf(xr);
  tx.x_im = tape.leaf(xi);
  tx.shaping = tape.leaf(p);
  LossExample ex;
  ex.snr_db = 200.0;  // n0 -> 0
  RngStream rng(61);
  ex.ch = make_awgn_realization(snr_to_n0(ex.snr_db), 2, rng);
  const ad::Var loss =
      example_loss_bits_on_tape(tape, meta, tx, nullptr, nullptr, ex);
  CHECK(tape.scalar(loss) == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("loss graph gradient matches finite differences (psgs, exact)") {
  TxModel model = init_tx_model(TxKind::PsGs, 2, 1, 8, 71);
  randomize_params(model.params, 171);
  const auto batch = fixed_batch(ChannelRealization::Kind::Awgn, 2, 2, 72);
  const auto res = check_tape_fn(
      [&](ad::Tape& t, const ad::BoundParams& p) {
        return build_loss_graph(t, model, p, nullptr, nullptr, batch);
      },
      model.params);
  CHECK(res.finite);
  CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("loss graph gradient matches finite differences (mbqam, exact)") {
  TxModel model = init_tx_model(TxKind::MbQam, 4, 2, 8, 73);
  randomize_params(model.params, 173);
  const auto batch = fixed_batch(ChannelRealization::Kind::Awgn, 4, 2, 74);
  const auto res = check_tape_fn(
      [&](ad::Tape& t, const ad::BoundParams& p) {
        return build_loss_graph(t, model, p, nullptr, nullptr, batch);
      },
      model.params);
  CHECK(res.finite);
  CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("loss graph gradient matches finite differences (gs, exact)") {
  TxModel model = init_tx_model(TxKind::Gs, 2, 1, 8, 75);
  randomize_params(model.params, 175);
  const auto batch = fixed_batch(ChannelRealization::Kind::Awgn, 2, 2, 76);
  const auto res = check_tape_fn(
      [&](ad::Tape& t, const ad::BoundParams& p) {
        return build_loss_graph(t, model, p, nullptr, nullptr, batch);
      },
      model.params);
  CHECK(res.finite);
  CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("joint transmitter/demapper gradient matches FD on RBF") {
  TxModel model = init_tx_model(TxKind::PsGs, 2, 1, 8, 77);
  randomize_params(model.params, 177);
  DemapperModel dm = init_demapper(2, 8, 78);
  const ad::ParamVector joint = merge_params(model.params, dm.params);
  const auto batch = fixed_batch(ChannelRealization::Kind::Rbf, 2, 2, 79);
  const auto res = check_tape_fn(
      [&](ad::Tape& t, const ad::BoundParams& p) {
        return build_loss_graph(t, model, p, &dm, &p, batch);
      },
      joint);
  CHECK(res.finite);
  CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("NN demapper on reduced AWGN matches FD") {
  TxModel model = init_tx_model(TxKind::PsGs, 2, 1, 8, 80);
  randomize_params(model.params, 180);
  DemapperModel dm = init_demapper(2, 8, 81);
  const ad::ParamVector joint = merge_params(model.params, dm.params);
  const auto batch = fixed_batch(ChannelRealization::Kind::Awgn, 2, 2, 82);
  const auto res = check_tape_fn(
      [&](ad::Tape& t, const ad::BoundParams& p) {
        return build_loss_graph(t, model, p, &dm, &p, batch);
      },
      joint);
  CHECK(res.finite);
  CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("loss_estimate standard error shrinks like 1/sqrt(B)") {
  TxModel model;
  model.kind = TxKind::UniformQam;
  model.m = 4;
  model.k = 2;
  const LossStats small = loss_estimate(model, std::nullopt,
                                        ChannelRealization::Kind::Awgn, 8.0,
                                        200, 91);
  const LossStats large = loss_estimate(model, std::nullopt,
                                        ChannelRealization::Kind::Awgn, 8.0,
                                        3200, 92);
  const double ratio = small.std_error / large.std_error;
  CHECK(ratio > 2.4);  // expect ~4 = sqrt(16)
  CHECK(ratio < 6.7);
  // Means agree within joint noise.
  CHECK(std::abs(small.mean - large.mean) <
        3.5 * std::sqrt(small.std_error * small.std_error +
                        large.std_error * large.std_error));
}

TEST_CASE("random NN demapper never beats the exact posterior") {
  TxModel model;
  model.kind = TxKind::UniformQam;
  model.m = 4;
  model.k = 2;
  const DemapperModel dm = init_demapper(4, 32, 93);
  const LossStats exact = loss_estimate(model, std::nullopt,
                                        ChannelRealization::Kind::Awgn, 9.0,
                                        2000, 94);
  const LossStats nn = loss_estimate(model, dm,
                                     ChannelRealization::Kind::Awgn, 9.0,
                                     2000, 94);
  const double se = 3.0 * std::sqrt(exact.std_error * exact.std_error +
                                    nn.std_error * nn.std_error);
  CHECK(-nn.mean <= -exact.mean + se);  // KL >= 0
}

TEST_CASE("zero-iteration training returns the initialization") {
  TrainConfig cfg;
  cfg.model_kind = TxKind::PsGs;
  cfg.m = 2;
  cfg.k = 1;
  cfg.tx_hidden = 8;
  cfg.iterations = 0;
  cfg.batch_size = 4;
  cfg.snr_lo_db = -2.0;
  cfg.snr_hi_db = 2.0;
  cfg.seeds = {5};
  cfg.val_points = 3;
  cfg.val_realizations = 50;
  cfg.threads = 1;
  const TrainResult res = train(cfg);
  REQUIRE(res.per_seed.size() == 1);
  CHECK(res.per_seed[0].loss.empty());
  const TxModel init = init_tx_model(TxKind::PsGs, 2, 1, 8,
                                     substream_seed(cfg.master_seed, 0xA1, 5));
  for (Eigen::Index i = 0; i < init.params.size(); ++i)
    CHECK(res.per_seed[0].final_tx.values()[i] == init.params.values()[i]);
}

TEST_CASE("identical config and seed reproduce training bit-exactly") {
  TrainConfig cfg;
  cfg.model_kind = TxKind::PsGs;
  cfg.m = 2;
  cfg.k = 1;
  cfg.tx_hidden = 8;
  cfg.iterations = 25;
  cfg.batch_size = 8;
  cfg.snr_lo_db = -2.0;
  cfg.snr_hi_db = 2.0;
  cfg.seeds = {3};
  cfg.val_points = 3;
  cfg.val_realizations = 100;
  cfg.val_period = 10;
  cfg.val_realizations_periodic = 50;
  cfg.threads = 2;
  const TrainResult a = train(cfg);
  const TrainResult b = train(cfg);
  REQUIRE(a.per_seed.size() == 1);
  REQUIRE(a.per_seed[0].loss.size() == b.per_seed[0].loss.size());
  for (std::size_t i = 0; i < a.per_seed[0].loss.size(); ++i)
    CHECK(a.per_seed[0].loss[i] == b.per_seed[0].loss[i]);
  for (Eigen::Index i = 0; i < a.per_seed[0].final_tx.size(); ++i)
    CHECK(a.per_seed[0].final_tx.values()[i] ==
          b.per_seed[0].final_tx.values()[i]);
  CHECK(a.per_seed[0].final_val_loss == b.per_seed[0].final_val_loss);
}

TEST_CASE("tiny instance trains to the brute-force optimum at 0 dB") {
  TrainConfig cfg;
  cfg.model_kind = TxKind::PsGs;
  cfg.m = 2;
  cfg.k = 1;
  cfg.tx_hidden = 16;
  cfg.iterations = 2000;
  cfg.batch_size = 100;
  cfg.snr_lo_db = -2.0;
  cfg.snr_hi_db = 2.0;
  cfg.seeds = {1};
  cfg.val_points = 5;
  cfg.val_realizations = 1000;
  cfg.val_period = 250;
  cfg.val_realizations_periodic = 200;
  cfg.patience = 2000;
  cfg.threads = 2;
  const TrainResult res = train(cfg);
  REQUIRE(res.best_index == 0);

  const LossStats at0 = loss_estimate(res.best_tx, std::nullopt,
                                      ChannelRealization::Kind::Awgn, 0.0,
                                      20000, 95);
  const double trained_bmi = -at0.mean;
  const double best = shapecm::testing::best_two_point_scheme_bmi(1.0);
  INFO("trained ", trained_bmi, " oracle ", best);
  CHECK(trained_bmi >= best - 0.02 - 3.0 * at0.std_error);
  CHECK(trained_bmi <= best + 0.02 + 3.0 * at0.std_error);
}

TEST_CASE("trained NN demapper closes on the exact posterior at 10 dB") {
  TrainConfig cfg;
  cfg.model_kind = TxKind::UniformQam;
  cfg.m = 6;
  cfg.k = 4;
  cfg.channel = ChannelRealization::Kind::Awgn;
  cfg.demapper = DemapperKind::Nn;
  cfg.demapper_hidden = 48;
  cfg.iterations = 1500;
  cfg.batch_size = 48;
  cfg.snr_lo_db = 8.0;
  cfg.snr_hi_db = 12.0;
  cfg.seeds = {1};
  cfg.val_points = 3;
  cfg.val_realizations = 400;
  cfg.val_period = 250;
  cfg.val_realizations_periodic = 150;
  cfg.patience = 1500;
  cfg.threads = 2;
  const TrainResult res = train(cfg);
  REQUIRE(res.best_index == 0);
  REQUIRE(res.best_demapper.has_value());

  const LossStats exact = loss_estimate(res.best_tx, std::nullopt,
                                        ChannelRealization::Kind::Awgn, 10.0,
                                        4000, 96);
  const LossStats nn = loss_estimate(res.best_tx, res.best_demapper,
                                     ChannelRealization::Kind::Awgn, 10.0,
                                     4000, 96);
  const double gap = (-exact.mean) - (-nn.mean);  // cross-entropy excess
  const double se = 3.0 * std::sqrt(exact.std_error * exact.std_error +
                                    nn.std_error * nn.std_error);
  INFO("exact ", -exact.mean, " nn ", -nn.mean, " gap ", gap);
  CHECK(gap <= 0.05 + se);
  CHECK(gap >= -se);
}
