#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "shapecm/models.hpp"
#include "test_util.hpp"

using namespace shapecm;

namespace {

void check_tape_matches_plain(const TxModel& model, double snr_db) {
  const TxForward plain = tx_forward(model, snr_db);
  ad::Tape tape;
  const ad::BoundParams bp = ad::bind(tape, model.params);
  const TxForwardVars vars = tx_forward_on_tape(tape, bp, model, snr_db);
  const ShapedConstellation& c = plain.constellation;
  for (Eigen::Index t = 0; t < c.points.size(); ++t) {
    CHECK(tape.value(vars.x_re)[t] ==
          doctest::Approx(c.points[t].real()).epsilon(1e-12));
    CHECK(tape.value(vars.x_im)[t] ==
          doctest::Approx(c.points[t].imag()).epsilon(1e-12));
  }
  REQUIRE(tape.value(vars.shaping).size() == c.shaping.size());
  for (Eigen::Index l = 0; l < c.shaping.size(); ++l)
    CHECK(tape.value(vars.shaping)[l] ==
          doctest::Approx(c.shaping[l]).epsilon(1e-12));
}

}  // namespace

TEST_CASE("zero-initialized geometry head is rejected as degenerate") {
  TxModel model = init_tx_model(TxKind::PsGs, 6, 4, 64, 1);
  model.params.set_zero();  // all raw points coincide at the origin
  CHECK_THROWS_AS(psgs_forward(model, 10.0), std::invalid_argument);
}

TEST_CASE("psgs forward satisfies the per-sub-constellation power constraint") {
  const TxModel model = init_tx_model(TxKind::PsGs, 6, 4, 64, 2);
  for (double snr : {0.0, 7.5, 13.0, 20.0}) {
    const auto [p, c] = psgs_forward(model, snr);
    for (int j = 0; j < 4; ++j) {
      const double power = (p * c.points.segment(j * 16, 16).abs2()).sum();
      CHECK(std::abs(power - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("psgs warm start is QAM plus a small perturbation") {
  const TxModel model = init_tx_model(TxKind::PsGs, 6, 4, 64, 3);
  const auto [p, c] = psgs_forward(model, 10.0);
  const Eigen::ArrayXcd pas = pas_qam_constellation(6);
  double max_dev = 0.0;
  for (int t = 0; t < 64; ++t)
    max_dev = std::max(max_dev, std::abs(c.points[t] - pas[t]));
  CHECK(max_dev < 0.2);   // near the QAM layout
  CHECK(max_dev > 0.0);   // but not exactly on it
  CHECK((p > 0.0).all());
}

TEST_CASE("psgs tape forward matches the plain forward") {
  const TxModel model = init_tx_model(TxKind::PsGs, 6, 4, 64, 4);
  check_tape_matches_plain(model, 11.0);
  const TxModel model12 = init_tx_model(TxKind::PsGs, 6, 3, 64, 5);
  check_tape_matches_plain(model12, 6.0);
}

TEST_CASE("forward passes are deterministic") {
  const TxModel model = init_tx_model(TxKind::PsGs, 6, 4, 64, 6);
  const auto [p1, c1] = psgs_forward(model, 9.0);
  const auto [p2, c2] = psgs_forward(model, 9.0);
  for (int l = 0; l < 16; ++l) CHECK(p1[l] == p2[l]);
  for (int t = 0; t < 64; ++t) CHECK(c1.points[t] == c2.points[t]);
}

TEST_CASE("mb distribution: zero mu is uniform") {
  const Eigen::ArrayXcd quad = pas_qam_constellation(6).head(16);
  const ShapingDistribution p = mb_distribution(0.0, quad);
  for (int l = 0; l < 16; ++l)
    CHECK(p[l] == doctest::Approx(1.0 / 16.0).epsilon(1e-14));
}

TEST_CASE("mb distribution: large mu concentrates on the lowest energy") {
  const Eigen::ArrayXcd quad = pas_qam_constellation(6).head(16);
  const ShapingDistribution p = mb_distribution(500.0, quad);
  Eigen::Index argmax = 0;
  p.maxCoeff(&argmax);
  Eigen::Index argmin_e = 0;
  quad.abs2().minCoeff(&argmin_e);
  CHECK(argmax == argmin_e);
  CHECK(p[argmax] > 0.999);
}

TEST_CASE("mb distribution matches a direct evaluation at mu = 0.1") {
  const Eigen::ArrayXcd quad = pas_qam_constellation(6).head(16);
  const ShapingDistribution p = mb_distribution(0.1, quad);
  // One-line oracle: p(x) = exp(-mu |x|^2) / sum exp(-mu |x'|^2).
  const Eigen::ArrayXd direct =
      (-0.1 * quad.abs2()).exp() / (-0.1 * quad.abs2()).exp().sum();
  for (int l = 0; l < 16; ++l)
    CHECK(p[l] == doctest::Approx(direct[l]).epsilon(1e-12));
  CHECK_THROWS_AS(mb_distribution(-0.1, quad), std::invalid_argument);
}

TEST_CASE("mbqam forced to mu = 0 reduces to uniform QAM") {
  TxModel model = init_tx_model(TxKind::MbQam, 6, 4, 64, 7);
  model.params.set_zero();
  model.params.segment("bmu")[0] = -60.0;  // softplus -> ~1e-26
  double mu = 1.0;
  const auto [p, c] = mbqam_forward(model, 10.0, &mu);
  CHECK(mu < 1e-12);
  for (int l = 0; l < 16; ++l)
    CHECK(p[l] == doctest::Approx(1.0 / 16.0).epsilon(1e-12));
  const Eigen::ArrayXcd pas = pas_qam_constellation(6);
  for (int t = 0; t < 64; ++t) CHECK(std::abs(c.points[t] - pas[t]) < 1e-9);
  CHECK(source_entropy_bits(p, 6, 4) == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("mbqam keeps per-quadrant unit power for any mu") {
  const TxModel model = init_tx_model(TxKind::MbQam, 6, 4, 64, 8);
  for (double snr : {2.0, 10.0, 18.0}) {
    const auto [p, c] = mbqam_forward(model, snr);
    for (int j = 0; j < 4; ++j) {
      const double power = (p * c.points.segment(j * 16, 16).abs2()).sum();
      CHECK(std::abs(power - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("mbqam with a constant head reproduces fixed-MB shaping") {
  TxModel model = init_tx_model(TxKind::MbQam, 6, 4, 64, 9);
  model.params.set_zero();
  model.params.segment("bmu")[0] = 0.4;
  const double mu_fixed = std::log1p(std::exp(0.4));
  const auto [p, c] = mbqam_forward(model, 13.0);
  const Eigen::ArrayXcd pas = pas_qam_constellation(6);
  const ShapingDistribution expect = mb_distribution(mu_fixed, pas.head(16));
  for (int l = 0; l < 16; ++l)
    CHECK(p[l] == doctest::Approx(expect[l]).epsilon(1e-12));
  const ShapedConstellation ref = normalize(pas, expect, 6, 4);
  for (int t = 0; t < 64; ++t)
    CHECK(std::abs(c.points[t] - ref.points[t]) < 1e-12);
}

TEST_CASE("mbqam tape forward matches the plain forward") {
  const TxModel model = init_tx_model(TxKind::MbQam, 6, 4, 64, 10);
  check_tape_matches_plain(model, 8.0);
}

TEST_CASE("mbqam requires the PAS rate") {
  CHECK_THROWS_AS(init_tx_model(TxKind::MbQam, 6, 3, 64, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(init_tx_model(TxKind::MbQam, 5, 3, 64, 1),
                  std::invalid_argument);
}

TEST_CASE("gs forward: unit power, full entropy, tape equality") {
  const TxModel model = init_tx_model(TxKind::Gs, 6, 4, 64, 11);
  CHECK(model.k == 6);
  const ShapedConstellation c = gs_forward(model, 12.0);
  CHECK(std::abs((c.shaping * c.points.abs2()).sum() - 1.0) < 1e-9);
  CHECK(source_entropy_bits(c.shaping, 6, 6) == 6.0);
  check_tape_matches_plain(model, 12.0);
}

TEST_CASE("uniform QAM model forwards without parameters") {
  TxModel model;
  model.kind = TxKind::UniformQam;
  model.m = 6;
  model.k = 4;
  const TxForward fwd = tx_forward(model, 10.0);
  CHECK(fwd.constellation.points.abs2().mean() ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(source_entropy_bits(fwd.constellation.shaping, 6, 4) == 6.0);
  check_tape_matches_plain(model, 10.0);
}

TEST_CASE("checkpoints round-trip through disk") {
  namespace fs = std::filesystem;
  const std::string path = "build/test_ckpt_roundtrip.ckpt";
  Checkpoint ck;
  ck.tx = init_tx_model(TxKind::PsGs, 6, 4, 32, 12);
  DemapperModel dm = init_demapper(6, 48, 13);
  ck.demapper = dm;
  ck.channel = "rbf";
  ck.snr_lo = 5.0;
  ck.snr_hi = 25.0;
  save_checkpoint(path, ck);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.tx.kind == TxKind::PsGs);
  CHECK(back.tx.m == 6);
  CHECK(back.tx.k == 4);
  CHECK(back.tx.hidden == 32);
  CHECK(back.channel == "rbf");
  REQUIRE(back.demapper.has_value());
  CHECK(back.demapper->hidden == 48);
  for (Eigen::Index i = 0; i < ck.tx.params.size(); ++i)
    CHECK(back.tx.params.values()[i] == ck.tx.params.values()[i]);
  for (Eigen::Index i = 0; i < dm.params.size(); ++i)
    CHECK(back.demapper->params.values()[i] == dm.params.values()[i]);
  fs::remove(path);
}
