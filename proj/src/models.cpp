#include "shapecm/models.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "shapecm/channels.hpp"

namespace shapecm {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMat> mat_view(const ad::ParamVector& pv,
                                  const std::string& name) {
  const auto& info = pv.segment_info(name);
  return {pv.values().data() + info.offset, info.rows, info.cols};
}

Eigen::Map<const Eigen::VectorXd> vec_view(const ad::ParamVector& pv,
                                           const std::string& name) {
  const auto& info = pv.segment_info(name);
  return {pv.values().data() + info.offset, info.size()};
}

void fill_uniform(ad::ParamVector& pv, const std::string& name, double bound,
                  RngStream& rng) {
  auto seg = pv.segment(name);
  for (Eigen::Index i = 0; i < seg.size(); ++i)
    seg[i] = bound * (2.0 * rng.uniform() - 1.0);
}

// QAM warm start for the geometry head bias: points in the layout matching
// the partition (quadrant order when available, Gray order otherwise).
ArrayXcd geometry_init(TxKind kind, int m) {
  if (m >= 4 && m % 2 == 0)
    return kind == TxKind::Gs ? qam_constellation(m) : pas_qam_constellation(m);
  if (m == 2) return qam_constellation(2);
  ArrayXcd pts(Eigen::Index{1} << m);  // odd m: no QAM layout, ring start
  const double r = 1.0;
  for (Eigen::Index t = 0; t < pts.size(); ++t) {
    const double a = 2.0 * M_PI * static_cast<double>(t) / pts.size();
    pts[t] = std::complex<double>(r * std::cos(a), r * std::sin(a));
  }
  return pts;
}

Eigen::ArrayXd trunk_features(const ad::ParamVector& pv, double snr_db) {
  Eigen::VectorXd f(1);
  f[0] = snr_db / 20.0;
  Eigen::VectorXd h =
      ((mat_view(pv, "w1") * f) + vec_view(pv, "b1")).array().tanh();
  h = ((mat_view(pv, "w2") * h) + vec_view(pv, "b2")).array().tanh();
  return h.array();
}

ArrayXd stable_softmax(const ArrayXd& logits) {
  ArrayXd e = (logits - logits.maxCoeff()).exp();
  return e / e.sum();
}

void check_kind(const TxModel& model, TxKind expected, const char* who) {
  if (model.kind != expected)
    throw std::invalid_argument(std::string(who) + ": wrong model kind " +
                                tx_kind_name(model.kind));
}

}  // namespace

std::string tx_kind_name(TxKind k) {
  switch (k) {
    case TxKind::PsGs: return "psgs";
    case TxKind::MbQam: return "mbqam";
    case TxKind::Gs: return "gs";
    case TxKind::UniformQam: return "uniform-qam";
  }
  return "?";
}

TxKind tx_kind_from_name(const std::string& name) {
  if (name == "psgs") return TxKind::PsGs;
  if (name == "mbqam") return TxKind::MbQam;
  if (name == "gs") return TxKind::Gs;
  if (name == "uniform-qam") return TxKind::UniformQam;
  throw std::invalid_argument("unknown transmitter kind '" + name + "'");
}

TxModel init_tx_model(TxKind kind, int m, int k, int hidden,
                      std::uint64_t seed) {
  TxModel model;
  model.kind = kind;
  model.m = m;
  model.k = k;
  model.hidden = hidden;
  if (kind == TxKind::MbQam && (m % 2 != 0 || k != m - 2))
    throw std::invalid_argument("mbqam: requires even m and k = m-2");
  if (kind == TxKind::Gs) model.k = m;
  if (kind == TxKind::UniformQam) return model;
  if (model.k < 1 || model.k > m ||
      (kind == TxKind::PsGs && model.k > m - 1))
    throw std::invalid_argument("tx model: k out of range");

  auto& pv = model.params;
  pv.add("w1", hidden, 1);
  pv.add("b1", hidden);
  pv.add("w2", hidden, hidden);
  pv.add("b2", hidden);
  if (kind == TxKind::PsGs) {
    pv.add("wp", Eigen::Index{1} << model.k, hidden);
    pv.add("bp", Eigen::Index{1} << model.k);
  }
  if (kind == TxKind::MbQam) {
    pv.add("wmu", 1, hidden);
    pv.add("bmu", 1);
  }
  if (kind == TxKind::PsGs || kind == TxKind::Gs) {
    pv.add("wc", Eigen::Index{2} << m, hidden);
    pv.add("bc", Eigen::Index{2} << m);
  }

  RngStream rng(substream_seed(seed, 0x7478 /* "tx" */));
  fill_uniform(pv, "w1", 1.0, rng);
  fill_uniform(pv, "w2", 1.0 / std::sqrt(hidden), rng);
  if (kind == TxKind::PsGs)
    fill_uniform(pv, "wp", 1.0 / std::sqrt(hidden), rng);
  if (kind == TxKind::MbQam)
    fill_uniform(pv, "wmu", 1.0 / std::sqrt(hidden), rng);
  if (kind == TxKind::PsGs || kind == TxKind::Gs) {
    fill_uniform(pv, "wc", 0.01 / std::sqrt(hidden), rng);
    const ArrayXcd warm = geometry_init(kind, m);
    auto bc = pv.segment("bc");
    bc.head(warm.size()) = warm.real();
    bc.tail(warm.size()) = warm.imag();
  }
  return model;
}

std::pair<ShapingDistribution, ShapedConstellation> psgs_forward(
    const TxModel& model, double snr_db) {
  check_kind(model, TxKind::PsGs, "psgs_forward");
  const auto& pv = model.params;
  const Eigen::ArrayXd h = trunk_features(pv, snr_db);
  const ArrayXd logits =
      (mat_view(pv, "wp") * h.matrix()).array() + vec_view(pv, "bp").array();
  const ShapingDistribution p = stable_softmax(logits);
  const ArrayXd raw =
      (mat_view(pv, "wc") * h.matrix()).array() + vec_view(pv, "bc").array();
  const Eigen::Index n = Eigen::Index{1} << model.m;
  ArrayXcd pts(n);
  pts.real() = raw.head(n);
  pts.imag() = raw.tail(n);
  return {p, normalize(pts, p, model.m, model.k)};
}

ShapingDistribution mb_distribution(double mu,
                                    const ArrayXcd& quadrant_points) {
  if (mu < 0.0)
    throw std::invalid_argument("mb_distribution: mu = " + std::to_string(mu) +
                                " < 0");
  return stable_softmax(-mu * quadrant_points.abs2());
}

std::pair<ShapingDistribution, ShapedConstellation> mbqam_forward(
    const TxModel& model, double snr_db, double* mu_out) {
  check_kind(model, TxKind::MbQam, "mbqam_forward");
  const auto& pv = model.params;
  const Eigen::ArrayXd h = trunk_features(pv, snr_db);
  const double z =
      (mat_view(pv, "wmu") * h.matrix())(0, 0) + vec_view(pv, "bmu")(0);
  const double mu = z > 30.0 ? z : std::log1p(std::exp(std::max(z, -700.0)));
  if (mu_out) *mu_out = mu;
  const ArrayXcd geo = pas_qam_constellation(model.m);
  const ShapingDistribution p =
      mb_distribution(mu, geo.head(Eigen::Index{1} << model.k));
  return {p, normalize(geo, p, model.m, model.k)};
}

ShapedConstellation gs_forward(const TxModel& model, double snr_db) {
  check_kind(model, TxKind::Gs, "gs_forward");
  const auto& pv = model.params;
  const Eigen::ArrayXd h = trunk_features(pv, snr_db);
  const ArrayXd raw =
      (mat_view(pv, "wc") * h.matrix()).array() + vec_view(pv, "bc").array();
  const Eigen::Index n = Eigen::Index{1} << model.m;
  ArrayXcd pts(n);
  pts.real() = raw.head(n);
  pts.imag() = raw.tail(n);
  const ShapingDistribution uniform =
      ArrayXd::Constant(n, 1.0 / static_cast<double>(n));
  return normalize(pts, uniform, model.m, model.m);
}

TxForward tx_forward(const TxModel& model, double snr_db) {
  TxForward out;
  switch (model.kind) {
    case TxKind::PsGs:
      out.constellation = psgs_forward(model, snr_db).second;
      break;
    case TxKind::MbQam:
      out.constellation = mbqam_forward(model, snr_db, &out.mu).second;
      break;
    case TxKind::Gs:
      out.constellation = gs_forward(model, snr_db);
      break;
    case TxKind::UniformQam: {
      const Eigen::Index nshape = Eigen::Index{1} << model.k;
      out.constellation = make_shaped(
          model.m, model.k, qam_constellation(model.m),
          ArrayXd::Constant(nshape, 1.0 / static_cast<double>(nshape)));
      break;
    }
  }
  return out;
}

TxForwardVars tx_forward_on_tape(ad::Tape& tape, const ad::BoundParams& params,
                                 const TxModel& model, double snr_db) {
  using namespace ad;
  TxForwardVars out;
  const Eigen::Index n = Eigen::Index{1} << model.m;
  if (model.kind == TxKind::UniformQam) {
    const ArrayXcd geo = qam_constellation(model.m);
    const Eigen::Index nshape = Eigen::Index{1} << model.k;
    out.shaping = tape.leaf(
        ArrayXd::Constant(nshape, 1.0 / static_cast<double>(nshape)));
    out.x_re = tape.leaf(ArrayXd(geo.real()));
    out.x_im = tape.leaf(ArrayXd(geo.imag()));
    return out;
  }

  Var f = tape.leaf(snr_db / 20.0);
  Var h = tanh(matvec(params["w1"], f, model.hidden, 1) + params["b1"]);
  h = tanh(matvec(params["w2"], h, model.hidden, model.hidden) + params["b2"]);

  if (model.kind == TxKind::MbQam) {
    Var mu = softplus(matvec(params["wmu"], h, 1, model.hidden) +
                      params["bmu"]);
    const ArrayXcd geo = pas_qam_constellation(model.m);
    const ArrayXd quad_mag = geo.head(Eigen::Index{1} << model.k).abs2();
    out.shaping = softmax(-(broadcast(mu, static_cast<int>(quad_mag.size())) *
                            tape.leaf(quad_mag)));
    auto [xr, xi] = normalize_on_tape(tape.leaf(ArrayXd(geo.real())),
                                      tape.leaf(ArrayXd(geo.imag())),
                                      out.shaping, model.m, model.k);
    out.x_re = xr;
    out.x_im = xi;
    return out;
  }

  Var raw = matvec(params["wc"], h, static_cast<int>(2 * n), model.hidden) +
            params["bc"];
  Var raw_re = slice(raw, 0, static_cast<int>(n));
  Var raw_im = slice(raw, static_cast<int>(n), static_cast<int>(n));
  if (model.kind == TxKind::PsGs) {
    out.shaping = softmax(
        matvec(params["wp"], h, 1 << model.k, model.hidden) + params["bp"]);
  } else {  // Gs: uniform shaping, geometry-only optimization
    out.shaping =
        tape.leaf(ArrayXd::Constant(n, 1.0 / static_cast<double>(n)));
  }
  auto [xr, xi] =
      normalize_on_tape(raw_re, raw_im, out.shaping, model.m, model.k);
  out.x_re = xr;
  out.x_im = xi;
  return out;
}

ad::Var point_prior_on_tape(ad::Var shaping, int m, int k) {
  using namespace ad;
  if (k == m) return shaping;
  const int subs = 1 << (m - k);
  return scale(tile(shaping, subs), 1.0 / subs);
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("checkpoint: cannot write " + path);
  nlohmann::json meta;
  meta["format"] = "shapecm-checkpoint";
  meta["version"] = 1;
  meta["kind"] = tx_kind_name(ckpt.tx.kind);
  meta["m"] = ckpt.tx.m;
  meta["k"] = ckpt.tx.k;
  meta["hidden"] = ckpt.tx.hidden;
  meta["channel"] = ckpt.channel;
  meta["snr_lo"] = ckpt.snr_lo;
  meta["snr_hi"] = ckpt.snr_hi;
  meta["demapper_hidden"] =
      ckpt.demapper.has_value() ? ckpt.demapper->hidden : 0;
  f << meta.dump() << "\n";
  ckpt.tx.params.save(f);
  if (ckpt.demapper.has_value()) ckpt.demapper->params.save(f);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("checkpoint: cannot read " + path);
  std::string line;
  if (!std::getline(f, line))
    throw std::runtime_error("checkpoint: empty file " + path);
  const nlohmann::json meta = nlohmann::json::parse(line);
  if (meta.value("format", "") != "shapecm-checkpoint")
    throw std::runtime_error("checkpoint: bad header in " + path);
  Checkpoint ckpt;
  ckpt.tx.kind = tx_kind_from_name(meta.at("kind").get<std::string>());
  ckpt.tx.m = meta.at("m").get<int>();
  ckpt.tx.k = meta.at("k").get<int>();
  ckpt.tx.hidden = meta.at("hidden").get<int>();
  ckpt.channel = meta.value("channel", "awgn");
  ckpt.snr_lo = meta.value("snr_lo", 0.0);
  ckpt.snr_hi = meta.value("snr_hi", 20.0);
  if (ckpt.tx.kind != TxKind::UniformQam)
    ckpt.tx.params = ad::ParamVector::load(f);
  const int dh = meta.value("demapper_hidden", 0);
  if (dh > 0) {
    DemapperModel d;
    d.m = ckpt.tx.m;
    d.hidden = dh;
    d.params = ad::ParamVector::load(f);
    ckpt.demapper = std::move(d);
  }
  // Layout sanity: rebuild the expected layout and compare.
  if (ckpt.tx.kind != TxKind::UniformQam) {
    const TxModel ref =
        init_tx_model(ckpt.tx.kind, ckpt.tx.m, ckpt.tx.k, ckpt.tx.hidden, 0);
    if (!ref.params.same_layout(ckpt.tx.params))
      throw std::runtime_error("checkpoint: parameter layout mismatch in " +
                               path);
  }
  return ckpt;
}

}  // namespace shapecm
