#include "shapecm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <thread>

namespace shapecm {

namespace {

constexpr double kLnFloor = -69.0775527898213705;  // ln(1e-30)
constexpr double kInvLn2 = 1.4426950408889634;
constexpr std::uint64_t kStreamBmi = 0xB311;
constexpr std::uint64_t kStreamBer = 0xBE12;

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::min(hw == 0 ? 1u : hw, 4u));
}

void parallel_points(std::size_t count, int threads,
                     const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t per = (count + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const std::size_t begin = t * per;
    const std::size_t end = std::min(count, begin + per);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] {
      for (std::size_t i = begin; i < end; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

double stable_softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

// Inverse-CDF sampler over a shaping distribution ("perfect DM").
struct ShapingSampler {
  std::vector<double> cdf;
  explicit ShapingSampler(const ShapingDistribution& p) {
    cdf.resize(p.size());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      acc += p[i];
      cdf[i] = acc;
    }
    cdf.back() = 1.0;
  }
  int draw(double u) const {
    return static_cast<int>(
        std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
  }
};

double nn_true_bits_log2sum(const Eigen::MatrixXd& llrs, int col, int t,
                            int m) {
  double acc = 0.0;
  for (int i = 0; i < m; ++i) {
    const double sgn = label_bit(t, i, m) ? -1.0 : 1.0;
    acc += std::max(-stable_softplus(sgn * llrs(i, col)), kLnFloor);
  }
  return acc * kInvLn2;
}

}  // namespace

std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::Psgs23: return "psgs-2/3";
    case Scheme::Psgs12: return "psgs-1/2";
    case Scheme::Mbqam23: return "mbqam-2/3";
    case Scheme::Gs: return "gs";
    case Scheme::UniformQam: return "uniform-qam";
  }
  return "?";
}

Scheme scheme_from_name(const std::string& name) {
  if (name == "psgs-2/3") return Scheme::Psgs23;
  if (name == "psgs-1/2") return Scheme::Psgs12;
  if (name == "mbqam-2/3") return Scheme::Mbqam23;
  if (name == "gs") return Scheme::Gs;
  if (name == "uniform-qam") return Scheme::UniformQam;
  throw std::invalid_argument("unknown scheme '" + name + "'");
}

ResolvedScheme resolve_scheme(Scheme s) {
  switch (s) {
    case Scheme::Psgs23: return {TxKind::PsGs, 6, 4, 4, 2.0 / 3.0};
    case Scheme::Psgs12: return {TxKind::PsGs, 6, 3, 3, 0.5};
    case Scheme::Mbqam23: return {TxKind::MbQam, 6, 4, 4, 2.0 / 3.0};
    case Scheme::Gs: return {TxKind::Gs, 6, 6, 4, 2.0 / 3.0};
    case Scheme::UniformQam: return {TxKind::UniformQam, 6, 4, 4, 2.0 / 3.0};
  }
  throw std::invalid_argument("bad scheme");
}

void ExperimentConfig::validate() const {
  if (snr_grid_db.empty())
    throw std::invalid_argument("experiment config: empty SNR grid");
  for (std::size_t i = 1; i < snr_grid_db.size(); ++i)
    if (!(snr_grid_db[i] > snr_grid_db[i - 1]))
      throw std::invalid_argument(
          "experiment config: SNR grid must be strictly increasing");
  if (samples < 1)
    throw std::invalid_argument("experiment config: samples >= 1");
  if (fade_block < 1)
    throw std::invalid_argument("experiment config: fade_block >= 1");
}

std::vector<PointEstimate> estimate_bmi(
    const ExperimentConfig& cfg, const TxModel& model,
    const std::optional<DemapperModel>& demapper) {
  cfg.validate();
  if (cfg.channel == ChannelRealization::Kind::Rbf && !demapper.has_value())
    throw std::invalid_argument("estimate_bmi: RBF evaluation needs the NN "
                                "demapper");
  const int threads = resolve_threads(cfg.threads);
  std::vector<PointEstimate> out(cfg.snr_grid_db.size());

  parallel_points(out.size(), threads, [&](std::size_t p) {
    const double snr_db = cfg.snr_grid_db[p];
    const double n0 = snr_to_n0(snr_db);
    const TxForward fwd = tx_forward(model, snr_db);
    const ShapedConstellation& c = fwd.constellation;
    const int m = c.m, k = c.k;
    const int subs = 1 << (m - k);
    const ArrayXd pd = point_probabilities(c.shaping, m, k);
    const double entropy = source_entropy_bits(c.shaping, m, k);
    const ShapingSampler sampler(c.shaping);
    RngStream rng(substream_seed(cfg.seed, kStreamBmi, p));

    double sum = 0.0, sum_sq = 0.0;
    if (!demapper.has_value()) {
      const ExactDemapper dm(c.points, pd);
      for (long s = 0; s < cfg.samples; ++s) {
        const int j =
            subs > 1 ? static_cast<int>(rng.uniform() * subs) % subs : 0;
        const int l = sampler.draw(rng.uniform());
        const int t = (j << k) | l;
        const std::complex<double> y =
            std::complex<double>(c.points[t]) + rng.cgaussian(n0);
        const double w = dm.true_bit_log2post_sum(y, t, n0);
        sum += w;
        sum_sq += w * w;
      }
    } else {
      const long chunk = 512;
      Eigen::MatrixXd feats(5, chunk);
      std::vector<int> ts(chunk);
      long done = 0;
      while (done < cfg.samples) {
        const long batch = std::min(chunk, cfg.samples - done);
        for (long i = 0; i < batch; ++i) {
          const int j =
              subs > 1 ? static_cast<int>(rng.uniform() * subs) % subs : 0;
          const int l = sampler.draw(rng.uniform());
          const int t = (j << k) | l;
          ts[i] = t;
          std::complex<double> y_hat, h_hat;
          if (cfg.channel == ChannelRealization::Kind::Awgn) {
            y_hat = std::complex<double>(c.points[t]) + rng.cgaussian(n0);
            h_hat = {1.0, 0.0};
          } else {
            const std::complex<double> h = rng.cgaussian(1.0);
            const std::complex<double> pilot = h + rng.cgaussian(n0);
            const std::complex<double> y =
                h * std::complex<double>(c.points[t]) + rng.cgaussian(n0);
            h_hat = lmmse_estimate(pilot, n0);
            y_hat = equalize(y, h_hat);
          }
          feats(0, i) = y_hat.real();
          feats(1, i) = y_hat.imag();
          feats(2, i) = h_hat.real();
          feats(3, i) = h_hat.imag();
          feats(4, i) = snr_db / 20.0;
        }
        const Eigen::MatrixXd llrs =
            nn_demap_llrs(feats.leftCols(batch), *demapper);
        for (long i = 0; i < batch; ++i) {
          const double w =
              nn_true_bits_log2sum(llrs, static_cast<int>(i), ts[i], m);
          sum += w;
          sum_sq += w * w;
        }
        done += batch;
      }
    }
    const double mean = sum / cfg.samples;
    const double var =
        cfg.samples > 1
            ? std::max(0.0, (sum_sq - cfg.samples * mean * mean) /
                                (cfg.samples - 1))
            : 0.0;
    PointEstimate pe;
    pe.snr_db = snr_db;
    pe.value = std::max(entropy + mean, 0.0);
    pe.std_error = std::sqrt(var / cfg.samples);
    out[p] = pe;
  });
  return out;
}

double compute_se(const ShapingDistribution& shaping, int m, int k, double r) {
  if (std::abs(r - static_cast<double>(k) / m) > 1e-9)
    throw std::invalid_argument("compute_se: r != k/m");
  return source_entropy_bits(shaping, m, k) - (m - k);
}

std::vector<PointEstimate> spectral_efficiency_curve(
    const ExperimentConfig& cfg, const TxModel& model) {
  cfg.validate();
  const ResolvedScheme rs = resolve_scheme(cfg.scheme);
  std::vector<PointEstimate> out;
  for (double snr_db : cfg.snr_grid_db) {
    const TxForward fwd = tx_forward(model, snr_db);
    // SE = H(X) - m(1-r): the shaping entropy term uses the model's own
    // partition, the code-rate term uses the coded chain's rate.
    const double h = source_entropy_bits(fwd.constellation.shaping,
                                         fwd.constellation.m,
                                         fwd.constellation.k);
    out.push_back({snr_db, h - rs.m * (1.0 - rs.rate), 0.0});
  }
  return out;
}

std::vector<BerPoint> run_ber(const ExperimentConfig& cfg,
                              const TxModel& model,
                              const std::optional<DemapperModel>& demapper,
                              const fec::LdpcCode& code) {
  cfg.validate();
  const ResolvedScheme rs = resolve_scheme(cfg.scheme);
  const int m = model.m;
  const int k = rs.k_code;
  if (code.n() % m != 0)
    throw std::invalid_argument("run_ber: code length not divisible by m");
  const int q = code.n() / m;
  if (code.info_bits() != q * k)
    throw std::invalid_argument(
        "run_ber: code rate does not match the scheme's k/m split");
  if (cfg.channel == ChannelRealization::Kind::Rbf && !demapper.has_value())
    throw std::invalid_argument("run_ber: RBF evaluation needs the NN "
                                "demapper");
  const int threads = resolve_threads(cfg.threads);
  std::vector<BerPoint> out(cfg.snr_grid_db.size());

  parallel_points(out.size(), threads, [&](std::size_t p) {
    const double snr_db = cfg.snr_grid_db[p];
    const double n0 = snr_to_n0(snr_db);
    const TxForward fwd = tx_forward(model, snr_db);
    const ShapedConstellation& c = fwd.constellation;
    const bool shaped = c.k == k;
    if (!shaped) {
      // Geometry-only and uniform schemes: info bits are iid uniform.
      if ((c.shaping - c.shaping[0]).abs().maxCoeff() > 1e-12)
        throw std::invalid_argument(
            "run_ber: nonuniform shaping must match the code's k");
    }
    const ArrayXd pd = point_probabilities(c.shaping, c.m, c.k);
    const ShapingSampler sampler(c.shaping);
    const ExactDemapper exact_dm(c.points, pd);
    RngStream rng(substream_seed(cfg.seed, kStreamBer, p));

    BerPoint bp;
    bp.snr_db = snr_db;
    std::vector<std::uint8_t> info(static_cast<std::size_t>(q) * k);
    ArrayXd llr_sym(static_cast<Eigen::Index>(q) * m);
    Eigen::MatrixXd feats(5, q);

    while (bp.codewords < cfg.ber_max_codewords &&
           (bp.codewords < cfg.ber_min_codewords ||
            bp.errors < cfg.ber_min_errors)) {
      // Shaped info bits (perfect DM), then systematic encoding.
      for (int i = 0; i < q; ++i) {
        const int bi = shaped ? sampler.draw(rng.uniform())
                              : static_cast<int>(rng.uniform() * (1 << k)) %
                                    (1 << k);
        for (int b = 0; b < k; ++b)
          info[static_cast<std::size_t>(i) * k + b] =
              static_cast<std::uint8_t>((bi >> (k - 1 - b)) & 1);
      }
      const std::vector<std::uint8_t> cw = fec::encode(info, code);
      const std::vector<std::uint8_t> parity(cw.begin() + q * k, cw.end());
      const std::vector<fec::SymbolBits> placed =
          fec::bit_placement(info, parity, m, k);

      ArrayXcd x(q);
      for (int i = 0; i < q; ++i)
        x[i] = c.points[fec::point_index(placed[i], k)];

      if (cfg.channel == ChannelRealization::Kind::Awgn &&
          !demapper.has_value()) {
        for (int i = 0; i < q; ++i) {
          const std::complex<double> y =
              std::complex<double>(x[i]) + rng.cgaussian(n0);
          llr_sym.segment(static_cast<Eigen::Index>(i) * m, m) =
              exact_dm.posteriors(y, n0).llr;
        }
      } else {
        std::complex<double> cur_h{1.0, 0.0}, cur_h_hat{1.0, 0.0};
        for (int i = 0; i < q; ++i) {
          std::complex<double> y_hat, h_hat;
          if (cfg.channel == ChannelRealization::Kind::Awgn) {
            y_hat = std::complex<double>(x[i]) + rng.cgaussian(n0);
            h_hat = {1.0, 0.0};
          } else {
            if (i % cfg.fade_block == 0) {
              cur_h = rng.cgaussian(1.0);
              cur_h_hat = lmmse_estimate(cur_h + rng.cgaussian(n0), n0);
            }
            const std::complex<double> y =
                cur_h * std::complex<double>(x[i]) + rng.cgaussian(n0);
            h_hat = cur_h_hat;
            y_hat = equalize(y, h_hat);
          }
          feats(0, i) = y_hat.real();
          feats(1, i) = y_hat.imag();
          feats(2, i) = h_hat.real();
          feats(3, i) = h_hat.imag();
          feats(4, i) = snr_db / 20.0;
        }
        const Eigen::MatrixXd llrs = nn_demap_llrs(feats, *demapper);
        for (int i = 0; i < q; ++i)
          llr_sym.segment(static_cast<Eigen::Index>(i) * m, m) =
              llrs.col(i).array();
      }

      const ArrayXd llr_cw = llr_reorder(llr_sym, m, k, q);
      const fec::DecodeResult dec = fec::decode(llr_cw, code, 100);
      for (int b = 0; b < q * k; ++b)
        bp.errors += dec.bits[b] != info[b];
      bp.bits += q * k;
      bp.codewords += 1;
    }
    bp.ber = bp.bits > 0 ? static_cast<double>(bp.errors) / bp.bits : 0.0;
    out[p] = bp;
  });
  return out;
}

std::vector<PointEstimate> capacity_curve(const std::vector<double>& grid_db) {
  std::vector<PointEstimate> out;
  for (double snr_db : grid_db)
    out.push_back({snr_db, std::log2(1.0 + 1.0 / snr_to_n0(snr_db)), 0.0});
  return out;
}

void write_points_csv(const std::string& path,
                      const std::vector<PointEstimate>& pts) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("csv: cannot write " + path);
  f << "es_n0_db,value,stderr\n";
  char buf[120];
  for (const PointEstimate& p : pts) {
    std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g\n", p.snr_db, p.value,
                  p.std_error);
    f << buf;
  }
}

void write_ber_csv(const std::string& path, const std::vector<BerPoint>& pts) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("csv: cannot write " + path);
  f << "es_n0_db,value,stderr\n";
  char buf[120];
  for (const BerPoint& p : pts) {
    const double se =
        p.bits > 0 ? std::sqrt(p.ber * (1.0 - p.ber) /
                               static_cast<double>(p.bits))
                   : 0.0;
    std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g\n", p.snr_db, p.ber,
                  se);
    f << buf;
  }
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace shapecm
