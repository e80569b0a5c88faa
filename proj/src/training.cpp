#include "shapecm/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <thread>

namespace shapecm {

namespace {

constexpr double kLog2Floor = -99.657842846620870436;  // log2(1e-30)
constexpr double kLnFloor = -69.0775527898213705;      // ln(1e-30)
constexpr double kInvLn2 = 1.4426950408889634;

// Stream purposes, mixed into substream seeds.
constexpr std::uint64_t kStreamTxInit = 0xA1;
constexpr std::uint64_t kStreamDemapInit = 0xA2;
constexpr std::uint64_t kStreamBatch = 0xB0;
constexpr std::uint64_t kStreamVal = 0xC0;

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::min(hw == 0 ? 1u : hw, 4u));
}

void run_blocks(long total, int threads, const std::function<void(int, long, long)>& fn) {
  if (threads <= 1 || total <= 1) {
    fn(0, 0, total);
    return;
  }
  std::vector<std::thread> pool;
  const long per = (total + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const long begin = t * per;
    const long end = std::min(total, begin + per);
    if (begin >= end) break;
    pool.emplace_back([&fn, t, begin, end] { fn(t, begin, end); });
  }
  for (auto& th : pool) th.join();
}

double stable_softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

}  // namespace

void TrainConfig::validate() const {
  if (!(snr_lo_db < snr_hi_db))
    throw std::invalid_argument("train config: snr_lo must be < snr_hi");
  if (batch_size < 1) throw std::invalid_argument("train config: batch >= 1");
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("train config: learning rate > 0");
  if (iterations < 0) throw std::invalid_argument("train config: iterations");
  if (seeds.empty()) throw std::invalid_argument("train config: no seeds");
  if (channel == ChannelRealization::Kind::Rbf &&
      demapper == DemapperKind::Exact)
    throw std::invalid_argument(
        "train config: the exact demapper is AWGN-only; RBF needs the NN "
        "demapper");
}

ad::Var example_loss_bits_on_tape(ad::Tape& tape, const TxModel& model,
                                  const TxForwardVars& tx,
                                  const DemapperModel* demap_meta,
                                  const ad::BoundParams* demap_params,
                                  const LossExample& example) {
  using namespace ad;
  const int m = model.m;
  const int k_shape = model.kind == TxKind::Gs ? m : model.k;
  const int t_count = 1 << m;
  const ChannelRealization& ch = example.ch;
  if (ch.noise.size() != t_count)
    throw std::invalid_argument("loss: expected one noise draw per point (" +
                                std::to_string(t_count) + "), got " +
                                std::to_string(ch.noise.size()));

  Var w = point_prior_on_tape(tx.shaping, m, k_shape);
  Var entropy = source_entropy_bits_on_tape(tx.shaping, m, k_shape);

  const ArrayXd noise_re = ch.noise.real();
  const ArrayXd noise_im = ch.noise.imag();

  Var inner;  // natural-log weighted sum over bits and points
  if (ch.kind == ChannelRealization::Kind::Awgn) {
    Var y_re = tx.x_re + tape.leaf(noise_re);
    Var y_im = tx.x_im + tape.leaf(noise_im);
    if (demap_meta == nullptr) {
      Var log_prior = clamp_min(log(w), kLnFloor);
      Var logpost = exact_demap_true_bit_logpost_on_tape(
          y_re, y_im, tx.x_re, tx.x_im, log_prior, m, ch.n0);
      inner = dot(repeat_interleave(w, m), logpost);
    } else {
      // AWGN-reduced NN demapper: perfect channel knowledge, h_hat = 1.
      Var feats = concat(
          {y_re, y_im, tape.leaf(ArrayXd::Ones(t_count)),
           tape.leaf(ArrayXd::Zero(t_count)),
           tape.leaf(ArrayXd::Constant(t_count, example.snr_db / 20.0))});
      Var llrs = nn_demap_llrs_on_tape(feats, t_count, *demap_params, m,
                                       demap_meta->hidden);
      inner = dot(tile(w, m), nn_true_bit_logpost_on_tape(llrs, m));
    }
  } else {
    if (demap_meta == nullptr)
      throw std::invalid_argument("loss: exact demapper is AWGN-only");
    const std::complex<double> h = ch.h;
    Var y_re = scale(tx.x_re, h.real()) - scale(tx.x_im, h.imag()) +
               tape.leaf(noise_re);
    Var y_im = scale(tx.x_re, h.imag()) + scale(tx.x_im, h.real()) +
               tape.leaf(noise_im);
    const std::complex<double> h_hat = lmmse_estimate(h + ch.pilot_noise, ch.n0);
    const std::complex<double> eq = equalize({1.0, 0.0}, h_hat);
    Var yh_re = scale(y_re, eq.real()) - scale(y_im, eq.imag());
    Var yh_im = scale(y_re, eq.imag()) + scale(y_im, eq.real());
    Var feats = concat(
        {yh_re, yh_im, tape.leaf(ArrayXd::Constant(t_count, h_hat.real())),
         tape.leaf(ArrayXd::Constant(t_count, h_hat.imag())),
         tape.leaf(ArrayXd::Constant(t_count, example.snr_db / 20.0))});
    Var llrs = nn_demap_llrs_on_tape(feats, t_count, *demap_params, m,
                                     demap_meta->hidden);
    inner = dot(tile(w, m), nn_true_bit_logpost_on_tape(llrs, m));
  }
  return -(entropy + scale(inner, kInvLn2));
}

ad::Var build_loss_graph(ad::Tape& tape, const TxModel& model,
                         const ad::BoundParams& tx_params,
                         const DemapperModel* demap_meta,
                         const ad::BoundParams* demap_params,
                         const std::vector<LossExample>& batch) {
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  ad::Var acc;
  for (const LossExample& ex : batch) {
    const TxForwardVars tx =
        tx_forward_on_tape(tape, tx_params, model, ex.snr_db);
    ad::Var l = example_loss_bits_on_tape(tape, model, tx, demap_meta,
                                          demap_params, ex);
    acc = acc.valid() ? acc + l : l;
  }
  return ad::scale(acc, 1.0 / static_cast<double>(batch.size()));
}

namespace {

// Tape-free single-example loss, shared by validation and loss_estimate().
double example_loss_bits_plain(const TxModel& model,
                               const std::optional<DemapperModel>& demapper,
                               double snr_db, const ChannelRealization& ch) {
  const TxForward fwd = tx_forward(model, snr_db);
  const ShapedConstellation& c = fwd.constellation;
  const ArrayXd w = point_probabilities(c.shaping, c.m, c.k);
  const double entropy = source_entropy_bits(c.shaping, c.m, c.k);
  const int t_count = 1 << c.m;
  double inner = 0.0;  // bits

  if (ch.kind == ChannelRealization::Kind::Awgn && !demapper.has_value()) {
    const ArrayXcd y = awgn_apply(c.points, ch);
    const ExactDemapper dm(c.points, w);
    for (int t = 0; t < t_count; ++t)
      inner += w[t] * dm.true_bit_log2post_sum(y[t], t, ch.n0);
  } else {
    if (!demapper.has_value())
      throw std::invalid_argument("loss: exact demapper is AWGN-only");
    MatrixXd feats(5, t_count);
    if (ch.kind == ChannelRealization::Kind::Awgn) {
      const ArrayXcd y = awgn_apply(c.points, ch);
      for (int t = 0; t < t_count; ++t) {
        feats(0, t) = y[t].real();
        feats(1, t) = y[t].imag();
        feats(2, t) = 1.0;
        feats(3, t) = 0.0;
        feats(4, t) = snr_db / 20.0;
      }
    } else {
      const auto [y, y_pilot] = rbf_apply(c.points, ch);
      const std::complex<double> h_hat = lmmse_estimate(y_pilot, ch.n0);
      for (int t = 0; t < t_count; ++t) {
        const std::complex<double> yh = equalize(y[t], h_hat);
        feats(0, t) = yh.real();
        feats(1, t) = yh.imag();
        feats(2, t) = h_hat.real();
        feats(3, t) = h_hat.imag();
        feats(4, t) = snr_db / 20.0;
      }
    }
    const MatrixXd llrs = nn_demap_llrs(feats, *demapper);
    for (int t = 0; t < t_count; ++t) {
      double bits_sum = 0.0;
      for (int i = 0; i < c.m; ++i) {
        const double sgn = label_bit(t, i, c.m) ? -1.0 : 1.0;
        bits_sum += std::max(-stable_softplus(sgn * llrs(i, t)), kLnFloor);
      }
      inner += w[t] * bits_sum;
    }
    inner *= kInvLn2;
  }
  return -(entropy + inner);
}

ChannelRealization draw_realization(ChannelRealization::Kind kind, double n0,
                                    Eigen::Index symbols, RngStream& rng) {
  return kind == ChannelRealization::Kind::Awgn
             ? make_awgn_realization(n0, symbols, rng)
             : make_rbf_realization(n0, symbols, rng);
}

struct ValContext {
  std::vector<double> snrs;
};

ValContext make_val_grid(const TrainConfig& cfg) {
  ValContext v;
  const int n = std::max(cfg.val_points, 1);
  for (int i = 0; i < n; ++i) {
    const double frac = n == 1 ? 0.5 : static_cast<double>(i) / (n - 1);
    v.snrs.push_back(cfg.snr_lo_db + frac * (cfg.snr_hi_db - cfg.snr_lo_db));
  }
  return v;
}

double validation_mean_loss(const TxModel& tx,
                            const std::optional<DemapperModel>& dm,
                            const TrainConfig& cfg, const ValContext& grid,
                            int realizations, int threads) {
  std::vector<double> per_point(grid.snrs.size(), 0.0);
  run_blocks(static_cast<long>(grid.snrs.size()), threads,
             [&](int, long begin, long end) {
               for (long p = begin; p < end; ++p) {
                 const LossStats s = loss_estimate(
                     tx, dm, cfg.channel, grid.snrs[p], realizations,
                     substream_seed(cfg.master_seed, kStreamVal, p));
                 per_point[p] = s.mean;
               }
             });
  double acc = 0.0;
  for (double v : per_point) acc += v;
  return acc / static_cast<double>(per_point.size());
}

}  // namespace

LossStats loss_estimate(const TxModel& model,
                        const std::optional<DemapperModel>& demapper,
                        ChannelRealization::Kind channel, double snr_db,
                        int batch, std::uint64_t stream_seed) {
  if (batch < 1) throw std::invalid_argument("loss_estimate: batch >= 1");
  RngStream rng(stream_seed);
  const double n0 = snr_to_n0(snr_db);
  const Eigen::Index symbols = Eigen::Index{1} << model.m;
  double sum = 0.0, sum_sq = 0.0;
  for (int l = 0; l < batch; ++l) {
    const ChannelRealization ch = draw_realization(channel, n0, symbols, rng);
    const double v = example_loss_bits_plain(model, demapper, snr_db, ch);
    sum += v;
    sum_sq += v * v;
  }
  LossStats out;
  out.samples = batch;
  out.mean = sum / batch;
  const double var =
      batch > 1 ? std::max(0.0, (sum_sq - batch * out.mean * out.mean) /
                                    (batch - 1))
                : 0.0;
  out.std_error = std::sqrt(var / batch);
  return out;
}

void adam_step(ad::ParamVector& params, const ad::ParamVector& grads,
               AdamState& state, double lr, double beta1, double beta2,
               double eps) {
  if (!params.same_layout(grads))
    throw std::invalid_argument("adam: gradient layout mismatch");
  state.t += 1;
  auto& m1 = state.m1.values();
  auto& m2 = state.m2.values();
  m1 = beta1 * m1 + (1.0 - beta1) * grads.values();
  m2 = beta2 * m2 + (1.0 - beta2) * grads.values().square();
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  params.values() -= lr * (m1 / c1) / ((m2 / c2).sqrt() + eps);
}

TrainResult train(const TrainConfig& cfg) {
  cfg.validate();
  const int threads = resolve_threads(cfg.threads);
  const ValContext grid = make_val_grid(cfg);
  const Eigen::Index symbols = Eigen::Index{1} << cfg.m;

  TrainResult result;
  for (std::uint64_t seed : cfg.seeds) {
    TrainHistory hist;
    hist.seed = seed;
    TxModel tx = init_tx_model(cfg.model_kind, cfg.m, cfg.k, cfg.tx_hidden,
                               substream_seed(cfg.master_seed, kStreamTxInit,
                                              seed));
    std::optional<DemapperModel> dm;
    if (cfg.demapper == DemapperKind::Nn)
      dm = init_demapper(cfg.m, cfg.demapper_hidden,
                         substream_seed(cfg.master_seed, kStreamDemapInit,
                                        seed));

    AdamState adam_tx(tx.params);
    std::optional<AdamState> adam_dm;
    if (dm.has_value()) adam_dm.emplace(dm->params);

    const std::uint64_t batch_root =
        substream_seed(cfg.master_seed, kStreamBatch, seed);

    double best_val = std::numeric_limits<double>::infinity();
    int best_val_iter = 0;
    ad::ParamVector best_tx_params = tx.params;
    ad::ParamVector best_dm_params =
        dm.has_value() ? dm->params : ad::ParamVector{};
    bool have_snapshot = false;

    const int B = cfg.batch_size;
    std::vector<ad::ParamVector> gtx(threads, tx.params.zeros_like());
    std::vector<ad::ParamVector> gdm;
    if (dm.has_value())
      gdm.assign(threads, dm->params.zeros_like());
    std::vector<double> partial_loss(threads, 0.0);

    for (int iter = 0; iter < cfg.iterations && !hist.failed; ++iter) {
      for (int t = 0; t < threads; ++t) {
        gtx[t].set_zero();
        if (dm.has_value()) gdm[t].set_zero();
        partial_loss[t] = 0.0;
      }
      run_blocks(B, threads, [&](int tid, long begin, long end) {
        ad::Tape tape;
        for (long e = begin; e < end; ++e) {
          tape.clear();
          RngStream rng(substream_seed(batch_root, iter, e));
          LossExample ex;
          ex.snr_db =
              cfg.snr_lo_db + (cfg.snr_hi_db - cfg.snr_lo_db) * rng.uniform();
          ex.ch = draw_realization(cfg.channel, snr_to_n0(ex.snr_db), symbols,
                                   rng);
          const ad::BoundParams btx = ad::bind(tape, tx.params);
          ad::BoundParams bdm;
          if (dm.has_value()) bdm = ad::bind(tape, dm->params);
          const TxForwardVars fwd =
              tx_forward_on_tape(tape, btx, tx, ex.snr_db);
          const ad::Var loss = example_loss_bits_on_tape(
              tape, tx, fwd, dm.has_value() ? &*dm : nullptr,
              dm.has_value() ? &bdm : nullptr, ex);
          tape.backward(loss);
          partial_loss[tid] += tape.scalar(loss);
          if (!tx.params.empty()) btx.add_grad_to(gtx[tid], 1.0);
          if (dm.has_value()) bdm.add_grad_to(gdm[tid], 1.0);
        }
      });
      double loss_value = 0.0;
      for (int t = 0; t < threads; ++t) loss_value += partial_loss[t];
      loss_value /= B;
      for (int t = 1; t < threads; ++t) {
        gtx[0].values() += gtx[t].values();
        if (dm.has_value()) gdm[0].values() += gdm[t].values();
      }
      if (!std::isfinite(loss_value)) {
        hist.failed = true;
        hist.loss.push_back(loss_value);
        break;
      }
      if (!tx.params.empty()) {
        gtx[0].values() /= B;
        adam_step(tx.params, gtx[0], adam_tx, cfg.learning_rate,
                  cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
      }
      if (dm.has_value()) {
        gdm[0].values() /= B;
        adam_step(dm->params, gdm[0], *adam_dm, cfg.learning_rate,
                  cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
      }
      hist.loss.push_back(loss_value);

      const int done = iter + 1;
      if (cfg.val_period > 0 &&
          (done % cfg.val_period == 0 || done == cfg.iterations)) {
        const double vloss = validation_mean_loss(
            tx, dm, cfg, grid, cfg.val_realizations_periodic, threads);
        hist.val.emplace_back(done, vloss);
        if (vloss < best_val) {
          best_val = vloss;
          best_val_iter = done;
          best_tx_params = tx.params;
          if (dm.has_value()) best_dm_params = dm->params;
          have_snapshot = true;
        } else if (done - best_val_iter >= cfg.patience) {
          break;  // validation stalled
        }
      }
    }

    if (!hist.failed) {
      if (have_snapshot) {
        tx.params = best_tx_params;
        if (dm.has_value()) dm->params = best_dm_params;
      }
      hist.final_val_loss = validation_mean_loss(
          tx, dm, cfg, grid, cfg.val_realizations, threads);
    } else {
      hist.final_val_loss = std::numeric_limits<double>::infinity();
    }
    hist.final_tx = tx.params;
    if (dm.has_value()) hist.final_demapper = dm->params;
    result.per_seed.push_back(std::move(hist));
  }

  for (std::size_t i = 0; i < result.per_seed.size(); ++i) {
    const TrainHistory& h = result.per_seed[i];
    if (h.failed) continue;
    if (result.best_index < 0 ||
        h.final_val_loss <
            result.per_seed[result.best_index].final_val_loss)
      result.best_index = static_cast<int>(i);
  }
  if (result.best_index >= 0) {
    const TrainHistory& best = result.per_seed[result.best_index];
    result.best_tx = init_tx_model(cfg.model_kind, cfg.m, cfg.k, cfg.tx_hidden,
                                   0);
    result.best_tx.params = best.final_tx;
    if (cfg.demapper == DemapperKind::Nn) {
      DemapperModel d;
      d.m = cfg.m;
      d.hidden = cfg.demapper_hidden;
      d.params = best.final_demapper;
      result.best_demapper = std::move(d);
    }
  }
  return result;
}

void save_history_csv(const std::string& path, const TrainHistory& h) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("history: cannot write " + path);
  f << "iter,loss,val_loss\n";
  std::size_t vi = 0;
  char buf[96];
  for (std::size_t i = 0; i < h.loss.size(); ++i) {
    const int iter = static_cast<int>(i) + 1;
    if (vi < h.val.size() && h.val[vi].first == iter) {
      std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g\n", iter, h.loss[i],
                    h.val[vi].second);
      ++vi;
    } else {
      std::snprintf(buf, sizeof(buf), "%d,%.10g,\n", iter, h.loss[i]);
    }
    f << buf;
  }
}

}  // namespace shapecm
