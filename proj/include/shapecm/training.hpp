#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "shapecm/autodiff/grad_check.hpp"
#include "shapecm/autodiff/param_vector.hpp"
#include "shapecm/channels.hpp"
#include "shapecm/demappers.hpp"
#include "shapecm/models.hpp"

namespace shapecm {

enum class DemapperKind { Exact, Nn };

struct TrainConfig {
  TxKind model_kind = TxKind::PsGs;
  ChannelRealization::Kind channel = ChannelRealization::Kind::Awgn;
  int m = 6;
  int k = 4;
  int tx_hidden = 64;
  int batch_size = 1000;
  double learning_rate = 1e-3;
  double snr_lo_db = 0.0;  // AWGN range; RBF uses [5, 25]
  double snr_hi_db = 20.0;
  int iterations = 10000;
  int patience = 1000;  // early stop when validation stalls this long
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  DemapperKind demapper = DemapperKind::Exact;
  int demapper_hidden = 128;
  // Validation: fixed SNR grid, shared realizations across seeds.
  int val_points = 21;
  int val_realizations = 10000;          // final best-of-seeds selection
  int val_period = 500;                  // iterations between validations
  int val_realizations_periodic = 200;   // cheap in-training validation
  int threads = 0;  // 0: min(hardware, 4); >0: fixed (affects fp reduction order)
  std::uint64_t master_seed = 0;

  void validate() const;
};

struct TrainHistory {
  std::uint64_t seed = 0;
  std::vector<double> loss;                       // one entry per iteration
  std::vector<std::pair<int, double>> val;        // (iteration, mean val loss)
  ad::ParamVector final_tx;
  ad::ParamVector final_demapper;                 // empty for exact demapper
  double final_val_loss = 0.0;
  bool failed = false;                            // diverged (non-finite loss)
};

struct TrainResult {
  std::vector<TrainHistory> per_seed;
  int best_index = -1;
  TxModel best_tx;
  std::optional<DemapperModel> best_demapper;
};

/// One batch example: an SNR draw and the channel state all constellation
/// points are transmitted through.
struct LossExample {
  double snr_db = 10.0;
  ChannelRealization ch;
};

/// Loss of one example in bits on the tape:
/// -(H(X) + sum_i sum_t w(t) log2 p~(b_i = label_i(t) | y(x_t, h))).
ad::Var example_loss_bits_on_tape(ad::Tape& tape, const TxModel& model,
                                  const TxForwardVars& tx,
                                  const DemapperModel* demap_meta,
                                  const ad::BoundParams* demap_params,
                                  const LossExample& example);

/// Whole-batch loss graph on a single tape (average over examples). Intended
/// for gradient checks on tiny instances; training evaluates examples on
/// per-example tapes instead.
ad::Var build_loss_graph(ad::Tape& tape, const TxModel& model,
                         const ad::BoundParams& tx_params,
                         const DemapperModel* demap_meta,
                         const ad::BoundParams* demap_params,
                         const std::vector<LossExample>& batch);

struct LossStats {
  double mean = 0.0;
  double std_error = 0.0;
  long samples = 0;
};

/// Tape-free loss estimate at a fixed SNR over `batch` fresh realizations
/// (same math as the tape builder; used for validation and reporting).
LossStats loss_estimate(const TxModel& model,
                        const std::optional<DemapperModel>& demapper,
                        ChannelRealization::Kind channel, double snr_db,
                        int batch, std::uint64_t stream_seed);

struct AdamState {
  ad::ParamVector m1, m2;
  long t = 0;
  explicit AdamState(const ad::ParamVector& like)
      : m1(like.zeros_like()), m2(like.zeros_like()) {}
};

/// Standard Adam update with bias correction.
void adam_step(ad::ParamVector& params, const ad::ParamVector& grads,
               AdamState& state, double lr, double beta1, double beta2,
               double eps);

TrainResult train(const TrainConfig& config);

void save_history_csv(const std::string& path, const TrainHistory& h);

}  // namespace shapecm
