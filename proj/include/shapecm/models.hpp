#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "shapecm/autodiff/grad_check.hpp"
#include "shapecm/autodiff/param_vector.hpp"
#include "shapecm/constellation.hpp"
#include "shapecm/demappers.hpp"

namespace shapecm {

enum class TxKind { PsGs, MbQam, Gs, UniformQam };

std::string tx_kind_name(TxKind k);
TxKind tx_kind_from_name(const std::string& name);

/// A trainable transmitter: SNR-conditioned network emitting the shaping
/// distribution and/or constellation geometry. UniformQam carries no
/// parameters. Rate r = k/m is implied; MbQam requires k = m-2 (even m).
struct TxModel {
  TxKind kind = TxKind::UniformQam;
  int m = 6;
  int k = 4;
  int hidden = 64;
  ad::ParamVector params;
};

/// Trunk weights are symmetric-uniform scaled by 1/sqrt(fan-in) with zero
/// biases; the geometry head starts at the matching QAM layout plus a small
/// random perturbation so the initial constellation is non-degenerate.
TxModel init_tx_model(TxKind kind, int m, int k, int hidden,
                      std::uint64_t seed);

struct TxForward {
  ShapedConstellation constellation;
  double mu = 0.0;  // MbQam only
};

/// Deterministic forward pass at one SNR (any kind).
TxForward tx_forward(const TxModel& model, double snr_db);

std::pair<ShapingDistribution, ShapedConstellation> psgs_forward(
    const TxModel& model, double snr_db);

/// p(x) proportional to exp(-mu |x|^2) over one quadrant's points,
/// max-subtracted for large mu. Rejects mu < 0.
ShapingDistribution mb_distribution(double mu, const ArrayXcd& quadrant_points);

std::pair<ShapingDistribution, ShapedConstellation> mbqam_forward(
    const TxModel& model, double snr_db, double* mu_out = nullptr);

ShapedConstellation gs_forward(const TxModel& model, double snr_db);

/// Transmitter forward pass as tape nodes (shaping sized 2^k; for Gs and
/// UniformQam the shaping is a constant leaf).
struct TxForwardVars {
  ad::Var shaping;
  ad::Var x_re, x_im;
};

TxForwardVars tx_forward_on_tape(ad::Tape& tape, const ad::BoundParams& params,
                                 const TxModel& model, double snr_db);

/// Joint point prior on tape: tile(p, 2^(m-k)) * 2^-(m-k).
ad::Var point_prior_on_tape(ad::Var shaping, int m, int k);

/// Trained-model container: transmitter plus (when jointly trained) the NN
/// demapper, with the training channel recorded for provenance.
struct Checkpoint {
  TxModel tx;
  std::optional<DemapperModel> demapper;
  std::string channel = "awgn";
  double snr_lo = 0.0;
  double snr_hi = 20.0;
};

/// Single-line JSON metadata header followed by "paramvec v1" blocks
/// (transmitter first, then the demapper when present).
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace shapecm
