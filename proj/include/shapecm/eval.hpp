#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "shapecm/fec/ldpc.hpp"
#include "shapecm/models.hpp"
#include "shapecm/training.hpp"

namespace shapecm {

/// Experiment schemes as they appear in result legends.
enum class Scheme { Psgs23, Psgs12, Mbqam23, Gs, UniformQam };

std::string scheme_name(Scheme s);
Scheme scheme_from_name(const std::string& name);

struct ResolvedScheme {
  TxKind kind;
  int m = 6;
  int k_shape = 4;  // shaping distribution size 2^k_shape
  int k_code = 4;   // info bits per symbol in the coded chain
  double rate = 2.0 / 3.0;
};

ResolvedScheme resolve_scheme(Scheme s);

struct ExperimentConfig {
  Scheme scheme = Scheme::UniformQam;
  ChannelRealization::Kind channel = ChannelRealization::Kind::Awgn;
  std::vector<double> snr_grid_db;
  long samples = 100000;  // symbols per SNR point for the BMI estimate
  std::uint64_t seed = 1;
  // BER chain
  int ber_min_errors = 100;
  long ber_min_codewords = 10;
  long ber_max_codewords = 1000;
  std::string ldpc_file;  // base-matrix path (rate implied by the scheme)
  int fade_block = 1;     // symbols per fading block in RBF evaluation
  int threads = 0;

  void validate() const;
};

struct PointEstimate {
  double snr_db = 0.0;
  double value = 0.0;
  double std_error = 0.0;
};

/// Monte Carlo BMI in bits per channel use with "perfect DM" sampling:
/// information bit vectors drawn from the shaping distribution, parity bits
/// uniform. BMI = [H(X) - sum_i H(B_i|Y)]^+ from sampled log posteriors;
/// with an NN demapper the value is a lower bound.
std::vector<PointEstimate> estimate_bmi(
    const ExperimentConfig& cfg, const TxModel& model,
    const std::optional<DemapperModel>& demapper);

/// SE = H(X) - m(1-r) with r = k/m (exact, no sampling).
double compute_se(const ShapingDistribution& shaping, int m, int k, double r);

std::vector<PointEstimate> spectral_efficiency_curve(
    const ExperimentConfig& cfg, const TxModel& model);

struct BerPoint {
  double snr_db = 0.0;
  double ber = 0.0;
  long bits = 0;
  long errors = 0;
  long codewords = 0;
};

/// Coded chain per codeword: sample shaped info bits, encode, place bits on
/// symbols, transmit, demap, reorder LLRs, decode (100 iterations), count
/// info-bit errors. Runs until ber_min_codewords and ber_min_errors are both
/// met or ber_max_codewords is hit.
std::vector<BerPoint> run_ber(const ExperimentConfig& cfg,
                              const TxModel& model,
                              const std::optional<DemapperModel>& demapper,
                              const fec::LdpcCode& code);

/// AWGN capacity reference log2(1 + 1/n0).
std::vector<PointEstimate> capacity_curve(const std::vector<double>& grid_db);

void write_points_csv(const std::string& path,
                      const std::vector<PointEstimate>& pts);
void write_ber_csv(const std::string& path, const std::vector<BerPoint>& pts);

/// FNV-1a hash of a byte string (config/checkpoint fingerprints in manifests).
std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace shapecm
