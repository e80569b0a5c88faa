#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <random>
#include <utility>

namespace shapecm {

using Eigen::ArrayXcd;

/// SNR defined as 1/N0: n0 = 10^(-snr_db/10).
inline double snr_to_n0(double snr_db) { return std::pow(10.0, -snr_db / 10.0); }

/// Mixes (master, a, b, c) into an independent substream seed.
std::uint64_t substream_seed(std::uint64_t master, std::uint64_t a,
                             std::uint64_t b = 0, std::uint64_t c = 0);

/// Seeded random stream with a portable Box-Muller Gaussian (the standard
/// library's normal_distribution is implementation-defined, which would break
/// bit-exact reproducibility across toolchains).
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : eng_(seed) {}

  /// Uniform on [0, 1).
  double uniform();
  /// Standard normal.
  double gaussian();
  /// CN(0, var): independent N(0, var/2) per component.
  std::complex<double> cgaussian(double var);
  std::uint64_t raw() { return eng_(); }

 private:
  std::mt19937_64 eng_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

/// All random channel state for one use: per-symbol noise draws, plus the
/// fading coefficient and pilot noise for Rayleigh block fading. One h per
/// realization (block property).
struct ChannelRealization {
  enum class Kind { Awgn, Rbf };
  Kind kind = Kind::Awgn;
  double n0 = 1.0;
  ArrayXcd noise;  // one draw per transmitted symbol
  std::complex<double> h{1.0, 0.0};
  std::complex<double> pilot_noise{0.0, 0.0};
};

ChannelRealization make_awgn_realization(double n0, Eigen::Index symbols,
                                         RngStream& rng);
ChannelRealization make_rbf_realization(double n0, Eigen::Index symbols,
                                        RngStream& rng);

/// y_i = x_i + n_i.
ArrayXcd awgn_apply(const ArrayXcd& x, const ChannelRealization& r);

/// y_i = h x_i + n_i, pilot observation y_p = h + n_p (unit-energy pilot).
std::pair<ArrayXcd, std::complex<double>> rbf_apply(
    const ArrayXcd& x, const ChannelRealization& r);

/// Scalar LMMSE estimate for an h ~ CN(0,1) prior and a unit pilot.
inline std::complex<double> lmmse_estimate(std::complex<double> y_pilot,
                                           double n0) {
  return y_pilot / (1.0 + n0);
}

struct EqualizeDiag {
  long regularized = 0;  // times the |h_hat|^2 floor kicked in
};

/// Estimate-matched filtering: y * conj(h_hat) / |h_hat|^2, with the
/// denominator floored at 1e-12 when the estimate is that small.
std::complex<double> equalize(std::complex<double> y,
                              std::complex<double> h_hat,
                              EqualizeDiag* diag = nullptr);

}  // namespace shapecm
