#include "shapecm/channels.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace shapecm {

namespace {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace

std::uint64_t substream_seed(std::uint64_t master, std::uint64_t a,
                             std::uint64_t b, std::uint64_t c) {
  std::uint64_t s = splitmix64(master ^ 0x7368617065636d31ULL);
  s = splitmix64(s ^ a);
  s = splitmix64(s ^ b);
  s = splitmix64(s ^ c);
  return s;
}

double RngStream::uniform() {
  return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
}

double RngStream::gaussian() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  // Box-Muller; u1 in (0,1] so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  cached_ = r * std::sin(a);
  has_cached_ = true;
  return r * std::cos(a);
}

std::complex<double> RngStream::cgaussian(double var) {
  const double s = std::sqrt(var / 2.0);
  return {s * gaussian(), s * gaussian()};
}

ChannelRealization make_awgn_realization(double n0, Eigen::Index symbols,
                                         RngStream& rng) {
  ChannelRealization r;
  r.kind = ChannelRealization::Kind::Awgn;
  r.n0 = n0;
  r.noise.resize(symbols);
  for (Eigen::Index i = 0; i < symbols; ++i) r.noise[i] = rng.cgaussian(n0);
  return r;
}

ChannelRealization make_rbf_realization(double n0, Eigen::Index symbols,
                                        RngStream& rng) {
  ChannelRealization r;
  r.kind = ChannelRealization::Kind::Rbf;
  r.n0 = n0;
  r.h = rng.cgaussian(1.0);
  r.pilot_noise = rng.cgaussian(n0);
  r.noise.resize(symbols);
  for (Eigen::Index i = 0; i < symbols; ++i) r.noise[i] = rng.cgaussian(n0);
  return r;
}

ArrayXcd awgn_apply(const ArrayXcd& x, const ChannelRealization& r) {
  if (r.kind != ChannelRealization::Kind::Awgn)
    throw std::invalid_argument("awgn_apply: realization is not AWGN");
  if (x.size() != r.noise.size())
    throw std::invalid_argument(
        "awgn_apply: " + std::to_string(x.size()) + " symbols vs " +
        std::to_string(r.noise.size()) + " noise draws");
  return x + r.noise;
}

std::pair<ArrayXcd, std::complex<double>> rbf_apply(
    const ArrayXcd& x, const ChannelRealization& r) {
  if (r.kind != ChannelRealization::Kind::Rbf)
    throw std::invalid_argument("rbf_apply: realization is not RBF");
  if (x.size() != r.noise.size())
    throw std::invalid_argument(
        "rbf_apply: " + std::to_string(x.size()) + " symbols vs " +
        std::to_string(r.noise.size()) + " noise draws");
  return {r.h * x + r.noise, r.h + r.pilot_noise};
}

std::complex<double> equalize(std::complex<double> y,
                              std::complex<double> h_hat,
                              EqualizeDiag* diag) {
  double denom = std::norm(h_hat);
  if (denom < 1e-12) {
    denom += 1e-12;
    if (diag) ++diag->regularized;
  }
  return y * std::conj(h_hat) / denom;
}

}  // namespace shapecm
