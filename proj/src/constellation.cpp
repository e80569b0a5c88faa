#include "shapecm/constellation.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>

namespace shapecm {

namespace {

void check_mk(int m, int k) {
  if (m < 1 || m > 20)
    throw std::invalid_argument("constellation: bad m=" + std::to_string(m));
  if (k < 1 || k > m)
    throw std::invalid_argument("constellation: k=" + std::to_string(k) +
                                " out of range for m=" + std::to_string(m));
}

// Gray code g -> binary index.
std::uint32_t gray_decode(std::uint32_t g) {
  std::uint32_t v = 0;
  for (; g; g >>= 1) v ^= g;
  return v;
}

}  // namespace

void validate_shaping(const ShapingDistribution& p) {
  if (p.size() < 1) throw std::invalid_argument("shaping: empty");
  if ((p < 0.0).any())
    throw std::invalid_argument("shaping: negative probability");
  if (std::abs(p.sum() - 1.0) > 1e-12)
    throw std::invalid_argument("shaping: probabilities sum to " +
                                std::to_string(p.sum()));
}

ShapedConstellation make_shaped(int m, int k, ArrayXcd points,
                                ShapingDistribution shaping) {
  check_mk(m, k);
  if (points.size() != (Eigen::Index{1} << m))
    throw std::invalid_argument("constellation: expected " +
                                std::to_string(1 << m) + " points, got " +
                                std::to_string(points.size()));
  if (shaping.size() != (Eigen::Index{1} << k))
    throw std::invalid_argument("constellation: shaping size " +
                                std::to_string(shaping.size()) +
                                " does not match k=" + std::to_string(k));
  validate_shaping(shaping);
  return {m, k, std::move(points), std::move(shaping)};
}

ArrayXd point_probabilities(const ShapingDistribution& p, int m, int k) {
  check_mk(m, k);
  validate_shaping(p);
  if (p.size() != (Eigen::Index{1} << k))
    throw std::invalid_argument("point_probabilities: shaping size mismatch");
  const int subs = 1 << (m - k);
  const double parity_weight = 1.0 / subs;
  ArrayXd out(Eigen::Index{1} << m);
  for (int j = 0; j < subs; ++j)
    out.segment(Eigen::Index{j} << k, p.size()) = p * parity_weight;
  return out;
}

ShapedConstellation normalize(const ArrayXcd& raw,
                              const ShapingDistribution& p, int m, int k) {
  check_mk(m, k);
  if (raw.size() != (Eigen::Index{1} << m))
    throw std::invalid_argument("normalize: expected " +
                                std::to_string(1 << m) + " points, got " +
                                std::to_string(raw.size()));
  validate_shaping(p);
  const int sub_size = 1 << k;
  const int subs = 1 << (m - k);
  ArrayXcd out(raw.size());
  for (int j = 0; j < subs; ++j) {
    auto seg = raw.segment(Eigen::Index{j} * sub_size, sub_size);
    const double power = (p * seg.abs2()).sum();
    if (!(power > 0.0))
      throw std::invalid_argument(
          "normalize: sub-constellation " + std::to_string(j) +
          " has zero shaping-weighted power (degenerate)");
    out.segment(Eigen::Index{j} * sub_size, sub_size) =
        seg / std::sqrt(power);
  }
  return {m, k, std::move(out), p};
}

std::pair<ad::Var, ad::Var> normalize_on_tape(ad::Var x_re, ad::Var x_im,
                                              ad::Var p, int m, int k) {
  check_mk(m, k);
  using namespace ad;
  const int sub_size = 1 << k;
  const int subs = 1 << (m - k);
  Var mag = square(x_re) + square(x_im);
  Var w = subs > 1 ? tile(p, subs) : p;
  Var sub_power = segment_sum(mag * w, sub_size);
  Var scale_per_point = repeat_interleave(sqrt(sub_power), sub_size);
  return {x_re / scale_per_point, x_im / scale_per_point};
}

std::uint32_t bits_to_index(const std::vector<std::uint8_t>& bits) {
  std::uint32_t v = 0;
  for (std::uint8_t b : bits) v = (v << 1) | (b & 1u);
  return v;
}

std::complex<double> map_bits(const std::vector<std::uint8_t>& b_info,
                              const std::vector<std::uint8_t>& b_parity,
                              const ShapedConstellation& c) {
  const int k = static_cast<int>(b_info.size());
  if (k + static_cast<int>(b_parity.size()) != c.m)
    throw std::invalid_argument(
        "map_bits: |b_I|+|b_P| = " +
        std::to_string(b_info.size() + b_parity.size()) +
        " does not match m=" + std::to_string(c.m));
  const std::uint32_t t = (bits_to_index(b_parity) << k) | bits_to_index(b_info);
  return c.points[t];
}

double source_entropy_bits(const ShapingDistribution& p, int m, int k) {
  check_mk(m, k);
  validate_shaping(p);
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) h -= p[i] * std::log2(p[i]);
  return h + (m - k);
}

ad::Var source_entropy_bits_on_tape(ad::Var p, int m, int k) {
  check_mk(m, k);
  using namespace ad;
  constexpr double kLogFloor = -69.0775527898213705;  // ln(1e-30)
  constexpr double kInvLn2 = 1.4426950408889634;
  Var h = scale(dot(p, clamp_min(log(p), kLogFloor)), -kInvLn2);
  return shift(h, static_cast<double>(m - k));
}

ArrayXcd qam_constellation(int m) {
  if (m < 2 || m % 2 != 0)
    throw std::invalid_argument("qam: m must be even and >= 2, got " +
                                std::to_string(m));
  const int mh = m / 2;
  const int levels = 1 << mh;
  const double scale = 1.0 / std::sqrt(2.0 * (levels * levels - 1) / 3.0);
  ArrayXcd pts(Eigen::Index{1} << m);
  for (int t = 0; t < (1 << m); ++t) {
    const std::uint32_t gi = static_cast<std::uint32_t>(t) >> mh;
    const std::uint32_t gq = static_cast<std::uint32_t>(t) & (levels - 1);
    const double re = 2.0 * gray_decode(gi) - (levels - 1);
    const double im = 2.0 * gray_decode(gq) - (levels - 1);
    pts[t] = std::complex<double>(re * scale, im * scale);
  }
  return pts;
}

ArrayXcd pas_qam_constellation(int m) {
  if (m < 4 || m % 2 != 0)
    throw std::invalid_argument("pas qam: m must be even and >= 4, got " +
                                std::to_string(m));
  const int mh = m / 2;
  const int levels = 1 << mh;
  const int amp_bits = mh - 1;
  const double scale = 1.0 / std::sqrt(2.0 * (levels * levels - 1) / 3.0);
  ArrayXcd pts(Eigen::Index{1} << m);
  for (int t = 0; t < (1 << m); ++t) {
    const int j = t >> (m - 2);
    const int l = t & ((1 << (m - 2)) - 1);
    const std::uint32_t ai = static_cast<std::uint32_t>(l) >> amp_bits;
    const std::uint32_t aq = static_cast<std::uint32_t>(l) & ((1 << amp_bits) - 1);
    const double mag_i = 2.0 * gray_decode(ai) + 1.0;
    const double mag_q = 2.0 * gray_decode(aq) + 1.0;
    const double sign_i = (j & 2) ? -1.0 : 1.0;
    const double sign_q = (j & 1) ? -1.0 : 1.0;
    pts[t] = std::complex<double>(sign_i * mag_i * scale,
                                  sign_q * mag_q * scale);
  }
  return pts;
}

void export_constellation_csv(std::ostream& os, const ShapedConstellation& c) {
  const ArrayXd pd = point_probabilities(c.shaping, c.m, c.k);
  os << "index,label,re,im,probability\n";
  char buf[160];
  for (Eigen::Index t = 0; t < c.points.size(); ++t) {
    std::string label(c.m, '0');
    for (int i = 0; i < c.m; ++i)
      label[i] = static_cast<char>('0' + label_bit(static_cast<int>(t), i, c.m));
    std::snprintf(buf, sizeof(buf), "%lld,%s,%.17g,%.17g,%.17g\n",
                  static_cast<long long>(t), label.c_str(),
                  c.points[t].real(), c.points[t].imag(), pd[t]);
    os << buf;
  }
}

}  // namespace shapecm
