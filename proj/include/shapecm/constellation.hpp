#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include "shapecm/autodiff/tape.hpp"

namespace shapecm {

using Eigen::ArrayXcd;
using Eigen::ArrayXd;

/// Probabilities of the 2^k information bit vectors, indexed by the integer
/// whose MSB-first binary representation is the bit vector.
using ShapingDistribution = ArrayXd;

/// Throws unless probs are non-negative and sum to 1 within 1e-12.
void validate_shaping(const ShapingDistribution& p);

/// 2^m labeled complex points. Point t carries the m-bit natural label
/// [b_P | b_I] (MSB-first): the top m-k bits select sub-constellation
/// j = t / 2^k, the low k bits index within it. k == m means a single
/// sub-constellation (geometry-only shaping).
struct ShapedConstellation {
  int m = 0;
  int k = 0;
  ArrayXcd points;
  ShapingDistribution shaping;
};

ShapedConstellation make_shaped(int m, int k, ArrayXcd points,
                                ShapingDistribution shaping);

/// Bit i (MSB-first) of point t's label.
inline int label_bit(int t, int i, int m) { return (t >> (m - 1 - i)) & 1; }

/// Joint law over points: probs(t) = p(t mod 2^k) * 2^-(m-k)
/// (uniform iid parity bits).
ArrayXd point_probabilities(const ShapingDistribution& p, int m, int k);

/// Divides every sub-constellation by the square root of its own
/// shaping-weighted power so each has unit average power. Rejects
/// zero-power sub-constellations as degenerate.
ShapedConstellation normalize(const ArrayXcd& raw,
                              const ShapingDistribution& p, int m, int k);

/// Differentiable form of normalize() on tape nodes (points as re/im pairs).
std::pair<ad::Var, ad::Var> normalize_on_tape(ad::Var x_re, ad::Var x_im,
                                              ad::Var p, int m, int k);

/// MSB-first integer value of a bit vector.
std::uint32_t bits_to_index(const std::vector<std::uint8_t>& bits);

/// points(int(b_P) * 2^|b_I| + int(b_I)); lengths must add up to c.m.
std::complex<double> map_bits(const std::vector<std::uint8_t>& b_info,
                              const std::vector<std::uint8_t>& b_parity,
                              const ShapedConstellation& c);

/// H = -sum p log2 p + (m - k) bits; zero-probability terms contribute 0.
double source_entropy_bits(const ShapingDistribution& p, int m, int k);

/// Differentiable entropy in bits (natural-log tape op rescaled).
ad::Var source_entropy_bits_on_tape(ad::Var p, int m, int k);

/// Square 2^(m/2) x 2^(m/2) QAM, Gray-labeled per axis (first m/2 label bits
/// Gray-code the real coordinate, the rest the imaginary one), unit average
/// power under uniform probabilities. m must be even.
ArrayXcd qam_constellation(int m);

/// Same QAM geometry reordered for the amplitude-shaping partition: the two
/// leading label bits are the quadrant sign bits (0 -> +, 1 -> -), the
/// remaining m-2 bits Gray-code the per-axis magnitudes, so the four
/// quadrant sub-constellations are mirror images sharing one shaping
/// distribution.
ArrayXcd pas_qam_constellation(int m);

/// CSV with columns (index, label-bits, re, im, probability).
void export_constellation_csv(std::ostream& os, const ShapedConstellation& c);

}  // namespace shapecm
