#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace shapecm::fec {

using Eigen::ArrayXd;

/// Quasi-cyclic LDPC code expanded from a 24-column base matrix (802.11n
/// family: dual-diagonal parity part, systematic encoding by
/// back-substitution).
class LdpcCode {
 public:
  /// Parses the base-matrix text format: one line per base row, entries -1
  /// (zero block) or shifts 0..z-1, '#' comments ignored.
  static LdpcCode from_stream(std::istream& is, int z);
  static LdpcCode from_file(const std::string& path, int z);

  int z() const { return z_; }
  int n() const { return n_; }
  int info_bits() const { return k_; }
  int base_rows() const { return static_cast<int>(base_.size()); }
  int base_cols() const { return 24; }
  int base_entry(int r, int c) const { return base_[r][c]; }

  /// Variable indices of expanded check `c` (0 .. n(1-r)-1).
  const std::vector<int>& check_vars(int c) const { return check_vars_[c]; }
  int num_checks() const { return static_cast<int>(check_vars_.size()); }

 private:
  int z_ = 0, n_ = 0, k_ = 0;
  std::vector<std::vector<int>> base_;
  std::vector<std::vector<int>> check_vars_;
};

/// Systematic encoding: codeword = [info | parity], H c^T = 0.
std::vector<std::uint8_t> encode(const std::vector<std::uint8_t>& info,
                                 const LdpcCode& code);

bool parity_check_ok(const std::vector<std::uint8_t>& codeword,
                     const LdpcCode& code);

struct DecodeResult {
  std::vector<std::uint8_t> bits;
  bool converged = false;
  int iterations = 0;
};

/// Flooding-schedule sum-product decoding. Input LLRs use the convention
/// llr = ln p(1)/p(0) (converted internally); message magnitudes are clamped
/// at 30. Early exit on a zero syndrome; non-convergence is a flag.
DecodeResult decode(const ArrayXd& llrs, const LdpcCode& code,
                    int max_iters = 100);

/// Per-symbol bit split of a systematic codeword: symbol i takes the i-th
/// k-bit block of c_I as b_I and the i-th (m-k)-bit block of c_P as b_P,
/// both read MSB-first.
struct SymbolBits {
  std::uint32_t info = 0;    // int(b_I)
  std::uint32_t parity = 0;  // int(b_P)
};

std::vector<SymbolBits> bit_placement(const std::vector<std::uint8_t>& c_info,
                                      const std::vector<std::uint8_t>& c_parity,
                                      int m, int k);

/// Constellation index of one symbol: t = int(b_P) * 2^k + int(b_I).
inline std::uint32_t point_index(SymbolBits s, int k) {
  return (s.parity << k) | s.info;
}

}  // namespace shapecm::fec
