#include "shapecm/fec/ldpc.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace shapecm::fec {

namespace {

constexpr double kLlrClamp = 30.0;

// phi(x) = -ln tanh(x/2), self-inverse on (0, inf).
inline double phi(double x) {
  x = std::max(x, 1e-12);
  return -std::log(std::tanh(0.5 * std::min(x, 60.0)));
}

// (P^s u)[i] = u[(i + s) mod z], the cyclic-shift circulant acting on a block.
void rot_xor(std::vector<std::uint8_t>& acc, const std::uint8_t* u, int shift,
             int z) {
  for (int i = 0; i < z; ++i) acc[i] ^= u[(i + shift) % z];
}

}  // namespace

LdpcCode LdpcCode::from_stream(std::istream& is, int z) {
  if (z <= 0) throw std::invalid_argument("ldpc: lifting size must be > 0");
  LdpcCode code;
  code.z_ = z;
  std::string line;
  while (std::getline(is, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream row(line);
    std::vector<int> entries;
    int v;
    while (row >> v) entries.push_back(v);
    if (entries.empty()) continue;
    if (entries.size() != 24)
      throw std::runtime_error("ldpc: base row with " +
                               std::to_string(entries.size()) +
                               " entries, expected 24");
    for (int e : entries)
      if (e < -1 || e >= z)
        throw std::runtime_error("ldpc: shift " + std::to_string(e) +
                                 " out of range for z=" + std::to_string(z));
    code.base_.push_back(std::move(entries));
  }
  if (code.base_.empty()) throw std::runtime_error("ldpc: empty base matrix");
  code.n_ = 24 * z;
  code.k_ = (24 - static_cast<int>(code.base_.size())) * z;

  code.check_vars_.assign(code.base_.size() * z, {});
  for (int r = 0; r < code.base_rows(); ++r)
    for (int c = 0; c < 24; ++c) {
      const int shift = code.base_[r][c];
      if (shift < 0) continue;
      for (int e = 0; e < z; ++e)
        code.check_vars_[static_cast<std::size_t>(r) * z + e].push_back(
            c * z + (e + shift) % z);
    }
  return code;
}

LdpcCode LdpcCode::from_file(const std::string& path, int z) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("ldpc: cannot read " + path);
  return from_stream(f, z);
}

std::vector<std::uint8_t> encode(const std::vector<std::uint8_t>& info,
                                 const LdpcCode& code) {
  const int z = code.z();
  const int mb = code.base_rows();
  const int kb = 24 - mb;
  if (static_cast<int>(info.size()) != code.info_bits())
    throw std::invalid_argument("encode: info length " +
                                std::to_string(info.size()) + " != " +
                                std::to_string(code.info_bits()));

  // Block syndromes of the systematic part.
  std::vector<std::vector<std::uint8_t>> lambda(
      mb, std::vector<std::uint8_t>(z, 0));
  for (int r = 0; r < mb; ++r)
    for (int c = 0; c < kb; ++c) {
      const int shift = code.base_entry(r, c);
      if (shift >= 0) rot_xor(lambda[r], info.data() + c * z, shift, z);
    }

  // First parity block: summing all block rows telescopes the dual diagonal
  // and the paired shifted entries of column kb, leaving P^0 u0.
  std::vector<std::vector<std::uint8_t>> u(mb, std::vector<std::uint8_t>(z, 0));
  for (int r = 0; r < mb; ++r)
    for (int i = 0; i < z; ++i) u[0][i] ^= lambda[r][i];

  // Back-substitution down the dual diagonal.
  for (int r = 0; r + 1 < mb; ++r) {
    std::vector<std::uint8_t>& next = u[r + 1];
    next = lambda[r];
    if (r > 0)
      for (int i = 0; i < z; ++i) next[i] ^= u[r][i];
    const int shift = code.base_entry(r, kb);
    if (shift >= 0) rot_xor(next, u[0].data(), shift, z);
  }

  std::vector<std::uint8_t> cw(code.n());
  std::copy(info.begin(), info.end(), cw.begin());
  for (int r = 0; r < mb; ++r)
    std::copy(u[r].begin(), u[r].end(), cw.begin() + (kb + r) * z);
  return cw;
}

bool parity_check_ok(const std::vector<std::uint8_t>& codeword,
                     const LdpcCode& code) {
  if (static_cast<int>(codeword.size()) != code.n()) return false;
  for (int c = 0; c < code.num_checks(); ++c) {
    std::uint8_t acc = 0;
    for (int v : code.check_vars(c)) acc ^= codeword[v] & 1u;
    if (acc) return false;
  }
  return true;
}

DecodeResult decode(const ArrayXd& llrs, const LdpcCode& code, int max_iters) {
  const int n = code.n();
  if (llrs.size() != n)
    throw std::invalid_argument("decode: " + std::to_string(llrs.size()) +
                                " llrs for code length " + std::to_string(n));
  // Internal sign convention: L = ln p(0)/p(1).
  ArrayXd channel = (-llrs).min(kLlrClamp).max(-kLlrClamp);

  // Flat edge arrays in check-major order.
  std::vector<int> offs(code.num_checks() + 1, 0);
  for (int c = 0; c < code.num_checks(); ++c)
    offs[c + 1] = offs[c] + static_cast<int>(code.check_vars(c).size());
  const int n_edges = offs.back();
  std::vector<int> edge_var(n_edges);
  for (int c = 0; c < code.num_checks(); ++c)
    std::copy(code.check_vars(c).begin(), code.check_vars(c).end(),
              edge_var.begin() + offs[c]);

  std::vector<double> q(n_edges), r(n_edges, 0.0);
  for (int e = 0; e < n_edges; ++e) q[e] = channel[edge_var[e]];

  DecodeResult res;
  res.bits.assign(n, 0);
  ArrayXd total(n);

  for (int iter = 1; iter <= max_iters; ++iter) {
    res.iterations = iter;
    // Check-node update (tanh rule via phi).
    for (int c = 0; c < code.num_checks(); ++c) {
      double mag_sum = 0.0;
      int sign_prod = 1;
      for (int e = offs[c]; e < offs[c + 1]; ++e) {
        mag_sum += phi(std::abs(q[e]));
        if (q[e] < 0.0) sign_prod = -sign_prod;
      }
      for (int e = offs[c]; e < offs[c + 1]; ++e) {
        const double mag = phi(mag_sum - phi(std::abs(q[e])));
        const int sign = q[e] < 0.0 ? -sign_prod : sign_prod;
        r[e] = std::min(mag, kLlrClamp) * sign;
      }
    }
    // Variable-node update and hard decision.
    total = channel;
    for (int e = 0; e < n_edges; ++e) total[edge_var[e]] += r[e];
    for (int v = 0; v < n; ++v) res.bits[v] = total[v] < 0.0 ? 1 : 0;
    if (parity_check_ok(res.bits, code)) {
      res.converged = true;
      return res;
    }
    for (int e = 0; e < n_edges; ++e) {
      const double m = total[edge_var[e]] - r[e];
      q[e] = std::min(std::max(m, -kLlrClamp), kLlrClamp);
    }
  }
  return res;
}

std::vector<SymbolBits> bit_placement(const std::vector<std::uint8_t>& c_info,
                                      const std::vector<std::uint8_t>& c_parity,
                                      int m, int k) {
  if (k < 1 || k >= m)
    throw std::invalid_argument("bit_placement: need 1 <= k < m");
  const std::size_t n = c_info.size() + c_parity.size();
  if (n % static_cast<std::size_t>(m) != 0)
    throw std::invalid_argument("bit_placement: n = " + std::to_string(n) +
                                " not divisible by m = " + std::to_string(m));
  const std::size_t q = n / m;
  if (c_info.size() != q * static_cast<std::size_t>(k))
    throw std::invalid_argument(
        "bit_placement: info length " + std::to_string(c_info.size()) +
        " != q*k = " + std::to_string(q * k));
  std::vector<SymbolBits> out(q);
  for (std::size_t i = 0; i < q; ++i) {
    std::uint32_t bi = 0, bp = 0;
    for (int b = 0; b < k; ++b)
      bi = (bi << 1) | (c_info[i * k + b] & 1u);
    for (int b = 0; b < m - k; ++b)
      bp = (bp << 1) | (c_parity[i * (m - k) + b] & 1u);
    out[i] = {bi, bp};
  }
  return out;
}

}  // namespace shapecm::fec
