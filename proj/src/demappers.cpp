#include "shapecm/demappers.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "shapecm/channels.hpp"

namespace shapecm {

namespace {

constexpr double kLogFloor = -69.0775527898213705;  // ln(1e-30)
constexpr double kInvLn2 = 1.4426950408889634;

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMat> mat_view(const ad::ParamVector& pv,
                                  const std::string& name) {
  const auto& info = pv.segment_info(name);
  return {pv.values().data() + info.offset, info.rows, info.cols};
}

Eigen::Map<const Eigen::VectorXd> vec_view(const ad::ParamVector& pv,
                                           const std::string& name) {
  const auto& info = pv.segment_info(name);
  return {pv.values().data() + info.offset, info.size()};
}

int log2_exact(Eigen::Index n) {
  int m = 0;
  while ((Eigen::Index{1} << m) < n) ++m;
  if ((Eigen::Index{1} << m) != n)
    throw std::invalid_argument("demapper: point count " + std::to_string(n) +
                                " is not a power of two");
  return m;
}

}  // namespace

ExactDemapper::ExactDemapper(const ArrayXcd& points,
                             const ArrayXd& point_probs)
    : m_(log2_exact(points.size())), points_(points) {
  if (point_probs.size() != points.size())
    throw std::invalid_argument("demapper: " + std::to_string(points.size()) +
                                " points vs " +
                                std::to_string(point_probs.size()) + " probs");
  log_prior_.resize(point_probs.size());
  for (Eigen::Index t = 0; t < point_probs.size(); ++t)
    log_prior_[t] = point_probs[t] > 0.0
                        ? std::log(point_probs[t])
                        : -std::numeric_limits<double>::infinity();
  mask1_.resize(m_);
  for (int i = 0; i < m_; ++i) {
    mask1_[i].resize(points.size());
    for (Eigen::Index t = 0; t < points.size(); ++t)
      mask1_[i][t] = label_bit(static_cast<int>(t), i, m_) ? 1.0 : 0.0;
  }
}

BitPosteriors ExactDemapper::posteriors(std::complex<double> y,
                                        double n0) const {
  const ArrayXd g = log_prior_ - (points_ - y).abs2() / n0;
  const ArrayXd e = (g - g.maxCoeff()).exp();
  BitPosteriors out;
  out.p0.resize(m_);
  out.p1.resize(m_);
  out.llr.resize(m_);
  for (int i = 0; i < m_; ++i) {
    const double num1 = (e * mask1_[i]).sum();
    const double num0 = (e * (1.0 - mask1_[i])).sum();
    const double denom = num0 + num1;
    out.p0[i] = num0 / denom;
    out.p1[i] = num1 / denom;
    out.llr[i] = std::log(std::max(num1, 1e-300)) -
                 std::log(std::max(num0, 1e-300));
  }
  return out;
}

double ExactDemapper::true_bit_log2post_sum(std::complex<double> y, int t,
                                            double n0) const {
  const ArrayXd g = log_prior_ - (points_ - y).abs2() / n0;
  const ArrayXd e = (g - g.maxCoeff()).exp();
  const double denom = e.sum();
  double acc = 0.0;
  for (int i = 0; i < m_; ++i) {
    const double num1 = (e * mask1_[i]).sum();
    const double num = label_bit(t, i, m_) ? num1 : denom - num1;
    acc += std::log2(std::max(num / denom, 1e-30));
  }
  return acc;
}

BitPosteriors exact_awgn_demap(std::complex<double> y,
                               const ShapedConstellation& c,
                               const ArrayXd& point_probs, double n0) {
  return ExactDemapper(c.points, point_probs).posteriors(y, n0);
}

DemapperModel init_demapper(int m, int hidden, std::uint64_t seed) {
  DemapperModel d;
  d.m = m;
  d.hidden = hidden;
  d.params.add("dw1", hidden, 5);
  d.params.add("db1", hidden);
  d.params.add("dw2", hidden, hidden);
  d.params.add("db2", hidden);
  d.params.add("dw3", hidden, hidden);
  d.params.add("db3", hidden);
  d.params.add("dwo", m, hidden);
  d.params.add("dbo", m);
  RngStream rng(seed);
  for (const char* name : {"dw1", "dw2", "dw3", "dwo"}) {
    auto seg = d.params.segment(name);
    const double bound =
        1.0 / std::sqrt(static_cast<double>(d.params.segment_info(name).cols));
    for (Eigen::Index i = 0; i < seg.size(); ++i)
      seg[i] = bound * (2.0 * rng.uniform() - 1.0);
  }
  return d;
}

MatrixXd nn_demap_llrs(const MatrixXd& features, const DemapperModel& model) {
  if (features.rows() != 5)
    throw std::invalid_argument("nn demapper: expected 5 feature rows, got " +
                                std::to_string(features.rows()));
  const auto& pv = model.params;
  MatrixXd h = ((mat_view(pv, "dw1") * features).colwise() +
                vec_view(pv, "db1"))
                   .array()
                   .tanh();
  h = ((mat_view(pv, "dw2") * h).colwise() + vec_view(pv, "db2"))
          .array()
          .tanh();
  h = ((mat_view(pv, "dw3") * h).colwise() + vec_view(pv, "db3"))
          .array()
          .tanh();
  return (mat_view(pv, "dwo") * h).colwise() + vec_view(pv, "dbo");
}

BitPosteriors nn_demap(std::complex<double> y_hat, std::complex<double> h_hat,
                       double snr_db, const DemapperModel& model) {
  MatrixXd f(5, 1);
  f << y_hat.real(), y_hat.imag(), h_hat.real(), h_hat.imag(), snr_db / 20.0;
  const MatrixXd llr = nn_demap_llrs(f, model);
  BitPosteriors out;
  out.llr = llr.col(0).array();
  out.p1 = 1.0 / (1.0 + (-out.llr).exp());
  out.p0 = 1.0 - out.p1;
  return out;
}

ad::Var nn_demap_llrs_on_tape(ad::Var features, int n_symbols,
                              const ad::BoundParams& params, int m,
                              int hidden) {
  using namespace ad;
  Var h = tanh(matmul(params["dw1"], features, hidden, 5, n_symbols) +
               repeat_interleave(params["db1"], n_symbols));
  h = tanh(matmul(params["dw2"], h, hidden, hidden, n_symbols) +
           repeat_interleave(params["db2"], n_symbols));
  h = tanh(matmul(params["dw3"], h, hidden, hidden, n_symbols) +
           repeat_interleave(params["db3"], n_symbols));
  return matmul(params["dwo"], h, m, hidden, n_symbols) +
         repeat_interleave(params["dbo"], n_symbols);
}

ad::Var exact_demap_true_bit_logpost_on_tape(ad::Var y_re, ad::Var y_im,
                                             ad::Var x_re, ad::Var x_im,
                                             ad::Var log_prior, int m,
                                             double n0) {
  using namespace ad;
  Tape& tape = *y_re.tape;
  const int t_count = 1 << m;
  Var dre = repeat_interleave(y_re, t_count) - tile(x_re, t_count);
  Var dim = repeat_interleave(y_im, t_count) - tile(x_im, t_count);
  Var logits =
      tile(log_prior, t_count) + scale(square(dre) + square(dim), -1.0 / n0);
  Var post = segment_softmax(logits, t_count);  // point posteriors per symbol

  // Bit marginals for all bits at once: (T x T) posteriors times the
  // (T x m) label matrix.
  ArrayXd label_mat(static_cast<Eigen::Index>(t_count) * m);
  ArrayXd sel_off(label_mat.size()), sel_sign(label_mat.size());
  for (int t = 0; t < t_count; ++t)
    for (int i = 0; i < m; ++i) {
      const int bit = label_bit(t, i, m);
      label_mat[static_cast<Eigen::Index>(t) * m + i] = bit;
      // true-bit posterior = sel_off + sel_sign * p(b_i = 1 | y)
      sel_off[static_cast<Eigen::Index>(t) * m + i] = bit ? 0.0 : 1.0;
      sel_sign[static_cast<Eigen::Index>(t) * m + i] = bit ? 1.0 : -1.0;
    }
  Var p1 = matmul(post, tape.leaf(label_mat), t_count, t_count, m);
  Var p_true = tape.leaf(sel_off) + tape.leaf(sel_sign) * p1;
  return clamp_min(log(p_true), kLogFloor);  // flat T x m, symbol-major
}

ad::Var nn_true_bit_logpost_on_tape(ad::Var llrs, int m) {
  using namespace ad;
  Tape& tape = *llrs.tape;
  const Eigen::Index total = tape.value(llrs).size();
  if (total % m != 0)
    throw std::invalid_argument("nn logpost: llr size not divisible by m");
  const Eigen::Index t_count = total / m;
  ArrayXd sgn(total);  // flat m x T, bit-major like the network output
  for (int i = 0; i < m; ++i)
    for (Eigen::Index t = 0; t < t_count; ++t)
      sgn[i * t_count + t] =
          label_bit(static_cast<int>(t), i, m) ? -1.0 : 1.0;
  return clamp_min(-softplus(llrs * tape.leaf(sgn)), kLogFloor);
}

ArrayXd llr_reorder(const ArrayXd& symbol_major, int m, int k, int q) {
  if (symbol_major.size() != static_cast<Eigen::Index>(q) * m)
    throw std::invalid_argument(
        "llr_reorder: got " + std::to_string(symbol_major.size()) +
        " llrs, expected q*m = " + std::to_string(q * m));
  ArrayXd out(symbol_major.size());
  const int rn = q * k;
  for (int i = 0; i < q; ++i) {
    for (int b = 0; b < k; ++b)
      out[static_cast<Eigen::Index>(i) * k + b] =
          symbol_major[static_cast<Eigen::Index>(i) * m + (m - k) + b];
    for (int b = 0; b < m - k; ++b)
      out[rn + static_cast<Eigen::Index>(i) * (m - k) + b] =
          symbol_major[static_cast<Eigen::Index>(i) * m + b];
  }
  return out;
}

ArrayXd llr_reorder_inverse(const ArrayXd& codeword_order, int m, int k,
                            int q) {
  if (codeword_order.size() != static_cast<Eigen::Index>(q) * m)
    throw std::invalid_argument(
        "llr_reorder_inverse: got " + std::to_string(codeword_order.size()) +
        " llrs, expected q*m = " + std::to_string(q * m));
  ArrayXd out(codeword_order.size());
  const int rn = q * k;
  for (int i = 0; i < q; ++i) {
    for (int b = 0; b < k; ++b)
      out[static_cast<Eigen::Index>(i) * m + (m - k) + b] =
          codeword_order[static_cast<Eigen::Index>(i) * k + b];
    for (int b = 0; b < m - k; ++b)
      out[static_cast<Eigen::Index>(i) * m + b] =
          codeword_order[rn + static_cast<Eigen::Index>(i) * (m - k) + b];
  }
  return out;
}

}  // namespace shapecm
