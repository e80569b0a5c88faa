#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>

#include "shapecm/autodiff/grad_check.hpp"
#include "shapecm/autodiff/param_vector.hpp"
#include "shapecm/autodiff/tape.hpp"
#include "shapecm/constellation.hpp"

namespace shapecm {

using Eigen::ArrayXd;
using Eigen::MatrixXd;

/// Per-bit posteriors for one received symbol and the matching LLRs with the
/// convention llr_i = ln p(b_i=1|y) - ln p(b_i=0|y).
struct BitPosteriors {
  ArrayXd p0, p1, llr;  // size m each
};

/// Exact prior-aware AWGN demapper (true bit posteriors), log-domain with a
/// single max-subtraction over all points. Reusable across received symbols.
class ExactDemapper {
 public:
  ExactDemapper(const ArrayXcd& points, const ArrayXd& point_probs);

  BitPosteriors posteriors(std::complex<double> y, double n0) const;
  /// Sum over bits of log2 p(b_i = label_i(t) | y) for transmitted point t
  /// (the per-symbol BMI sample term), posterior floored at 1e-30.
  double true_bit_log2post_sum(std::complex<double> y, int t, double n0) const;

  int m() const { return m_; }

 private:
  int m_;
  ArrayXcd points_;
  ArrayXd log_prior_;           // ln pd, -inf where pd == 0
  std::vector<ArrayXd> mask1_;  // per bit: 1.0 where label bit is 1
};

BitPosteriors exact_awgn_demap(std::complex<double> y,
                               const ShapedConstellation& c,
                               const ArrayXd& point_probs, double n0);

/// Trainable demapper: dense layers on the feature vector
/// [Re yhat, Im yhat, Re hhat, Im hhat, snr_db/20] with tanh activations and
/// a linear m-unit output head read as LLRs.
struct DemapperModel {
  int m = 6;
  int hidden = 128;
  ad::ParamVector params;
};

/// Symmetric-uniform 1/sqrt(fan-in) weights, zero biases.
DemapperModel init_demapper(int m, int hidden, std::uint64_t seed);

/// LLRs for a batch of symbols; features is 5 x N column-per-symbol.
MatrixXd nn_demap_llrs(const MatrixXd& features, const DemapperModel& model);

BitPosteriors nn_demap(std::complex<double> y_hat, std::complex<double> h_hat,
                       double snr_db, const DemapperModel& model);

/// Tape version of the feature->LLR network: features is a flat row-major
/// 5 x N node, result is a flat row-major m x N node. Parameters come from a
/// bound DemapperModel::params.
ad::Var nn_demap_llrs_on_tape(ad::Var features, int n_symbols,
                              const ad::BoundParams& params, int m,
                              int hidden);

/// Exact demapper on tape for training: all 2^m points are transmitted
/// through one channel realization, y_* holds the received symbol for each
/// point. Result is flat row-major m x 2^m: natural-log posterior of the
/// true bit label_i(t) given y_t, floored at ln(1e-30).
ad::Var exact_demap_true_bit_logpost_on_tape(ad::Var y_re, ad::Var y_im,
                                             ad::Var x_re, ad::Var x_im,
                                             ad::Var log_prior, int m,
                                             double n0);

/// Same output contract from NN LLRs (flat m x T): ln p(b_i = label_i(t)),
/// floored at ln(1e-30).
ad::Var nn_true_bit_logpost_on_tape(ad::Var llrs, int m);

/// Reorders symbol-major LLRs (q symbols, m per symbol in label-bit order)
/// into codeword order [c_I | c_P] for a systematic code.
ArrayXd llr_reorder(const ArrayXd& symbol_major, int m, int k, int q);
/// Inverse permutation (codeword order back to symbol-major).
ArrayXd llr_reorder_inverse(const ArrayXd& codeword_order, int m, int k,
                            int q);

}  // namespace shapecm
