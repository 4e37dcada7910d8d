#pragma once

// Internal blockwise V algebra for the 3-level model. V is block-diagonal by
// LA; within an LA,
//   V_k = sigma2 I + Z3k Om3 Z3k' + blockdiag_s(Z2ks Om2 Z2ks').
// Everything downstream (GLS, -2LL, scores, expected information, EB
// residuals) is assembled from per-LA Gram matrices of V^-1 applied to
// [X y U], U = [Z3 | blockdiag(Z2)]. Nothing here forms V densely.

#include <vector>

#include <Eigen/Dense>

#include "edscreen/design.hpp"

namespace edscreen::detail {

struct LaGrams {
  // S = [X y U]' V^-1 [X y U]; F = (V^-1 [X y U])' (V^-1 [X y U])
  Eigen::MatrixXd s;
  Eigen::MatrixXd f;
  double logdet = 0.0;
  int n = 0;
  int n_schools = 0;
};

struct BlockEvaluation {
  std::vector<LaGrams> las;
  Eigen::MatrixXd xtvx;  // sum over LAs of X'V^-1 X
  Eigen::VectorXd xtvy;
  double logdet = 0.0;
  int p = 0;
  int q3 = 0;
  int q2 = 0;
  int n = 0;

  // Column layout of the U part within S/F: Z3 columns first, then q2
  // columns per school in block order.
  int u_offset() const { return p + 1; }
  int m(const LaGrams& la) const { return q3 + la.n_schools * q2; }
};

/// One pass over the data at the given variance components (beta-free).
/// Requires sigma2 > 0 and PSD omegas (factored via eigendecomposition, so
/// exact zeros are fine).
BlockEvaluation evaluate_blocks(const DesignMatrices& design, const Eigen::MatrixXd& omega_la,
                                const Eigen::MatrixXd& omega_school, double sigma2);

/// GLS fixed effects at this evaluation. Throws "collinear fixed effects"
/// when X'V^-1 X is numerically singular.
Eigen::VectorXd gls_beta(const BlockEvaluation& ev);

double minus2ll(const BlockEvaluation& ev, const Eigen::VectorXd& beta);

/// vech (lower triangle, row order) index bookkeeping for
/// [vech(omega_la); vech(omega_school); sigma2].
struct ThetaLayout {
  int q3 = 0;
  int q2 = 0;
  int n_la() const { return q3 * (q3 + 1) / 2; }
  int n_school() const { return q2 * (q2 + 1) / 2; }
  int size() const { return n_la() + n_school() + 1; }
  int sigma_index() const { return size() - 1; }
  // pair (a, b), a >= b, for the element at position k within a level block
  static std::pair<int, int> pair_at(int k);
  static int position_of(int a, int b);  // a >= b
};

Eigen::VectorXd pack_theta(const Eigen::MatrixXd& omega_la, const Eigen::MatrixXd& omega_school,
                           double sigma2);
void unpack_theta(const Eigen::VectorXd& theta, int q3, int q2, Eigen::MatrixXd& omega_la,
                  Eigen::MatrixXd& omega_school, double& sigma2);

/// Gradient of -2LL w.r.t. theta at (ev, beta).
Eigen::VectorXd score_theta(const BlockEvaluation& ev, const Eigen::VectorXd& beta,
                            const Eigen::MatrixXd& omega_la, const Eigen::MatrixXd& omega_school,
                            double sigma2);

/// T with T_ij = sum_k tr(V^-1 dV_i V^-1 dV_j); the expected information of
/// the log-likelihood is T/2.
Eigen::MatrixXd info_theta(const BlockEvaluation& ev, const Eigen::MatrixXd& omega_la,
                           const Eigen::MatrixXd& omega_school, double sigma2);

}  // namespace edscreen::detail
