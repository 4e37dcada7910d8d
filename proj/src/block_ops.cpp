#include "block_ops.hpp"

#include <cmath>
#include <stdexcept>

namespace edscreen::detail {

namespace {

/// F with F F' = omega; PSD input required, exact zeros allowed.
Eigen::MatrixXd psd_factor_checked(const Eigen::MatrixXd& omega, const char* name) {
  if (omega.size() == 0) return omega;
  if (!omega.isApprox(omega.transpose(), 1e-10))
    throw std::invalid_argument(std::string(name) + " is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(omega);
  const double scale = std::max(1.0, omega.cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() < -1e-9 * scale)
    throw std::invalid_argument(std::string(name) + " is not positive semi-definite");
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

}  // namespace

BlockEvaluation evaluate_blocks(const DesignMatrices& design, const Eigen::MatrixXd& omega_la,
                                const Eigen::MatrixXd& omega_school, double sigma2) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("sigma2 must be positive");
  if (omega_la.rows() != design.q_la() || omega_school.rows() != design.q_school())
    throw std::invalid_argument("covariance dimensions do not match design");

  const int p = design.p();
  const int q3 = design.q_la();
  const int q2 = design.q_school();
  const Eigen::MatrixXd f3 = psd_factor_checked(omega_la, "omega_la");
  const Eigen::MatrixXd f2 = psd_factor_checked(omega_school, "omega_school");

  BlockEvaluation ev;
  ev.p = p;
  ev.q3 = q3;
  ev.q2 = q2;
  ev.n = design.n();
  ev.xtvx = Eigen::MatrixXd::Zero(p, p);
  ev.xtvy = Eigen::VectorXd::Zero(p);
  ev.las.reserve(design.las.size());

  for (const auto& la : design.las) {
    if (la.n() < 1) throw std::invalid_argument("empty LA block " + la.la_id);
    const int nk = la.n();
    const int s_count = static_cast<int>(la.schools.size());
    const int m = q3 + s_count * q2;
    const int cols = p + 1 + m;

    // wide = [X y U | Z3t]; U = [Z3 | blockdiag(Z2)], Z3t = Z3 * f3.
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(nk, cols);
    g.middleCols(0, p) = design.x.middleRows(la.row_begin, nk);
    g.col(p) = design.y.segment(la.row_begin, nk);
    if (q3 > 0) g.middleCols(p + 1, q3) = design.z_la.middleRows(la.row_begin, nk);
    if (q2 > 0)
      for (int s = 0; s < s_count; ++s) {
        const auto& sb = la.schools[s];
        g.block(sb.row_begin - la.row_begin, p + 1 + q3 + s * q2, sb.n(), q2) =
            design.z_school.middleRows(sb.row_begin, sb.n());
      }
    Eigen::MatrixXd wide(nk, cols + q3);
    wide.leftCols(cols) = g;
    if (q3 > 0)
      wide.rightCols(q3).noalias() = design.z_la.middleRows(la.row_begin, nk) * f3;

    // One per-school sweep applies W^-1 (W = V without the LA-level term).
    double logdet = 0.0;
    for (int s = 0; s < s_count; ++s) {
      const auto& sb = la.schools[s];
      const int ns = sb.n();
      auto rows = wide.middleRows(sb.row_begin - la.row_begin, ns);
      if (q2 > 0) {
        const Eigen::MatrixXd z2t = design.z_school.middleRows(sb.row_begin, ns) * f2;
        Eigen::MatrixXd c = z2t.transpose() * z2t;
        c.diagonal().array() += sigma2;
        Eigen::LLT<Eigen::MatrixXd> llt(c);
        if (llt.info() != Eigen::Success)
          throw std::runtime_error("school factor failed in LA " + la.la_id);
        rows -= z2t * llt.solve(z2t.transpose() * rows);
        logdet += (ns - q2) * std::log(sigma2);
        for (int j = 0; j < q2; ++j) logdet += 2.0 * std::log(llt.matrixL()(j, j));
      } else {
        logdet += ns * std::log(sigma2);
      }
      rows /= sigma2;
    }

    // V^-1 G = W^-1 G - P M^-1 (Z3t' W^-1 G), with P = W^-1 Z3t.
    Eigen::MatrixXd vg;
    if (q3 > 0) {
      const Eigen::MatrixXd z3t = design.z_la.middleRows(la.row_begin, nk) * f3;
      const auto pmat = wide.rightCols(q3);
      Eigen::MatrixXd mmat = z3t.transpose() * pmat;
      mmat.diagonal().array() += 1.0;
      Eigen::LLT<Eigen::MatrixXd> mllt(mmat);
      if (mllt.info() != Eigen::Success)
        throw std::runtime_error("LA factor failed in LA " + la.la_id);
      for (int j = 0; j < q3; ++j) logdet += 2.0 * std::log(mllt.matrixL()(j, j));
      vg = wide.leftCols(cols) - pmat * mllt.solve(z3t.transpose() * wide.leftCols(cols));
    } else {
      vg = wide.leftCols(cols);
    }

    LaGrams lg;
    lg.n = nk;
    lg.n_schools = s_count;
    lg.logdet = logdet;
    lg.s.noalias() = g.transpose() * vg;
    lg.f.noalias() = vg.transpose() * vg;
    lg.s = 0.5 * (lg.s + lg.s.transpose()).eval();  // symmetrize rounding
    ev.logdet += logdet;
    ev.xtvx += lg.s.topLeftCorner(p, p);
    ev.xtvy += lg.s.block(0, p, p, 1);
    ev.las.push_back(std::move(lg));
  }
  return ev;
}

Eigen::VectorXd gls_beta(const BlockEvaluation& ev) {
  Eigen::LLT<Eigen::MatrixXd> llt(ev.xtvx);
  if (llt.info() != Eigen::Success) throw std::runtime_error("collinear fixed effects");
  // guard against near-singularity that LLT tolerates
  const Eigen::VectorXd d = llt.matrixL().diagonal();
  if (d.minCoeff() <= 1e-10 * d.maxCoeff()) throw std::runtime_error("collinear fixed effects");
  return llt.solve(ev.xtvy);
}

double minus2ll(const BlockEvaluation& ev, const Eigen::VectorXd& beta) {
  double quad = 0.0;
  const int p = ev.p;
  for (const auto& la : ev.las) {
    const double yy = la.s(p, p);
    const Eigen::VectorXd xy = la.s.block(0, p, p, 1);
    quad += yy - 2.0 * beta.dot(xy) + beta.dot(la.s.topLeftCorner(p, p) * beta);
  }
  return ev.n * std::log(2.0 * M_PI) + ev.logdet + quad;
}

std::pair<int, int> ThetaLayout::pair_at(int k) {
  int a = 0;
  while ((a + 1) * (a + 2) / 2 <= k) ++a;
  return {a, k - a * (a + 1) / 2};
}

int ThetaLayout::position_of(int a, int b) { return a * (a + 1) / 2 + b; }

Eigen::VectorXd pack_theta(const Eigen::MatrixXd& omega_la, const Eigen::MatrixXd& omega_school,
                           double sigma2) {
  ThetaLayout lay{static_cast<int>(omega_la.rows()), static_cast<int>(omega_school.rows())};
  Eigen::VectorXd theta(lay.size());
  int k = 0;
  for (int a = 0; a < lay.q3; ++a)
    for (int b = 0; b <= a; ++b) theta[k++] = omega_la(a, b);
  for (int a = 0; a < lay.q2; ++a)
    for (int b = 0; b <= a; ++b) theta[k++] = omega_school(a, b);
  theta[k] = sigma2;
  return theta;
}

void unpack_theta(const Eigen::VectorXd& theta, int q3, int q2, Eigen::MatrixXd& omega_la,
                  Eigen::MatrixXd& omega_school, double& sigma2) {
  omega_la.resize(q3, q3);
  omega_school.resize(q2, q2);
  int k = 0;
  for (int a = 0; a < q3; ++a)
    for (int b = 0; b <= a; ++b) {
      omega_la(a, b) = omega_la(b, a) = theta[k++];
    }
  for (int a = 0; a < q2; ++a)
    for (int b = 0; b <= a; ++b) {
      omega_school(a, b) = omega_school(b, a) = theta[k++];
    }
  sigma2 = theta[k];
}

namespace {

inline double sym_trace(const Eigen::Ref<const Eigen::MatrixXd>& m, int a, int b) {
  return a == b ? m(a, a) : 2.0 * m(a, b);
}

inline double quad_term(const Eigen::Ref<const Eigen::VectorXd>& c, int a, int b) {
  return a == b ? c[a] * c[a] : 2.0 * c[a] * c[b];
}

/// tr(E_ab P E_cd P') with E the symmetric elementary pair matrices.
inline double e_trace(const Eigen::Ref<const Eigen::MatrixXd>& pmat, int a, int b, int c, int d) {
  double t = pmat(b, c) * pmat(a, d);
  if (c != d) t += pmat(b, d) * pmat(a, c);
  if (a != b) {
    t += pmat(a, c) * pmat(b, d);
    if (c != d) t += pmat(a, d) * pmat(b, c);
  }
  return t;
}

}  // namespace

Eigen::VectorXd score_theta(const BlockEvaluation& ev, const Eigen::VectorXd& beta,
                            const Eigen::MatrixXd& omega_la, const Eigen::MatrixXd& omega_school,
                            double sigma2) {
  const ThetaLayout lay{ev.q3, ev.q2};
  const int p = ev.p;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(lay.size());
  Eigen::VectorXd cb(p + 1);
  cb.head(p) = -beta;
  cb[p] = 1.0;

  for (const auto& la : ev.las) {
    const int m = ev.m(la);
    const int u0 = ev.u_offset();
    const auto a_full = la.s.block(u0, u0, m, m);
    // c = U'V^-1 r; quadratic pieces via [X y] combination vector
    const Eigen::VectorXd c = la.s.block(u0, 0, m, p + 1) * cb;
    const double rvr2 = cb.dot(la.f.topLeftCorner(p + 1, p + 1) * cb);  // ||V^-1 r||^2

    double tr_oa3 = 0.0, tr_oa2 = 0.0;
    int k = 0;
    for (int a = 0; a < ev.q3; ++a)
      for (int b = 0; b <= a; ++b) {
        g[k] += sym_trace(a_full.topLeftCorner(ev.q3, ev.q3), a, b) -
                quad_term(c.head(ev.q3), a, b);
        ++k;
      }
    if (ev.q3 > 0)
      tr_oa3 = (omega_la.array() * a_full.topLeftCorner(ev.q3, ev.q3).array()).sum();
    for (int s = 0; s < la.n_schools; ++s) {
      const auto a_ss = a_full.block(ev.q3 + s * ev.q2, ev.q3 + s * ev.q2, ev.q2, ev.q2);
      const auto c_s = c.segment(ev.q3 + s * ev.q2, ev.q2);
      int k2 = lay.n_la();
      for (int a = 0; a < ev.q2; ++a)
        for (int b = 0; b <= a; ++b) {
          g[k2] += sym_trace(a_ss, a, b) - quad_term(c_s, a, b);
          ++k2;
        }
      if (ev.q2 > 0) tr_oa2 += (omega_school.array() * a_ss.array()).sum();
    }
    const double tr_vinv = (la.n - tr_oa3 - tr_oa2) / sigma2;
    g[lay.sigma_index()] += tr_vinv - rvr2;
  }
  return g;
}

Eigen::MatrixXd info_theta(const BlockEvaluation& ev, const Eigen::MatrixXd& omega_la,
                           const Eigen::MatrixXd& omega_school, double sigma2) {
  const ThetaLayout lay{ev.q3, ev.q2};
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(lay.size(), lay.size());
  const int si = lay.sigma_index();

  for (const auto& la : ev.las) {
    const int m = ev.m(la);
    const int u0 = ev.u_offset();
    const auto a_full = la.s.block(u0, u0, m, m);
    const auto b_full = la.f.block(u0, u0, m, m);
    const auto a33 = a_full.topLeftCorner(ev.q3, ev.q3);
    const auto b33 = b_full.topLeftCorner(ev.q3, ev.q3);

    // LA x LA
    for (int i = 0; i < lay.n_la(); ++i) {
      const auto [a, b] = ThetaLayout::pair_at(i);
      for (int j = i; j < lay.n_la(); ++j) {
        const auto [c, d] = ThetaLayout::pair_at(j);
        t(i, j) += e_trace(a33, a, b, c, d);
      }
      // LA x sigma2
      t(i, si) += sym_trace(b33, a, b);
    }

    double tr_oa3 = ev.q3 > 0 ? (omega_la.array() * a33.array()).sum() : 0.0;
    double tr_ob3 = ev.q3 > 0 ? (omega_la.array() * b33.array()).sum() : 0.0;
    double tr_oa2 = 0.0, tr_ob2 = 0.0;

    for (int s = 0; s < la.n_schools; ++s) {
      const int off_s = ev.q3 + s * ev.q2;
      const auto a3s = a_full.block(0, off_s, ev.q3, ev.q2);
      const auto a_ss = a_full.block(off_s, off_s, ev.q2, ev.q2);
      const auto b_ss = b_full.block(off_s, off_s, ev.q2, ev.q2);
      if (ev.q2 > 0) {
        tr_oa2 += (omega_school.array() * a_ss.array()).sum();
        tr_ob2 += (omega_school.array() * b_ss.array()).sum();
      }
      // LA x school
      for (int i = 0; i < lay.n_la(); ++i) {
        const auto [a, b] = ThetaLayout::pair_at(i);
        for (int j = 0; j < lay.n_school(); ++j) {
          const auto [c, d] = ThetaLayout::pair_at(j);
          t(i, lay.n_la() + j) += e_trace(a3s, a, b, c, d);
        }
      }
      // school x sigma2
      for (int j = 0; j < lay.n_school(); ++j) {
        const auto [c, d] = ThetaLayout::pair_at(j);
        t(lay.n_la() + j, si) += sym_trace(b_ss, c, d);
      }
      // school x school across school pairs (this LA)
      for (int s2 = 0; s2 < la.n_schools; ++s2) {
        const auto k_st = a_full.block(off_s, ev.q3 + s2 * ev.q2, ev.q2, ev.q2);
        for (int i = 0; i < lay.n_school(); ++i) {
          const auto [a, b] = ThetaLayout::pair_at(i);
          for (int j = i; j < lay.n_school(); ++j) {
            const auto [c, d] = ThetaLayout::pair_at(j);
            t(lay.n_la() + i, lay.n_la() + j) += e_trace(k_st, a, b, c, d);
          }
        }
      }
    }

    const double tr_vinv = (la.n - tr_oa3 - tr_oa2) / sigma2;
    const double tr_vinv2 = (tr_vinv - tr_ob3 - tr_ob2) / sigma2;
    t(si, si) += tr_vinv2;
  }
  return t.selfadjointView<Eigen::Upper>();
}

}  // namespace edscreen::detail
