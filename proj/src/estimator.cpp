#include "edscreen/estimator.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>
#include <json.hpp>

#include "block_ops.hpp"

namespace edscreen {

using detail::BlockEvaluation;
using detail::ThetaLayout;

namespace {

struct Workstate {
  Eigen::VectorXd theta;
  BlockEvaluation ev;
  Eigen::VectorXd beta;
  double m2ll = 0.0;
};

Workstate evaluate_state(const DesignMatrices& d, const Eigen::VectorXd& theta, int q3, int q2) {
  Workstate st;
  st.theta = theta;
  Eigen::MatrixXd om3, om2;
  double s2;
  detail::unpack_theta(theta, q3, q2, om3, om2, s2);
  st.ev = detail::evaluate_blocks(d, om3, om2, s2);
  st.beta = detail::gls_beta(st.ev);
  st.m2ll = detail::minus2ll(st.ev, st.beta);
  return st;
}

/// Projects theta onto the feasible set: omegas eigenvalue-clipped at 0,
/// sigma2 floored.
Eigen::VectorXd clip_psd(const Eigen::VectorXd& theta, int q3, int q2, double sigma_floor) {
  Eigen::MatrixXd om3, om2;
  double s2;
  detail::unpack_theta(theta, q3, q2, om3, om2, s2);
  auto clip = [](Eigen::MatrixXd& m) {
    if (m.size() == 0) return;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    if (es.eigenvalues().minCoeff() >= 0.0) return;
    m = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).asDiagonal() *
        es.eigenvectors().transpose();
    m = 0.5 * (m + m.transpose()).eval();
  };
  clip(om3);
  clip(om2);
  s2 = std::max(s2, sigma_floor);
  return detail::pack_theta(om3, om2, s2);
}

Eigen::VectorXd solve_with_ridge(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  const double base = std::max(a.diagonal().cwiseAbs().maxCoeff(), 1e-30);
  double ridge = 0.0;
  for (int attempt = 0; attempt < 10; ++attempt) {
    Eigen::MatrixXd ar = a;
    ar.diagonal().array() += ridge;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(ar);
    if (ldlt.info() == Eigen::Success) {
      Eigen::VectorXd x = ldlt.solve(b);
      if (x.allFinite()) return x;
    }
    ridge = ridge == 0.0 ? 1e-12 * base : ridge * 100.0;
  }
  throw std::runtime_error("information matrix solve failed");
}

/// Lower-triangle entries of L in the vech layout, plus log sigma.
Eigen::VectorXd pack_factor(const Eigen::MatrixXd& l3, const Eigen::MatrixXd& l2,
                            double sigma2) {
  const int q3 = static_cast<int>(l3.rows());
  const int q2 = static_cast<int>(l2.rows());
  ThetaLayout lay{q3, q2};
  Eigen::VectorXd phi(lay.size());
  int k = 0;
  for (int a = 0; a < q3; ++a)
    for (int b = 0; b <= a; ++b) phi[k++] = l3(a, b);
  for (int a = 0; a < q2; ++a)
    for (int b = 0; b <= a; ++b) phi[k++] = l2(a, b);
  phi[k] = 0.5 * std::log(sigma2);
  return phi;
}

void unpack_factor(const Eigen::VectorXd& phi, int q3, int q2, Eigen::MatrixXd& l3,
                   Eigen::MatrixXd& l2, double& sigma2) {
  l3 = Eigen::MatrixXd::Zero(q3, q3);
  l2 = Eigen::MatrixXd::Zero(q2, q2);
  int k = 0;
  for (int a = 0; a < q3; ++a)
    for (int b = 0; b <= a; ++b) l3(a, b) = phi[k++];
  for (int a = 0; a < q2; ++a)
    for (int b = 0; b <= a; ++b) l2(a, b) = phi[k++];
  sigma2 = std::exp(2.0 * phi[k]);
}

Eigen::VectorXd theta_of_factor(const Eigen::VectorXd& phi, int q3, int q2) {
  Eigen::MatrixXd l3, l2;
  double s2;
  unpack_factor(phi, q3, q2, l3, l2, s2);
  return detail::pack_theta(l3 * l3.transpose(), l2 * l2.transpose(), s2);
}

/// J = d theta / d phi for the factor parameterization.
Eigen::MatrixXd factor_jacobian(const Eigen::VectorXd& phi, int q3, int q2) {
  ThetaLayout lay{q3, q2};
  Eigen::MatrixXd l3, l2;
  double s2;
  unpack_factor(phi, q3, q2, l3, l2, s2);
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(lay.size(), lay.size());
  auto fill_level = [&](const Eigen::MatrixXd& l, int q, int offset) {
    // theta_(a,b) = sum_c L(a,c) L(b,c); d/dL(i,c) = (a==i) L(b,c) + (b==i) L(a,c)
    for (int a = 0; a < q; ++a)
      for (int b = 0; b <= a; ++b) {
        const int row = offset + ThetaLayout::position_of(a, b);
        for (int i = 0; i < q; ++i)
          for (int c = 0; c <= i; ++c) {
            const int col = offset + ThetaLayout::position_of(i, c);
            double v = 0.0;
            if (a == i) v += l(b, c);
            if (b == i) v += l(a, c);
            if (v != 0.0) j(row, col) = v;
          }
      }
  };
  fill_level(l3, q3, 0);
  fill_level(l2, q2, lay.n_la());
  j(lay.sigma_index(), lay.sigma_index()) = 2.0 * s2;  // d sigma2 / d log sigma
  return j;
}

/// Factor of a PSD matrix with a small diagonal jitter so rank-deficient
/// optima remain reachable from the inside.
Eigen::MatrixXd jittered_chol(const Eigen::MatrixXd& omega, double jitter) {
  if (omega.size() == 0) return omega;
  Eigen::MatrixXd m = omega;
  m.diagonal().array() += jitter;
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  Eigen::MatrixXd f =
      es.eigenvectors() * es.eigenvalues().cwiseMax(jitter).cwiseSqrt().asDiagonal();
  // reduce to lower-triangular form via QR of f'
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(f.transpose());
  Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  return r.transpose();
}

}  // namespace

FitResult fit(const DesignMatrices& design, const ModelSpec& spec, const FitOptions& opts) {
  if (opts.method != "ml")
    throw std::invalid_argument("unsupported estimation method: '" + opts.method + "'");
  if (!(opts.tol_ll > 0.0) || !(opts.tol_param > 0.0))
    throw std::invalid_argument("tolerances must be positive");
  const int p = design.p();
  const int q3 = design.q_la();
  const int q2 = design.q_school();
  if (q3 != spec.q_la() || q2 != spec.q_school() || p != spec.p())
    throw std::invalid_argument("design does not match model spec");
  if (design.n() <= p) throw std::invalid_argument("need more pupils than fixed effects");

  // OLS starting values.
  Eigen::VectorXd beta0;
  double rss = 0.0;
  {
    Eigen::LLT<Eigen::MatrixXd> llt(Eigen::MatrixXd(design.x.transpose() * design.x));
    if (llt.info() != Eigen::Success) throw std::runtime_error("collinear fixed effects");
    const Eigen::VectorXd d = Eigen::MatrixXd(llt.matrixL()).diagonal();
    if (d.minCoeff() <= 1e-10 * d.maxCoeff())
      throw std::runtime_error("collinear fixed effects");
    beta0 = llt.solve(design.x.transpose() * design.y);
    rss = (design.y - design.x * beta0).squaredNorm();
  }
  const double s2_start = std::max(0.9 * rss / design.n(), 1e-12);
  const double sigma_floor = 1e-10 * std::max(rss / design.n(), 1e-12);
  const Eigen::MatrixXd om3_start = 0.05 * s2_start * Eigen::MatrixXd::Identity(q3, q3);
  const Eigen::MatrixXd om2_start = 0.05 * s2_start * Eigen::MatrixXd::Identity(q2, q2);

  const ThetaLayout lay{q3, q2};
  Workstate st = evaluate_state(design, detail::pack_theta(om3_start, om2_start, s2_start),
                                q3, q2);
  int iterations = 0;
  bool converged = false;

  // Phase 1: Fisher scoring on the natural parameters with PSD projection
  // and step halving; -2LL never increases on an accepted step.
  while (iterations < opts.max_iter) {
    Eigen::MatrixXd om3, om2;
    double s2;
    detail::unpack_theta(st.theta, q3, q2, om3, om2, s2);
    const Eigen::VectorXd g = detail::score_theta(st.ev, st.beta, om3, om2, s2);
    const Eigen::MatrixXd t = detail::info_theta(st.ev, om3, om2, s2);
    const Eigen::VectorXd step = solve_with_ridge(t, -g);

    bool accepted = false;
    Workstate cand;
    for (double alpha = 1.0; alpha >= 1e-10; alpha *= 0.5) {
      const Eigen::VectorXd theta_c = clip_psd(st.theta + alpha * step, q3, q2, sigma_floor);
      try {
        cand = evaluate_state(design, theta_c, q3, q2);
      } catch (const std::exception&) {
        continue;
      }
      if (cand.m2ll <= st.m2ll + 1e-10) {
        accepted = true;
        break;
      }
    }
    ++iterations;
    if (!accepted) break;
    const double rel = std::abs(st.m2ll - cand.m2ll) / std::max(1.0, std::abs(cand.m2ll));
    st = std::move(cand);
    if (rel < opts.tol_ll) {
      converged = true;
      break;
    }
  }

  // Phase 2: polish in the factor parameterization (omega = L L', sigma2 =
  // exp(2 s)). The cone constraint is exact here, so boundary optima that
  // projected scoring can stall short of are reached.
  if (q3 + q2 > 0) {
    Eigen::MatrixXd om3, om2;
    double s2;
    detail::unpack_theta(st.theta, q3, q2, om3, om2, s2);
    const double jitter = 1e-8 * s2;
    Eigen::VectorXd phi = pack_factor(jittered_chol(om3, jitter), jittered_chol(om2, jitter), s2);
    Workstate stf = evaluate_state(design, theta_of_factor(phi, q3, q2), q3, q2);
    if (stf.m2ll <= st.m2ll + 1e-8) {
      int polish_iter = 0;
      const int polish_cap = std::max(opts.max_iter, 50);
      while (polish_iter < polish_cap) {
        Eigen::MatrixXd om3c, om2c;
        double s2c;
        detail::unpack_theta(stf.theta, q3, q2, om3c, om2c, s2c);
        const Eigen::VectorXd g = detail::score_theta(stf.ev, stf.beta, om3c, om2c, s2c);
        const Eigen::MatrixXd t = detail::info_theta(stf.ev, om3c, om2c, s2c);
        const Eigen::MatrixXd j = factor_jacobian(phi, q3, q2);
        const Eigen::VectorXd g_phi = j.transpose() * g;
        Eigen::MatrixXd t_phi = j.transpose() * t * j;
        t_phi.diagonal().array() += 1e-10 * std::max(t_phi.diagonal().maxCoeff(), 1.0);
        const Eigen::VectorXd step = solve_with_ridge(t_phi, -g_phi);

        bool accepted = false;
        Eigen::VectorXd phi_c;
        Workstate cand;
        for (double alpha = 1.0; alpha >= 1e-10; alpha *= 0.5) {
          phi_c = phi + alpha * step;
          try {
            cand = evaluate_state(design, theta_of_factor(phi_c, q3, q2), q3, q2);
          } catch (const std::exception&) {
            continue;
          }
          if (cand.m2ll <= stf.m2ll + 1e-10) {
            accepted = true;
            break;
          }
        }
        ++polish_iter;
        ++iterations;
        if (!accepted) break;
        const double rel =
            std::abs(stf.m2ll - cand.m2ll) / std::max(1.0, std::abs(cand.m2ll));
        stf = std::move(cand);
        phi = phi_c;
        if (rel < opts.tol_ll) break;
      }
      if (stf.m2ll <= st.m2ll + 1e-10) {
        converged = converged || polish_iter > 0;
        st = std::move(stf);
      }
    }
  }

  // Assemble the result at the final point.
  FitResult out;
  for (Term t : spec.fixed_terms) out.fixed_names.push_back(to_string(t));
  for (Term t : spec.random_la) out.la_names.push_back(to_string(t));
  for (Term t : spec.random_school) out.school_names.push_back(to_string(t));
  detail::unpack_theta(st.theta, q3, q2, out.omega_la, out.omega_school, out.sigma2_e);
  out.beta = st.beta;
  out.minus2ll = st.m2ll;
  out.iterations = iterations;
  out.converged = converged;
  out.n_pupils = design.n();
  out.n_schools = design.n_schools;
  out.n_las = static_cast<int>(design.las.size());

  {
    Eigen::LLT<Eigen::MatrixXd> llt(st.ev.xtvx);
    if (llt.info() != Eigen::Success) throw std::runtime_error("collinear fixed effects");
    const Eigen::MatrixXd cov_beta =
        llt.solve(Eigen::MatrixXd::Identity(p, p));
    out.se_beta = cov_beta.diagonal().cwiseMax(0.0).cwiseSqrt();
  }
  {
    // component covariance = 2 T^-1 (inverse expected information of the
    // log-likelihood)
    const Eigen::MatrixXd t = detail::info_theta(st.ev, out.omega_la, out.omega_school,
                                                 out.sigma2_e);
    Eigen::MatrixXd ti;
    try {
      Eigen::MatrixXd id = Eigen::MatrixXd::Identity(lay.size(), lay.size());
      Eigen::MatrixXd rid = t;
      rid.diagonal().array() += 1e-12 * std::max(t.diagonal().maxCoeff(), 1.0);
      ti = Eigen::LDLT<Eigen::MatrixXd>(rid).solve(id);
    } catch (const std::exception&) {
      ti = Eigen::MatrixXd::Constant(lay.size(), lay.size(),
                                     std::numeric_limits<double>::quiet_NaN());
    }
    auto se_at = [&](int idx) { return std::sqrt(std::max(2.0 * ti(idx, idx), 0.0)); };
    out.se_omega_la.resize(q3, q3);
    for (int a = 0; a < q3; ++a)
      for (int b = 0; b <= a; ++b)
        out.se_omega_la(a, b) = out.se_omega_la(b, a) = se_at(ThetaLayout::position_of(a, b));
    out.se_omega_school.resize(q2, q2);
    for (int a = 0; a < q2; ++a)
      for (int b = 0; b <= a; ++b)
        out.se_omega_school(a, b) = out.se_omega_school(b, a) =
            se_at(lay.n_la() + ThetaLayout::position_of(a, b));
    out.se_sigma2_e = se_at(lay.sigma_index());
  }

  auto flag_boundary = [&](const Eigen::MatrixXd& om, const std::string& level,
                           const std::vector<std::string>& names) {
    if (om.size() == 0) return;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(om, Eigen::EigenvaluesOnly);
    const double top = es.eigenvalues().maxCoeff();
    if (top <= 0.0) {
      out.boundary_flags.push_back("omega_" + level);
      return;
    }
    if (es.eigenvalues().minCoeff() <= 1e-7 * top)
      out.boundary_flags.push_back("omega_" + level);
    for (int a = 0; a < om.rows(); ++a)
      if (om(a, a) <= 1e-10 * top)
        out.boundary_flags.push_back(omega_entry_name(level, names, a, a));
  };
  flag_boundary(out.omega_la, "la", out.la_names);
  flag_boundary(out.omega_school, "school", out.school_names);
  if (out.sigma2_e <= sigma_floor * (1.0 + 1e-12))
    out.boundary_flags.push_back("sigma2_e");
  return out;
}

double loglik(const DesignMatrices& design, const ModelSpec& spec, const ModelParams& params) {
  if (params.beta.size() != design.p() || spec.p() != design.p())
    throw std::invalid_argument("beta length does not match design");
  const BlockEvaluation ev =
      detail::evaluate_blocks(design, params.omega_la, params.omega_school, params.sigma2);
  return detail::minus2ll(ev, params.beta);
}

Eigen::VectorXd loglik_gradient(const DesignMatrices& design, const ModelSpec& spec,
                                const ModelParams& params) {
  if (params.beta.size() != design.p() || spec.p() != design.p())
    throw std::invalid_argument("beta length does not match design");
  const BlockEvaluation ev =
      detail::evaluate_blocks(design, params.omega_la, params.omega_school, params.sigma2);
  const ThetaLayout lay{design.q_la(), design.q_school()};
  Eigen::VectorXd g(design.p() + lay.size());
  g.head(design.p()) = -2.0 * (ev.xtvy - ev.xtvx * params.beta);
  g.tail(lay.size()) =
      detail::score_theta(ev, params.beta, params.omega_la, params.omega_school, params.sigma2);
  return g;
}

double score_check(const DesignMatrices& design, const ModelSpec& spec,
                   const ModelParams& params) {
  const Eigen::VectorXd analytic = loglik_gradient(design, spec, params);
  const int p = design.p();
  const ThetaLayout lay{design.q_la(), design.q_school()};
  const double cbrt_eps = std::cbrt(std::numeric_limits<double>::epsilon());

  auto eval_at = [&](const ModelParams& mp) { return loglik(design, spec, mp); };
  double worst = 0.0;
  for (int i = 0; i < p + lay.size(); ++i) {
    ModelParams hi = params, lo = params;
    double scale = 1.0;
    if (i < p) {
      scale = std::max(1.0, std::abs(params.beta[i]));
      const double h = cbrt_eps * scale;
      hi.beta[i] += h;
      lo.beta[i] -= h;
    } else {
      const int k = i - p;
      auto bump = [&](ModelParams& mp, double h) {
        if (k < lay.n_la()) {
          const auto [a, b] = ThetaLayout::pair_at(k);
          mp.omega_la(a, b) += h;
          if (a != b) mp.omega_la(b, a) += h;
        } else if (k < lay.n_la() + lay.n_school()) {
          const auto [a, b] = ThetaLayout::pair_at(k - lay.n_la());
          mp.omega_school(a, b) += h;
          if (a != b) mp.omega_school(b, a) += h;
        } else {
          mp.sigma2 += h;
        }
      };
      double cur = 0.0;
      if (k < lay.n_la()) {
        const auto [a, b] = ThetaLayout::pair_at(k);
        cur = params.omega_la(a, b);
      } else if (k < lay.n_la() + lay.n_school()) {
        const auto [a, b] = ThetaLayout::pair_at(k - lay.n_la());
        cur = params.omega_school(a, b);
      } else {
        cur = params.sigma2;
      }
      scale = std::max(1.0, std::abs(cur));
      bump(hi, cbrt_eps * scale);
      bump(lo, -cbrt_eps * scale);
    }
    const double h = cbrt_eps * scale;
    const double fd = (eval_at(hi) - eval_at(lo)) / (2.0 * h);
    const double err =
        std::abs(analytic[i] - fd) / std::max({1.0, std::abs(analytic[i]), std::abs(fd)});
    worst = std::max(worst, err);
  }
  return worst;
}

namespace {
nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from(const nlohmann::json& j) {
  const auto r = j.size();
  if (r == 0) return Eigen::MatrixXd(0, 0);
  Eigen::MatrixXd m(r, j[0].size());
  for (std::size_t a = 0; a < r; ++a)
    for (std::size_t b = 0; b < j[a].size(); ++b) m(a, b) = j[a][b];
  return m;
}
}  // namespace

std::string FitResult::to_json() const {
  nlohmann::json j;
  j["n"] = {{"pupils", n_pupils}, {"schools", n_schools}, {"las", n_las}};
  j["fixed"] = nlohmann::json::array();
  for (std::size_t i = 0; i < fixed_names.size(); ++i)
    j["fixed"].push_back(
        {{"term", fixed_names[i]}, {"estimate", beta[i]}, {"se", se_beta[i]}});
  j["random"]["la"] = {{"terms", la_names},
                       {"covariance", matrix_json(omega_la)},
                       {"se", matrix_json(se_omega_la)}};
  j["random"]["school"] = {{"terms", school_names},
                           {"covariance", matrix_json(omega_school)},
                           {"se", matrix_json(se_omega_school)}};
  j["random"]["pupil"] = {{"variance", sigma2_e}, {"se", se_sigma2_e}};
  j["minus2ll"] = minus2ll;
  j["iterations"] = iterations;
  j["converged"] = converged;
  j["boundary_flags"] = boundary_flags;
  return j.dump(2);
}

FitResult FitResult::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  FitResult r;
  r.n_pupils = j.at("n").at("pupils");
  r.n_schools = j.at("n").at("schools");
  r.n_las = j.at("n").at("las");
  const auto& fixed = j.at("fixed");
  r.beta.resize(fixed.size());
  r.se_beta.resize(fixed.size());
  for (std::size_t i = 0; i < fixed.size(); ++i) {
    r.fixed_names.push_back(fixed[i].at("term"));
    r.beta[i] = fixed[i].at("estimate");
    r.se_beta[i] = fixed[i].at("se");
  }
  const auto& la = j.at("random").at("la");
  r.la_names = la.at("terms").get<std::vector<std::string>>();
  r.omega_la = matrix_from(la.at("covariance"));
  r.se_omega_la = matrix_from(la.at("se"));
  const auto& school = j.at("random").at("school");
  r.school_names = school.at("terms").get<std::vector<std::string>>();
  r.omega_school = matrix_from(school.at("covariance"));
  r.se_omega_school = matrix_from(school.at("se"));
  r.sigma2_e = j.at("random").at("pupil").at("variance");
  r.se_sigma2_e = j.at("random").at("pupil").at("se");
  r.minus2ll = j.at("minus2ll");
  r.iterations = j.at("iterations");
  r.converged = j.at("converged");
  r.boundary_flags = j.at("boundary_flags").get<std::vector<std::string>>();
  return r;
}

}  // namespace edscreen
