#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "edscreen/design.hpp"
#include "edscreen/model_spec.hpp"

namespace edscreen {

/// Full parameter point of the 3-level model
///   y = X beta + Z3 u3 + Z2 u2 + e,
/// with u3 ~ N(0, omega_la) per LA, u2 ~ N(0, omega_school) per school and
/// e ~ N(0, sigma2 I).
struct ModelParams {
  Eigen::VectorXd beta;
  Eigen::MatrixXd omega_la;      // q3 x q3
  Eigen::MatrixXd omega_school;  // q2 x q2
  double sigma2 = 1.0;
};

struct FitOptions {
  std::string method = "ml";  // REML reserved
  double tol_ll = 1e-8;       // relative -2LL change
  double tol_param = 1e-6;    // scaled parameter change
  int max_iter = 200;
  std::string variance_constraint = "clip_psd";
};

struct FitResult {
  std::vector<std::string> fixed_names;
  std::vector<std::string> la_names;      // random-block coefficient names
  std::vector<std::string> school_names;
  Eigen::VectorXd beta;
  Eigen::VectorXd se_beta;
  Eigen::MatrixXd omega_la;
  Eigen::MatrixXd omega_school;
  double sigma2_e = 0.0;
  Eigen::MatrixXd se_omega_la;      // elementwise SEs
  Eigen::MatrixXd se_omega_school;
  double se_sigma2_e = 0.0;
  double minus2ll = 0.0;
  int n_pupils = 0;
  int n_schools = 0;
  int n_las = 0;
  int iterations = 0;
  bool converged = false;
  std::vector<std::string> boundary_flags;
  /// -2LL after each accepted optimizer step (monotone non-increasing).
  std::vector<double> m2ll_trace;

  ModelParams params() const { return {beta, omega_la, omega_school, sigma2_e}; }
  std::string to_json() const;
  static FitResult from_json(const std::string& text);
};

/// Maximum-likelihood fit. Fisher scoring on the natural variance
/// parameters with PSD clipping, followed by a factor-space polish so
/// boundary optima are exact. -2LL is non-increasing across accepted
/// iterations by construction. Throws on collinear fixed effects and
/// pathological inputs; non-convergence within max_iter returns the best
/// iterate with converged = false.
FitResult fit(const DesignMatrices& design, const ModelSpec& spec, const FitOptions& opts = {});

/// Exact -2 log-likelihood at the given parameters, including the
/// n log(2 pi) constant. Throws on non-PSD covariance input.
double loglik(const DesignMatrices& design, const ModelSpec& spec, const ModelParams& params);

/// Analytic gradient of -2LL with respect to beta, vech(omega_la),
/// vech(omega_school) and sigma2, in that order (lower-triangle row order).
Eigen::VectorXd loglik_gradient(const DesignMatrices& design, const ModelSpec& spec,
                                const ModelParams& params);

/// Max relative disagreement between the analytic gradient and central
/// finite differences of loglik at an interior point.
double score_check(const DesignMatrices& design, const ModelSpec& spec,
                   const ModelParams& params);

}  // namespace edscreen
