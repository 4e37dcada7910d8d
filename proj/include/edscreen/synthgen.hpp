#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "edscreen/model_spec.hpp"
#include "edscreen/types.hpp"

namespace edscreen {

/// Integer cluster-size distribution.
struct SizeDistribution {
  std::string kind = "poisson";  // "poisson" | "lognormal" | "fixed"
  double mean = 0.0;
  double sigma = 0.35;  // lognormal shape
  int min = 1;
};

/// Covariate-model knobs. These are calibration settings of the generator,
/// not estimates of anything; they are fully exposed in the JSON config.
struct CovariateModel {
  double p_girl = 0.5;
  // White, Black, Asian, Other
  std::vector<double> ethnicity_probs = {0.75, 0.05, 0.10, 0.10};
  double school_minority_logit_sd = 0.8;  // school-level tilt of non-White share
  double p_eal_given_white = 0.05;
  double p_eal_given_nonwhite = 0.60;
  double p_fsm = 0.29;
  double school_fsm_logit_sd = 0.5;
  double p_sen_support = 0.12;
  double p_sen_statement = 0.04;
  // School IDACI ~ Beta(a,b) with an LA-level tilt; pupil IDACI concentrates
  // around the school value.
  double idaci_school_a = 2.0;
  double idaci_school_b = 5.0;
  double la_idaci_logit_sd = 0.4;
  double idaci_pupil_concentration = 8.0;
  // KS2 groups: discretized normal over 1..34 with school and LA tilts.
  double ks2_group_mean = 17.5;
  double ks2_group_sd = 5.5;
  double ks2_school_tilt_sd = 2.0;
  double ks2_la_tilt_sd = 1.0;
  // group -> score map: score = 4 + ks2_points_per_group * (group - ks2_group_center)
  double ks2_points_per_group = 0.135;
  double ks2_group_center = 17.5;
  // school categorical mixes
  std::vector<double> admissions_probs = {0.93, 0.05, 0.02};  // comp, grammar, sec-mod
  std::vector<double> gender_mix_probs = {0.90, 0.05, 0.05};  // mixed, boys, girls
  std::vector<double> denomination_probs = {0.62, 0.17, 0.13, 0.04, 0.015, 0.02, 0.005};
};

struct PlantedEffect {
  int la_index = 0;   // position in generation order
  int coef = 0;       // index into the LA random block (0 = intercept)
  double offset = 0;  // added to the realized effect, SD units of the outcome
};

/// Full description of a synthetic national population. The model (fixed
/// terms + random blocks) doubles as the data-generating process, so every
/// downstream estimate has known truth.
struct ScenarioConfig {
  int n_las = 151;
  SizeDistribution schools_per_la{.kind = "poisson", .mean = 20.0, .min = 3};
  SizeDistribution pupils_per_school{.kind = "lognormal", .mean = 162.0, .sigma = 0.35, .min = 10};
  ModelSpec model;            // fixed terms drive x'beta; random blocks drive u draws
  Eigen::VectorXd beta;       // length model.p()
  Eigen::MatrixXd omega_la;   // q3 x q3, PSD
  Eigen::MatrixXd omega_school;
  double sigma2_e = 0.327;
  CovariateModel covariates;
  double missing_ethnicity_rate = 0.01;
  std::vector<PlantedEffect> planted_effects;
  /// When set, the last of the n_las LAs consists of a single school with
  /// exactly this many pupils (the paper-scale small-LA case).
  std::optional<int> tiny_la_pupils;
  /// attainment8_raw = outcome_scale_offset + outcome_scale_factor * y_model
  double outcome_scale_offset = 45.0;
  double outcome_scale_factor = 15.0;
  std::uint64_t seed = 1;

  void validate() const;
  std::string to_json() const;
  static ScenarioConfig from_json(const std::string& text);
};

/// paper_full | paper_random_slopes | null_la | planted
ScenarioConfig scenario_preset(const std::string& name);

Population generate_population(const ScenarioConfig& config);

/// Marks ethnicity missing independently with probability `rate`.
Population inject_missingness(Population population, double rate, std::uint64_t seed);

}  // namespace edscreen
