#include "edscreen/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include <Eigen/Dense>
#include <json.hpp>

#include "edscreen/design.hpp"
#include "edscreen/rng.hpp"

namespace edscreen {

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }
double inv_logit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Factor F with F F' = omega, valid for any PSD matrix (eigendecomposition
/// with negative eigenvalues clamped to zero).
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& omega) {
  if (omega.size() == 0) return omega;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(omega);
  Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * lam.cwiseSqrt().asDiagonal();
}

void check_psd(const Eigen::MatrixXd& m, const std::string& name) {
  if (m.rows() != m.cols()) throw std::invalid_argument(name + " is not square");
  if (m.size() == 0) return;
  if (!m.isApprox(m.transpose(), 1e-12)) throw std::invalid_argument(name + " is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const double floor = -1e-10 * std::max(1.0, m.cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() < floor)
    throw std::invalid_argument(name + " is not positive semi-definite");
}

std::string padded_id(const char* prefix, int value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*d", prefix, width, value);
  return buf;
}

int draw_size(const SizeDistribution& d, RngStream& rng) {
  int v = 0;
  if (d.kind == "poisson") {
    v = rng.poisson(d.mean);
  } else if (d.kind == "lognormal") {
    const double mu = std::log(d.mean) - 0.5 * d.sigma * d.sigma;
    v = static_cast<int>(std::lround(rng.lognormal(mu, d.sigma)));
  } else if (d.kind == "fixed") {
    v = static_cast<int>(std::lround(d.mean));
  } else {
    throw std::invalid_argument("unknown size distribution kind: '" + d.kind + "'");
  }
  return std::max(v, d.min);
}

nlohmann::json size_to_json(const SizeDistribution& d) {
  return {{"kind", d.kind}, {"mean", d.mean}, {"sigma", d.sigma}, {"min", d.min}};
}

SizeDistribution size_from_json(const nlohmann::json& j) {
  SizeDistribution d;
  d.kind = j.at("kind");
  d.mean = j.at("mean");
  d.sigma = j.value("sigma", 0.35);
  d.min = j.value("min", 1);
  return d;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto r = j.size();
  if (r == 0) return Eigen::MatrixXd(0, 0);
  const auto c = j[0].size();
  Eigen::MatrixXd m(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    if (j[i].size() != c) throw std::invalid_argument("ragged matrix in config");
    for (std::size_t k = 0; k < c; ++k) m(i, k) = j[i][k];
  }
  return m;
}

}  // namespace

void ScenarioConfig::validate() const {
  if (n_las < 1) throw std::invalid_argument("n_las < 1");
  model.validate();
  if (beta.size() != model.p())
    throw std::invalid_argument("beta length does not match fixed terms");
  if (omega_la.rows() != model.q_la())
    throw std::invalid_argument("omega_la dimension does not match LA random block");
  if (omega_school.rows() != model.q_school())
    throw std::invalid_argument("omega_school dimension does not match school random block");
  check_psd(omega_la, "omega_la");
  check_psd(omega_school, "omega_school");
  if (sigma2_e < 0.0) throw std::invalid_argument("sigma2_e < 0");
  if (missing_ethnicity_rate < 0.0 || missing_ethnicity_rate > 1.0)
    throw std::invalid_argument("missing_ethnicity_rate outside [0,1]");
  auto check_probs = [](const std::vector<double>& p, std::size_t n, const char* what) {
    if (p.size() != n) throw std::invalid_argument(std::string(what) + ": wrong arity");
    double s = 0;
    for (double v : p) {
      if (v < 0) throw std::invalid_argument(std::string(what) + ": negative probability");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-9)
      throw std::invalid_argument(std::string(what) + ": probabilities do not sum to 1");
  };
  check_probs(covariates.ethnicity_probs, 4, "ethnicity_probs");
  check_probs(covariates.admissions_probs, 3, "admissions_probs");
  check_probs(covariates.gender_mix_probs, 3, "gender_mix_probs");
  check_probs(covariates.denomination_probs, 7, "denomination_probs");
  for (const auto& pe : planted_effects) {
    if (pe.la_index < 0 || pe.la_index >= n_las)
      throw std::invalid_argument("planted effect references LA outside 0..n_las-1");
    if (pe.coef < 0 || pe.coef >= model.q_la())
      throw std::invalid_argument("planted effect references coefficient outside LA block");
  }
  if (tiny_la_pupils && *tiny_la_pupils < 1)
    throw std::invalid_argument("tiny_la_pupils < 1");
}

std::string ScenarioConfig::to_json() const {
  nlohmann::json j;
  j["n_las"] = n_las;
  j["schools_per_la"] = size_to_json(schools_per_la);
  j["pupils_per_school"] = size_to_json(pupils_per_school);
  j["model"] = nlohmann::json::parse(model.to_json());
  j["beta"] = std::vector<double>(beta.data(), beta.data() + beta.size());
  j["omega_la"] = matrix_to_json(omega_la);
  j["omega_school"] = matrix_to_json(omega_school);
  j["sigma2_e"] = sigma2_e;
  const auto& c = covariates;
  j["covariates"] = {{"p_girl", c.p_girl},
                     {"ethnicity_probs", c.ethnicity_probs},
                     {"school_minority_logit_sd", c.school_minority_logit_sd},
                     {"p_eal_given_white", c.p_eal_given_white},
                     {"p_eal_given_nonwhite", c.p_eal_given_nonwhite},
                     {"p_fsm", c.p_fsm},
                     {"school_fsm_logit_sd", c.school_fsm_logit_sd},
                     {"p_sen_support", c.p_sen_support},
                     {"p_sen_statement", c.p_sen_statement},
                     {"idaci_school_a", c.idaci_school_a},
                     {"idaci_school_b", c.idaci_school_b},
                     {"la_idaci_logit_sd", c.la_idaci_logit_sd},
                     {"idaci_pupil_concentration", c.idaci_pupil_concentration},
                     {"ks2_group_mean", c.ks2_group_mean},
                     {"ks2_group_sd", c.ks2_group_sd},
                     {"ks2_school_tilt_sd", c.ks2_school_tilt_sd},
                     {"ks2_la_tilt_sd", c.ks2_la_tilt_sd},
                     {"ks2_points_per_group", c.ks2_points_per_group},
                     {"ks2_group_center", c.ks2_group_center},
                     {"admissions_probs", c.admissions_probs},
                     {"gender_mix_probs", c.gender_mix_probs},
                     {"denomination_probs", c.denomination_probs}};
  j["missing_ethnicity_rate"] = missing_ethnicity_rate;
  j["planted_effects"] = nlohmann::json::array();
  for (const auto& pe : planted_effects)
    j["planted_effects"].push_back(
        {{"la_index", pe.la_index}, {"coef", pe.coef}, {"offset", pe.offset}});
  if (tiny_la_pupils) j["tiny_la_pupils"] = *tiny_la_pupils;
  j["outcome_scale_offset"] = outcome_scale_offset;
  j["outcome_scale_factor"] = outcome_scale_factor;
  j["seed"] = seed;
  return j.dump(2);
}

ScenarioConfig ScenarioConfig::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ScenarioConfig cfg;
  cfg.n_las = j.at("n_las");
  cfg.schools_per_la = size_from_json(j.at("schools_per_la"));
  cfg.pupils_per_school = size_from_json(j.at("pupils_per_school"));
  cfg.model = ModelSpec::from_json(j.at("model").dump());
  const auto& b = j.at("beta");
  cfg.beta.resize(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) cfg.beta[i] = b[i];
  cfg.omega_la = matrix_from_json(j.at("omega_la"));
  cfg.omega_school = matrix_from_json(j.at("omega_school"));
  cfg.sigma2_e = j.at("sigma2_e");
  if (j.contains("covariates")) {
    const auto& cj = j["covariates"];
    auto& c = cfg.covariates;
    c.p_girl = cj.value("p_girl", c.p_girl);
    if (cj.contains("ethnicity_probs"))
      c.ethnicity_probs = cj["ethnicity_probs"].get<std::vector<double>>();
    c.school_minority_logit_sd = cj.value("school_minority_logit_sd", c.school_minority_logit_sd);
    c.p_eal_given_white = cj.value("p_eal_given_white", c.p_eal_given_white);
    c.p_eal_given_nonwhite = cj.value("p_eal_given_nonwhite", c.p_eal_given_nonwhite);
    c.p_fsm = cj.value("p_fsm", c.p_fsm);
    c.school_fsm_logit_sd = cj.value("school_fsm_logit_sd", c.school_fsm_logit_sd);
    c.p_sen_support = cj.value("p_sen_support", c.p_sen_support);
    c.p_sen_statement = cj.value("p_sen_statement", c.p_sen_statement);
    c.idaci_school_a = cj.value("idaci_school_a", c.idaci_school_a);
    c.idaci_school_b = cj.value("idaci_school_b", c.idaci_school_b);
    c.la_idaci_logit_sd = cj.value("la_idaci_logit_sd", c.la_idaci_logit_sd);
    c.idaci_pupil_concentration =
        cj.value("idaci_pupil_concentration", c.idaci_pupil_concentration);
    c.ks2_group_mean = cj.value("ks2_group_mean", c.ks2_group_mean);
    c.ks2_group_sd = cj.value("ks2_group_sd", c.ks2_group_sd);
    c.ks2_school_tilt_sd = cj.value("ks2_school_tilt_sd", c.ks2_school_tilt_sd);
    c.ks2_la_tilt_sd = cj.value("ks2_la_tilt_sd", c.ks2_la_tilt_sd);
    c.ks2_points_per_group = cj.value("ks2_points_per_group", c.ks2_points_per_group);
    c.ks2_group_center = cj.value("ks2_group_center", c.ks2_group_center);
    if (cj.contains("admissions_probs"))
      c.admissions_probs = cj["admissions_probs"].get<std::vector<double>>();
    if (cj.contains("gender_mix_probs"))
      c.gender_mix_probs = cj["gender_mix_probs"].get<std::vector<double>>();
    if (cj.contains("denomination_probs"))
      c.denomination_probs = cj["denomination_probs"].get<std::vector<double>>();
  }
  cfg.missing_ethnicity_rate = j.value("missing_ethnicity_rate", 0.01);
  if (j.contains("planted_effects"))
    for (const auto& pj : j["planted_effects"])
      cfg.planted_effects.push_back(
          {pj.at("la_index"), pj.value("coef", 0), pj.at("offset")});
  if (j.contains("tiny_la_pupils")) cfg.tiny_la_pupils = j["tiny_la_pupils"].get<int>();
  cfg.outcome_scale_offset = j.value("outcome_scale_offset", 45.0);
  cfg.outcome_scale_factor = j.value("outcome_scale_factor", 15.0);
  cfg.seed = j.at("seed");
  cfg.validate();
  return cfg;
}

ScenarioConfig scenario_preset(const std::string& name) {
  ScenarioConfig cfg;
  auto table2_beta = [] {
    Eigen::VectorXd b(23);
    b << -0.617, 0.796, 0.247, 0.160, 0.119, 0.111, 0.086, 0.245, -0.543, -0.219, -0.239,
        -0.346, 0.313, -0.030, -0.193, 0.080, 0.044, 0.045, 0.069, 0.061, 0.248, 0.242, -0.031;
    return b;
  };
  auto table3_beta = [] {
    Eigen::VectorXd b(23);
    b << -0.558, 0.787, 0.257, 0.160, 0.127, 0.112, 0.109, 0.255, -0.543, -0.233, -0.247,
        -0.376, 0.301, -0.028, -0.129, 0.042, 0.020, 0.016, 0.071, 0.010, 0.392, 0.296, -0.096;
    return b;
  };
  if (name == "paper_full" || name == "null_la" || name == "planted") {
    cfg.model = ModelSpec::preset("table2");
    cfg.beta = table2_beta();
    cfg.omega_la = Eigen::MatrixXd::Constant(1, 1, 0.004);
    cfg.omega_school = Eigen::MatrixXd::Constant(1, 1, 0.032);
    cfg.sigma2_e = 0.327;
    if (name == "null_la") cfg.omega_la(0, 0) = 0.0;
    if (name == "planted") {
      // +/-0.15 SD on 10 LAs spread through the index range
      for (int i = 0; i < 10; ++i)
        cfg.planted_effects.push_back({i * 15, 0, i % 2 == 0 ? 0.15 : -0.15});
    }
  } else if (name == "paper_random_slopes") {
    cfg.model = ModelSpec::preset("table3");
    cfg.beta = table3_beta();
    cfg.omega_la.resize(2, 2);
    cfg.omega_la << 0.004, -0.001, -0.001, 0.002;
    cfg.omega_school.resize(4, 4);
    // order: intercept, ks2c, fsm, sen_statement
    cfg.omega_school << 0.018, 0.000, 0.004, 0.001,
                        0.000, 0.005, 0.001, 0.003,
                        0.004, 0.001, 0.014, -0.002,
                        0.001, 0.003, -0.002, 0.171;
    cfg.sigma2_e = 0.322;
  } else {
    throw std::invalid_argument("unknown scenario preset: '" + name + "'");
  }
  cfg.validate();
  return cfg;
}

Population generate_population(const ScenarioConfig& config) {
  config.validate();
  const auto& cov = config.covariates;
  const RngStream root(config.seed);
  const Eigen::MatrixXd f_la = psd_factor(config.omega_la);
  const Eigen::MatrixXd f_school = psd_factor(config.omega_school);
  const double sigma_e = std::sqrt(config.sigma2_e);
  const int q3 = config.model.q_la();
  const int q2 = config.model.q_school();
  const double idaci_mean = cov.idaci_school_a / (cov.idaci_school_a + cov.idaci_school_b);
  const double idaci_kappa = cov.idaci_school_a + cov.idaci_school_b;

  Population pop;
  int school_counter = 0;
  int pupil_counter = 0;

  for (int la = 0; la < config.n_las; ++la) {
    const std::string la_id = padded_id("LA", la + 1, 3);
    RngStream la_rng = root.substream("la-structure").substream(la);
    const bool tiny = config.tiny_la_pupils && la == config.n_las - 1;
    const int n_schools = tiny ? 1 : draw_size(config.schools_per_la, la_rng);
    const double la_idaci_tilt = la_rng.normal(0.0, cov.la_idaci_logit_sd);
    const double la_ks2_tilt = la_rng.normal(0.0, cov.ks2_la_tilt_sd);

    Eigen::VectorXd u_la = Eigen::VectorXd::Zero(q3);
    if (q3 > 0) {
      Eigen::VectorXd z(q3);
      for (int j = 0; j < q3; ++j) z[j] = la_rng.normal();
      u_la = f_la * z;
    }
    for (const auto& pe : config.planted_effects)
      if (pe.la_index == la) u_la[pe.coef] += pe.offset;
    pop.truth.la.push_back({la_id, u_la});

    for (int sch = 0; sch < n_schools; ++sch) {
      const std::string school_id = padded_id("S", ++school_counter, 5);
      RngStream school_rng = root.substream("school").substream(la, sch);
      const int n_pupils =
          tiny ? *config.tiny_la_pupils : draw_size(config.pupils_per_school, school_rng);

      SchoolRecord school;
      school.school_id = school_id;
      school.la_id = la_id;
      school.region = 1 + la % 9;
      school.admissions =
          static_cast<Admissions>(school_rng.categorical(cov.admissions_probs));
      school.gender_mix = static_cast<GenderMix>(school_rng.categorical(cov.gender_mix_probs));
      school.denomination =
          static_cast<Denomination>(school_rng.categorical(cov.denomination_probs));
      {
        const double m =
            inv_logit(logit(idaci_mean) + la_idaci_tilt + school_rng.normal(0.0, 0.3));
        school.idaci_school = school_rng.beta(idaci_kappa * m, idaci_kappa * (1.0 - m));
      }

      const double minority_tilt = school_rng.normal(0.0, cov.school_minority_logit_sd);
      const double fsm_tilt = school_rng.normal(0.0, cov.school_fsm_logit_sd);
      const double ks2_school_tilt = school_rng.normal(0.0, cov.ks2_school_tilt_sd);

      Eigen::VectorXd u_school = Eigen::VectorXd::Zero(q2);
      if (q2 > 0) {
        Eigen::VectorXd z(q2);
        for (int j = 0; j < q2; ++j) z[j] = school_rng.normal();
        u_school = f_school * z;
      }
      pop.truth.school.push_back({school_id, u_school});
      pop.schools.push_back(school);

      // school-tilted ethnicity mix: shift the non-White share on the logit
      // scale, keep the composition of the non-White part
      const double base_nonwhite = 1.0 - cov.ethnicity_probs[0];
      const double nonwhite =
          inv_logit(logit(std::clamp(base_nonwhite, 1e-9, 1.0 - 1e-9)) + minority_tilt);
      std::vector<double> eth_probs = {1.0 - nonwhite, 0.0, 0.0, 0.0};
      for (int e = 1; e < 4; ++e)
        eth_probs[e] = nonwhite * cov.ethnicity_probs[e] / std::max(base_nonwhite, 1e-12);
      const double p_fsm_school =
          inv_logit(logit(cov.p_fsm) + fsm_tilt + 1.5 * (school.idaci_school - idaci_mean));

      for (int pu = 0; pu < n_pupils; ++pu) {
        PupilRecord p;
        p.pupil_id = padded_id("P", ++pupil_counter, 7);
        p.la_id = la_id;
        p.school_id = school_id;
        if (school.gender_mix == GenderMix::boys)
          p.gender = Gender::boy;
        else if (school.gender_mix == GenderMix::girls)
          p.gender = Gender::girl;
        else
          p.gender = school_rng.bernoulli(cov.p_girl) ? Gender::girl : Gender::boy;
        const auto eth = static_cast<Ethnicity>(school_rng.categorical(eth_probs));
        p.ethnicity = eth;
        p.eal = school_rng.bernoulli(eth == Ethnicity::White ? cov.p_eal_given_white
                                                             : cov.p_eal_given_nonwhite);
        p.fsm = school_rng.bernoulli(p_fsm_school);
        p.sen = static_cast<Sen>(school_rng.categorical(std::vector<double>{
            1.0 - cov.p_sen_support - cov.p_sen_statement, cov.p_sen_support,
            cov.p_sen_statement}));
        {
          const double m = inv_logit(logit(std::clamp(school.idaci_school, 1e-6, 1.0 - 1e-6)));
          const double k = cov.idaci_pupil_concentration;
          p.idaci_pupil = school_rng.beta(k * m, k * (1.0 - m));
        }
        {
          const double g = school_rng.normal(
              cov.ks2_group_mean + ks2_school_tilt + la_ks2_tilt, cov.ks2_group_sd);
          p.ks2_group = std::clamp(static_cast<int>(std::lround(g)), 1, 34);
          p.ks2_score =
              4.0 + cov.ks2_points_per_group * (p.ks2_group - cov.ks2_group_center);
        }

        // outcome on the model scale, then mapped to raw points
        auto row = encode_fixed_row(p, school, config.model);
        double y = row->dot(config.beta);
        for (int j = 0; j < q3; ++j)
          y += term_value(p, school, config.model.random_la[j]) * u_la[j];
        for (int j = 0; j < q2; ++j)
          y += term_value(p, school, config.model.random_school[j]) * u_school[j];
        if (sigma_e > 0.0) y += school_rng.normal(0.0, sigma_e);
        p.attainment8_raw = config.outcome_scale_offset + config.outcome_scale_factor * y;

        if (config.missing_ethnicity_rate > 0.0 &&
            school_rng.bernoulli(config.missing_ethnicity_rate))
          p.ethnicity.reset();
        pop.pupils.push_back(std::move(p));
      }
    }
  }
  return pop;
}

Population inject_missingness(Population population, double rate, std::uint64_t seed) {
  if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("rate outside [0,1]");
  if (rate == 0.0) return population;
  RngStream rng = RngStream(seed).substream("inject-missingness");
  for (auto& p : population.pupils)
    if (rng.bernoulli(rate)) p.ethnicity.reset();
  return population;
}

}  // namespace edscreen
