#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace edscreen {

enum class Gender { boy, girl };
enum class Ethnicity { White, Black, Asian, Other };
enum class Sen { none, support, statement };
enum class Admissions { comprehensive, grammar, secondary_modern };
enum class GenderMix { mixed, boys, girls };
enum class Denomination { none, CofE, RC, other_christian, jewish, muslim, sikh };

std::string to_string(Gender g);
std::string to_string(Ethnicity e);
std::string to_string(Sen s);
std::string to_string(Admissions a);
std::string to_string(GenderMix g);
std::string to_string(Denomination d);

Gender gender_from_string(const std::string& s);
Ethnicity ethnicity_from_string(const std::string& s);
Sen sen_from_string(const std::string& s);
Admissions admissions_from_string(const std::string& s);
GenderMix gender_mix_from_string(const std::string& s);
Denomination denomination_from_string(const std::string& s);

/// One pupil's outcome, prior attainment, demographics and membership.
/// `ethnicity` is empty when the record is missing ethnic status; such rows
/// are excluded listwise when a model design is built.
struct PupilRecord {
  std::string pupil_id;
  std::string la_id;
  std::string school_id;
  int ks2_group = 1;  // 1..34
  double ks2_score = 4.0;
  double attainment8_raw = 0.0;
  Gender gender = Gender::boy;
  std::optional<Ethnicity> ethnicity = Ethnicity::White;
  bool eal = false;
  bool fsm = false;
  Sen sen = Sen::none;
  double idaci_pupil = 0.0;  // in [0,1]

  void validate() const;  // throws std::invalid_argument on a bad field
};

struct SchoolRecord {
  std::string school_id;
  std::string la_id;
  Admissions admissions = Admissions::comprehensive;
  GenderMix gender_mix = GenderMix::mixed;
  Denomination denomination = Denomination::none;
  double idaci_school = 0.0;  // in [0,1]
  int region = 1;             // 1..9, metadata only

  void validate() const;
};

/// Realized random effects kept alongside a generated population so that
/// downstream estimates can be checked against known truth.
struct EffectTruth {
  std::string id;
  Eigen::VectorXd u;  // one entry per random-block coefficient
};

struct PopulationTruth {
  std::vector<EffectTruth> la;
  std::vector<EffectTruth> school;
};

struct Population {
  std::vector<SchoolRecord> schools;
  std::vector<PupilRecord> pupils;
  PopulationTruth truth;

  std::size_t n_las() const;
};

}  // namespace edscreen
