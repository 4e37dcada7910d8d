#pragma once

#include <string>
#include <vector>

namespace edscreen {

/// Fixed-effect terms supported by the design builder. The set covers the
/// covariate families of the published tables; there is no general formula
/// language.
enum class Term {
  intercept,
  ks2c,     // KS2 score centred at 4
  ks2c_sq,  // centred KS2 squared
  girl,
  eth_black,
  eth_asian,
  eth_other,
  eal,
  idaci_pupil,
  fsm,
  sen_support,
  sen_statement,
  adm_grammar,
  adm_secondary_modern,
  idaci_school,
  school_boys,
  school_girls,
  den_cofe,
  den_rc,
  den_other_christian,
  den_jewish,
  den_muslim,
  den_sikh,
};

std::string to_string(Term t);
Term term_from_string(const std::string& s);

enum class Level { la, school };
std::string to_string(Level l);
Level level_from_string(const std::string& s);

/// Declarative model description: ordered fixed terms plus the per-level
/// random-coefficient blocks (intercept first). Residual level is the pupil.
struct ModelSpec {
  std::vector<Term> fixed_terms;
  std::vector<Term> random_la;      // may be empty
  std::vector<Term> random_school;  // may be empty

  int p() const { return static_cast<int>(fixed_terms.size()); }
  int q_la() const { return static_cast<int>(random_la.size()); }
  int q_school() const { return static_cast<int>(random_school.size()); }

  /// Checks ordering/containment rules; throws std::invalid_argument.
  void validate() const;

  std::string to_json() const;
  static ModelSpec from_json(const std::string& text);

  /// The 23-term fixed part of the published tables.
  static std::vector<Term> full_fixed_terms();

  /// table1/table2: random intercepts at LA and school.
  /// table3/table4: LA {intercept, ks2c}, school {intercept, ks2c, fsm,
  /// sen_statement}.
  static ModelSpec preset(const std::string& name);
};

}  // namespace edscreen
