#include "edscreen/model_spec.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace edscreen {

namespace {
const std::unordered_map<std::string, Term>& term_names() {
  static const std::unordered_map<std::string, Term> m = {
      {"intercept", Term::intercept},
      {"ks2c", Term::ks2c},
      {"ks2c_sq", Term::ks2c_sq},
      {"girl", Term::girl},
      {"eth_black", Term::eth_black},
      {"eth_asian", Term::eth_asian},
      {"eth_other", Term::eth_other},
      {"eal", Term::eal},
      {"idaci_pupil", Term::idaci_pupil},
      {"fsm", Term::fsm},
      {"sen_support", Term::sen_support},
      {"sen_statement", Term::sen_statement},
      {"adm_grammar", Term::adm_grammar},
      {"adm_secondary_modern", Term::adm_secondary_modern},
      {"idaci_school", Term::idaci_school},
      {"school_boys", Term::school_boys},
      {"school_girls", Term::school_girls},
      {"den_cofe", Term::den_cofe},
      {"den_rc", Term::den_rc},
      {"den_other_christian", Term::den_other_christian},
      {"den_jewish", Term::den_jewish},
      {"den_muslim", Term::den_muslim},
      {"den_sikh", Term::den_sikh},
  };
  return m;
}
}  // namespace

std::string to_string(Term t) {
  for (const auto& [name, term] : term_names())
    if (term == t) return name;
  throw std::logic_error("unnamed term");
}

Term term_from_string(const std::string& s) {
  auto it = term_names().find(s);
  if (it == term_names().end()) throw std::invalid_argument("unknown model term: '" + s + "'");
  return it->second;
}

std::string to_string(Level l) { return l == Level::la ? "la" : "school"; }

Level level_from_string(const std::string& s) {
  if (s == "la") return Level::la;
  if (s == "school") return Level::school;
  throw std::invalid_argument("unknown level: '" + s + "'");
}

void ModelSpec::validate() const {
  if (fixed_terms.empty()) throw std::invalid_argument("model spec: no fixed terms");
  auto contains = [&](Term t) {
    return std::find(fixed_terms.begin(), fixed_terms.end(), t) != fixed_terms.end();
  };
  for (std::size_t i = 0; i < fixed_terms.size(); ++i)
    for (std::size_t j = i + 1; j < fixed_terms.size(); ++j)
      if (fixed_terms[i] == fixed_terms[j])
        throw std::invalid_argument("model spec: duplicate fixed term " +
                                    to_string(fixed_terms[i]));
  for (const auto* block : {&random_la, &random_school}) {
    if (block->empty()) continue;
    if ((*block)[0] != Term::intercept)
      throw std::invalid_argument("model spec: random block must start with intercept");
    for (Term t : *block)
      if (!contains(t))
        throw std::invalid_argument("model spec: random-block term " + to_string(t) +
                                    " is not a fixed term");
  }
}

std::string ModelSpec::to_json() const {
  nlohmann::json j;
  j["fixed_terms"] = nlohmann::json::array();
  for (Term t : fixed_terms) j["fixed_terms"].push_back(to_string(t));
  j["random_blocks"]["la"] = nlohmann::json::array();
  for (Term t : random_la) j["random_blocks"]["la"].push_back(to_string(t));
  j["random_blocks"]["school"] = nlohmann::json::array();
  for (Term t : random_school) j["random_blocks"]["school"].push_back(to_string(t));
  return j.dump(2);
}

ModelSpec ModelSpec::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ModelSpec spec;
  for (const auto& t : j.at("fixed_terms")) spec.fixed_terms.push_back(term_from_string(t));
  if (j.contains("random_blocks")) {
    const auto& rb = j["random_blocks"];
    if (rb.contains("la"))
      for (const auto& t : rb["la"]) spec.random_la.push_back(term_from_string(t));
    if (rb.contains("school"))
      for (const auto& t : rb["school"]) spec.random_school.push_back(term_from_string(t));
  }
  spec.validate();
  return spec;
}

std::vector<Term> ModelSpec::full_fixed_terms() {
  return {Term::intercept,     Term::ks2c,          Term::ks2c_sq,
          Term::girl,          Term::eth_black,     Term::eth_asian,
          Term::eth_other,     Term::eal,           Term::idaci_pupil,
          Term::fsm,           Term::sen_support,   Term::sen_statement,
          Term::adm_grammar,   Term::adm_secondary_modern,
          Term::idaci_school,  Term::school_boys,   Term::school_girls,
          Term::den_cofe,      Term::den_rc,        Term::den_other_christian,
          Term::den_jewish,    Term::den_muslim,    Term::den_sikh};
}

ModelSpec ModelSpec::preset(const std::string& name) {
  ModelSpec spec;
  spec.fixed_terms = full_fixed_terms();
  if (name == "table1" || name == "table2") {
    spec.random_la = {Term::intercept};
    spec.random_school = {Term::intercept};
  } else if (name == "table3" || name == "table4") {
    spec.random_la = {Term::intercept, Term::ks2c};
    spec.random_school = {Term::intercept, Term::ks2c, Term::fsm, Term::sen_statement};
  } else {
    throw std::invalid_argument("unknown model preset: '" + name + "'");
  }
  spec.validate();
  return spec;
}

}  // namespace edscreen
