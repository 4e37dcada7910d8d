#include "edscreen/types.hpp"

#include <stdexcept>
#include <unordered_set>

namespace edscreen {

namespace {
[[noreturn]] void bad_value(const std::string& what, const std::string& got) {
  throw std::invalid_argument("invalid " + what + ": '" + got + "'");
}
}  // namespace

std::string to_string(Gender g) { return g == Gender::boy ? "boy" : "girl"; }

std::string to_string(Ethnicity e) {
  switch (e) {
    case Ethnicity::White: return "White";
    case Ethnicity::Black: return "Black";
    case Ethnicity::Asian: return "Asian";
    case Ethnicity::Other: return "Other";
  }
  return "";
}

std::string to_string(Sen s) {
  switch (s) {
    case Sen::none: return "none";
    case Sen::support: return "support";
    case Sen::statement: return "statement";
  }
  return "";
}

std::string to_string(Admissions a) {
  switch (a) {
    case Admissions::comprehensive: return "comprehensive";
    case Admissions::grammar: return "grammar";
    case Admissions::secondary_modern: return "secondary_modern";
  }
  return "";
}

std::string to_string(GenderMix g) {
  switch (g) {
    case GenderMix::mixed: return "mixed";
    case GenderMix::boys: return "boys";
    case GenderMix::girls: return "girls";
  }
  return "";
}

std::string to_string(Denomination d) {
  switch (d) {
    case Denomination::none: return "none";
    case Denomination::CofE: return "CofE";
    case Denomination::RC: return "RC";
    case Denomination::other_christian: return "other_christian";
    case Denomination::jewish: return "jewish";
    case Denomination::muslim: return "muslim";
    case Denomination::sikh: return "sikh";
  }
  return "";
}

Gender gender_from_string(const std::string& s) {
  if (s == "boy") return Gender::boy;
  if (s == "girl") return Gender::girl;
  bad_value("gender", s);
}

Ethnicity ethnicity_from_string(const std::string& s) {
  if (s == "White") return Ethnicity::White;
  if (s == "Black") return Ethnicity::Black;
  if (s == "Asian") return Ethnicity::Asian;
  if (s == "Other") return Ethnicity::Other;
  bad_value("ethnicity", s);
}

Sen sen_from_string(const std::string& s) {
  if (s == "none") return Sen::none;
  if (s == "support") return Sen::support;
  if (s == "statement") return Sen::statement;
  bad_value("sen", s);
}

Admissions admissions_from_string(const std::string& s) {
  if (s == "comprehensive") return Admissions::comprehensive;
  if (s == "grammar") return Admissions::grammar;
  if (s == "secondary_modern") return Admissions::secondary_modern;
  bad_value("admissions", s);
}

GenderMix gender_mix_from_string(const std::string& s) {
  if (s == "mixed") return GenderMix::mixed;
  if (s == "boys") return GenderMix::boys;
  if (s == "girls") return GenderMix::girls;
  bad_value("gender_mix", s);
}

Denomination denomination_from_string(const std::string& s) {
  if (s == "none") return Denomination::none;
  if (s == "CofE") return Denomination::CofE;
  if (s == "RC") return Denomination::RC;
  if (s == "other_christian") return Denomination::other_christian;
  if (s == "jewish") return Denomination::jewish;
  if (s == "muslim") return Denomination::muslim;
  if (s == "sikh") return Denomination::sikh;
  bad_value("denomination", s);
}

void PupilRecord::validate() const {
  if (pupil_id.empty()) throw std::invalid_argument("pupil_id empty");
  if (la_id.empty() || school_id.empty())
    throw std::invalid_argument("pupil " + pupil_id + ": missing membership id");
  if (ks2_group < 1 || ks2_group > 34)
    throw std::invalid_argument("pupil " + pupil_id + ": ks2_group outside 1..34");
  if (!(idaci_pupil >= 0.0 && idaci_pupil <= 1.0))
    throw std::invalid_argument("pupil " + pupil_id + ": idaci_pupil outside [0,1]");
}

void SchoolRecord::validate() const {
  if (school_id.empty()) throw std::invalid_argument("school_id empty");
  if (la_id.empty()) throw std::invalid_argument("school " + school_id + ": missing la_id");
  if (!(idaci_school >= 0.0 && idaci_school <= 1.0))
    throw std::invalid_argument("school " + school_id + ": idaci_school outside [0,1]");
  if (region < 1 || region > 9)
    throw std::invalid_argument("school " + school_id + ": region outside 1..9");
}

std::size_t Population::n_las() const {
  std::unordered_set<std::string> ids;
  for (const auto& s : schools) ids.insert(s.la_id);
  return ids.size();
}

}  // namespace edscreen
