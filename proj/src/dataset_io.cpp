#include "edscreen/dataset_io.hpp"

#include <stdexcept>
#include <unordered_map>

#include "edscreen/csv.hpp"

namespace edscreen {

const std::vector<std::string> kPupilColumns = {
    "pupil_id", "la_id",  "school_id", "ks2_group", "ks2_score", "attainment8_raw",
    "gender",   "ethnicity", "eal",    "fsm",       "sen",       "idaci_pupil"};

const std::vector<std::string> kSchoolColumns = {
    "school_id", "la_id", "admissions", "gender_mix", "denomination", "idaci_school", "region"};

void write_pupils_csv(const std::string& path, const std::vector<PupilRecord>& pupils) {
  csv::Table t;
  t.header = kPupilColumns;
  t.rows.reserve(pupils.size());
  for (const auto& p : pupils) {
    t.rows.push_back({p.pupil_id, p.la_id, p.school_id, std::to_string(p.ks2_group),
                      csv::format_double(p.ks2_score), csv::format_double(p.attainment8_raw),
                      to_string(p.gender), p.ethnicity ? to_string(*p.ethnicity) : "",
                      p.eal ? "1" : "0", p.fsm ? "1" : "0", to_string(p.sen),
                      csv::format_double(p.idaci_pupil)});
  }
  csv::write_file(path, t);
}

void write_schools_csv(const std::string& path, const std::vector<SchoolRecord>& schools) {
  csv::Table t;
  t.header = kSchoolColumns;
  t.rows.reserve(schools.size());
  for (const auto& s : schools) {
    t.rows.push_back({s.school_id, s.la_id, to_string(s.admissions), to_string(s.gender_mix),
                      to_string(s.denomination), csv::format_double(s.idaci_school),
                      std::to_string(s.region)});
  }
  csv::write_file(path, t);
}

void write_truth_csv(const std::string& path, const PopulationTruth& truth,
                     const std::vector<std::string>& la_terms,
                     const std::vector<std::string>& school_terms) {
  csv::Table t;
  t.header = {"level", "id", "term", "value"};
  auto emit = [&t](const std::string& level, const std::vector<EffectTruth>& effects,
                   const std::vector<std::string>& terms) {
    for (const auto& e : effects) {
      if (static_cast<std::size_t>(e.u.size()) != terms.size())
        throw std::runtime_error("truth effect size does not match term list");
      for (Eigen::Index j = 0; j < e.u.size(); ++j)
        t.rows.push_back({level, e.id, terms[j], csv::format_double(e.u[j])});
    }
  };
  emit("la", truth.la, la_terms);
  emit("school", truth.school, school_terms);
  csv::write_file(path, t);
}

namespace {
double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("bad numeric value for " + what + ": '" + s + "'");
  }
}

int parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("bad integer value for " + what + ": '" + s + "'");
  }
}

bool parse_bool01(const std::string& s, const std::string& what) {
  if (s == "0") return false;
  if (s == "1") return true;
  throw std::runtime_error("bad boolean (want 0/1) for " + what + ": '" + s + "'");
}
}  // namespace

std::vector<PupilRecord> read_pupils_csv(const std::string& path) {
  csv::Table t = csv::read_file(path);
  csv::require_header(t, kPupilColumns, path);
  std::vector<PupilRecord> out;
  out.reserve(t.rows.size());
  for (const auto& r : t.rows) {
    PupilRecord p;
    p.pupil_id = r[0];
    p.la_id = r[1];
    p.school_id = r[2];
    p.ks2_group = parse_int(r[3], "ks2_group");
    p.ks2_score = parse_double(r[4], "ks2_score");
    p.attainment8_raw = parse_double(r[5], "attainment8_raw");
    p.gender = gender_from_string(r[6]);
    p.ethnicity = r[7].empty() ? std::optional<Ethnicity>{} : ethnicity_from_string(r[7]);
    p.eal = parse_bool01(r[8], "eal");
    p.fsm = parse_bool01(r[9], "fsm");
    p.sen = sen_from_string(r[10]);
    p.idaci_pupil = parse_double(r[11], "idaci_pupil");
    p.validate();
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<SchoolRecord> read_schools_csv(const std::string& path) {
  csv::Table t = csv::read_file(path);
  csv::require_header(t, kSchoolColumns, path);
  std::vector<SchoolRecord> out;
  out.reserve(t.rows.size());
  for (const auto& r : t.rows) {
    SchoolRecord s;
    s.school_id = r[0];
    s.la_id = r[1];
    s.admissions = admissions_from_string(r[2]);
    s.gender_mix = gender_mix_from_string(r[3]);
    s.denomination = denomination_from_string(r[4]);
    s.idaci_school = parse_double(r[5], "idaci_school");
    s.region = parse_int(r[6], "region");
    s.validate();
    out.push_back(std::move(s));
  }
  return out;
}

PopulationTruth read_truth_csv(const std::string& path) {
  csv::Table t = csv::read_file(path);
  csv::require_header(t, {"level", "id", "term", "value"}, path);
  PopulationTruth truth;
  std::unordered_map<std::string, std::size_t> la_index, school_index;
  for (const auto& r : t.rows) {
    auto& list = r[0] == "la" ? truth.la : truth.school;
    auto& index = r[0] == "la" ? la_index : school_index;
    if (r[0] != "la" && r[0] != "school")
      throw std::runtime_error("truth.csv: unknown level '" + r[0] + "'");
    auto [it, inserted] = index.emplace(r[1], list.size());
    if (inserted) list.push_back({r[1], Eigen::VectorXd()});
    auto& eff = list[it->second];
    eff.u.conservativeResize(eff.u.size() + 1);
    eff.u[eff.u.size() - 1] = parse_double(r[3], "truth value");
  }
  return truth;
}

}  // namespace edscreen
