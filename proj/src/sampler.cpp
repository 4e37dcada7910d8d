#include "edscreen/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "edscreen/csv.hpp"
#include "edscreen/rng.hpp"

namespace edscreen {

std::string to_string(DesignKind k) {
  return k == DesignKind::srs_per_la ? "srs_per_la" : "equal_per_school";
}

DesignKind design_kind_from_string(const std::string& s) {
  if (s == "srs_per_la" || s == "srs") return DesignKind::srs_per_la;
  if (s == "equal_per_school" || s == "equal") return DesignKind::equal_per_school;
  throw std::invalid_argument("unknown sample design: '" + s + "'");
}

namespace {

struct LaView {
  std::string la_id;
  // pupil indices grouped by school, schools in id order, pupils in id order
  std::vector<std::pair<std::string, std::vector<std::size_t>>> schools;
  std::size_t population = 0;
};

/// Deterministic LA/school grouping of a population, ordered by id.
std::vector<LaView> group_by_la(const Population& population) {
  std::map<std::string, std::map<std::string, std::vector<std::size_t>>> tree;
  for (std::size_t i = 0; i < population.pupils.size(); ++i) {
    const auto& p = population.pupils[i];
    tree[p.la_id][p.school_id].push_back(i);
  }
  std::vector<LaView> out;
  out.reserve(tree.size());
  for (auto& [la_id, schools] : tree) {
    LaView v;
    v.la_id = la_id;
    for (auto& [school_id, idx] : schools) {
      std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return population.pupils[a].pupil_id < population.pupils[b].pupil_id;
      });
      v.population += idx.size();
      v.schools.emplace_back(school_id, std::move(idx));
    }
    out.push_back(std::move(v));
  }
  return out;
}

void check_design(const Population& population, const SampleDesign& design, DesignKind want) {
  if (population.pupils.empty()) throw std::invalid_argument("empty population");
  if (design.kind != want) throw std::invalid_argument("sample design kind mismatch");
  if (design.target_per_la < 1) throw std::invalid_argument("target_per_la < 1");
}

void push_pupils(SampleResult& result, const Population& population,
                 const std::vector<std::size_t>& chosen) {
  for (std::size_t i : chosen) {
    const auto& p = population.pupils[i];
    result.pupils.push_back({p.pupil_id, p.la_id, p.school_id, 1.0});
  }
}

}  // namespace

SampleResult srs_per_la(const Population& population, const SampleDesign& design) {
  check_design(population, design, DesignKind::srs_per_la);
  const RngStream root = RngStream(design.seed).substream("srs-per-la");
  SampleResult result;
  result.kind = design.kind;
  result.seed = design.seed;
  for (const auto& la : group_by_la(population)) {
    if (la.population < static_cast<std::size_t>(design.min_la_size)) {
      result.excluded.push_back({la.la_id, static_cast<int>(la.population),
                                 "below min LA size " + std::to_string(design.min_la_size)});
      continue;
    }
    // flatten in (school, pupil) order so the draw is deterministic
    std::vector<std::size_t> pool;
    pool.reserve(la.population);
    for (const auto& [sid, idx] : la.schools) pool.insert(pool.end(), idx.begin(), idx.end());
    const std::size_t take =
        std::min(pool.size(), static_cast<std::size_t>(design.target_per_la));
    RngStream rng = root.substream(la.la_id);
    std::vector<std::size_t> chosen;
    chosen.reserve(take);
    for (std::size_t pos : rng.sample_without_replacement(pool.size(), take))
      chosen.push_back(pool[pos]);
    push_pupils(result, population, chosen);
    result.la_counts.push_back(
        {la.la_id, static_cast<int>(la.population), static_cast<int>(take), 0});
    // schools with no sampled pupil
    std::unordered_map<std::string, int> per_school;
    for (std::size_t i : chosen) ++per_school[population.pupils[i].school_id];
    for (const auto& [sid, idx] : la.schools)
      if (!per_school.count(sid)) ++result.unsampled_schools;
  }
  return result;
}

SampleResult equal_per_school(const Population& population, const SampleDesign& design) {
  check_design(population, design, DesignKind::equal_per_school);
  const RngStream root = RngStream(design.seed).substream("equal-per-school");
  SampleResult result;
  result.kind = design.kind;
  result.seed = design.seed;
  for (const auto& la : group_by_la(population)) {
    if (la.population < static_cast<std::size_t>(design.min_la_size)) {
      result.excluded.push_back({la.la_id, static_cast<int>(la.population),
                                 "below min LA size " + std::to_string(design.min_la_size)});
      continue;
    }
    const auto s = la.schools.size();
    const int quota = std::max<int>(
        1, static_cast<int>(std::floor(static_cast<double>(design.target_per_la) /
                                           static_cast<double>(s) +
                                       0.5)));
    int achieved = 0;
    for (const auto& [sid, idx] : la.schools) {
      const std::size_t take = std::min(idx.size(), static_cast<std::size_t>(quota));
      RngStream rng = root.substream(la.la_id).substream(sid);
      std::vector<std::size_t> chosen;
      chosen.reserve(take);
      for (std::size_t pos : rng.sample_without_replacement(idx.size(), take))
        chosen.push_back(idx[pos]);
      push_pupils(result, population, chosen);
      achieved += static_cast<int>(take);
      if (take == 0) ++result.unsampled_schools;
    }
    result.la_counts.push_back({la.la_id, static_cast<int>(la.population), achieved, quota});
  }
  return result;
}

SampleResult attach_weights(SampleResult sample, const Population& population) {
  std::unordered_map<std::string, int> la_pop, school_pop;
  std::unordered_map<std::string, int> la_n, school_n;
  for (const auto& p : population.pupils) {
    ++la_pop[p.la_id];
    ++school_pop[p.school_id];
  }
  for (const auto& p : sample.pupils) {
    if (!la_pop.count(p.la_id))
      throw std::invalid_argument("sample references LA absent from population: " + p.la_id);
    if (!school_pop.count(p.school_id))
      throw std::invalid_argument("sample references school absent from population: " +
                                  p.school_id);
    ++la_n[p.la_id];
    ++school_n[p.school_id];
  }
  for (auto& p : sample.pupils) {
    if (sample.kind == DesignKind::srs_per_la)
      p.weight = static_cast<double>(la_pop[p.la_id]) / la_n[p.la_id];
    else
      p.weight = static_cast<double>(school_pop[p.school_id]) / school_n[p.school_id];
  }
  return sample;
}

SampleResult draw_sample(const Population& population, const SampleDesign& design) {
  SampleResult r = design.kind == DesignKind::srs_per_la ? srs_per_la(population, design)
                                                         : equal_per_school(population, design);
  return attach_weights(std::move(r), population);
}

std::string SampleResult::audit_json() const {
  nlohmann::json j;
  j["design"] = to_string(kind);
  j["seed"] = seed;
  j["n_selected"] = pupils.size();
  j["unsampled_schools"] = unsampled_schools;
  j["la_counts"] = nlohmann::json::array();
  for (const auto& c : la_counts)
    j["la_counts"].push_back({{"la_id", c.la_id},
                              {"population", c.population},
                              {"achieved", c.achieved},
                              {"quota_per_school", c.quota_per_school}});
  j["excluded"] = nlohmann::json::array();
  for (const auto& e : excluded)
    j["excluded"].push_back(
        {{"la_id", e.la_id}, {"population", e.population}, {"reason", e.reason}});
  return j.dump(2);
}

void write_sample_csv(const std::string& path, const SampleResult& sample) {
  csv::Table t;
  t.header = {"pupil_id", "la_id", "school_id", "weight"};
  for (const auto& p : sample.pupils)
    t.rows.push_back({p.pupil_id, p.la_id, p.school_id, csv::format_double(p.weight)});
  csv::write_file(path, t);
}

SampleResult read_sample_csv(const std::string& path) {
  csv::Table t = csv::read_file(path);
  csv::require_header(t, {"pupil_id", "la_id", "school_id", "weight"}, path);
  SampleResult r;
  for (const auto& row : t.rows)
    r.pupils.push_back({row[0], row[1], row[2], std::stod(row[3])});
  return r;
}

}  // namespace edscreen
