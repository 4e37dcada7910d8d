#include "edscreen/design.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include <boost/math/distributions/normal.hpp>

namespace edscreen {

std::string to_string(OutcomeTransform t) {
  switch (t) {
    case OutcomeTransform::zscore: return "zscore";
    case OutcomeTransform::rank_inverse_normal: return "rin";
    case OutcomeTransform::none: return "none";
  }
  return "";
}

OutcomeTransform outcome_transform_from_string(const std::string& s) {
  if (s == "zscore") return OutcomeTransform::zscore;
  if (s == "rin") return OutcomeTransform::rank_inverse_normal;
  if (s == "none") return OutcomeTransform::none;
  throw std::invalid_argument("unknown outcome transform: '" + s + "'");
}

namespace {

Eigen::VectorXd zscore(const Eigen::VectorXd& x) {
  const auto n = x.size();
  const double mean = x.mean();
  double ss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) ss += (x[i] - mean) * (x[i] - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0)) throw std::invalid_argument("degenerate outcome");
  return (x.array() - mean) / sd;
}

Eigen::VectorXd blom_scores(const Eigen::VectorXd& x) {
  const auto n = x.size();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return x[a] < x[b]; });
  // average ranks for ties
  Eigen::VectorXd rank(n);
  Eigen::Index i = 0;
  while (i < n) {
    Eigen::Index j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Eigen::Index k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  boost::math::normal_distribution<double> std_normal;
  Eigen::VectorXd out(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double p = (rank[k] - 0.375) / (static_cast<double>(n) + 0.25);
    out[k] = boost::math::quantile(std_normal, p);
  }
  return out;
}

}  // namespace

Eigen::VectorXd normalize_attainment8(const Eigen::VectorXd& raw, OutcomeTransform mode) {
  if (raw.size() < 2) throw std::invalid_argument("degenerate outcome");
  if (raw.minCoeff() == raw.maxCoeff()) throw std::invalid_argument("degenerate outcome");
  switch (mode) {
    case OutcomeTransform::zscore:
      return zscore(raw);
    case OutcomeTransform::rank_inverse_normal:
      // Blom scores are re-standardized so both modes deliver SD-unit outcomes.
      return zscore(blom_scores(raw));
    case OutcomeTransform::none:
      return raw;
  }
  throw std::logic_error("unreachable");
}

namespace {

bool requires_ethnicity(Term t) {
  return t == Term::eth_black || t == Term::eth_asian || t == Term::eth_other;
}

}  // namespace

double term_value(const PupilRecord& p, const SchoolRecord& s, Term t) {
  switch (t) {
    case Term::intercept: return 1.0;
    case Term::ks2c: return center_ks2(p.ks2_score);
    case Term::ks2c_sq: {
      const double c = center_ks2(p.ks2_score);
      return c * c;
    }
    case Term::girl: return p.gender == Gender::girl ? 1.0 : 0.0;
    case Term::eth_black: return *p.ethnicity == Ethnicity::Black ? 1.0 : 0.0;
    case Term::eth_asian: return *p.ethnicity == Ethnicity::Asian ? 1.0 : 0.0;
    case Term::eth_other: return *p.ethnicity == Ethnicity::Other ? 1.0 : 0.0;
    case Term::eal: return p.eal ? 1.0 : 0.0;
    case Term::idaci_pupil: return p.idaci_pupil;
    case Term::fsm: return p.fsm ? 1.0 : 0.0;
    case Term::sen_support: return p.sen == Sen::support ? 1.0 : 0.0;
    case Term::sen_statement: return p.sen == Sen::statement ? 1.0 : 0.0;
    case Term::adm_grammar: return s.admissions == Admissions::grammar ? 1.0 : 0.0;
    case Term::adm_secondary_modern:
      return s.admissions == Admissions::secondary_modern ? 1.0 : 0.0;
    case Term::idaci_school: return s.idaci_school;
    case Term::school_boys: return s.gender_mix == GenderMix::boys ? 1.0 : 0.0;
    case Term::school_girls: return s.gender_mix == GenderMix::girls ? 1.0 : 0.0;
    case Term::den_cofe: return s.denomination == Denomination::CofE ? 1.0 : 0.0;
    case Term::den_rc: return s.denomination == Denomination::RC ? 1.0 : 0.0;
    case Term::den_other_christian:
      return s.denomination == Denomination::other_christian ? 1.0 : 0.0;
    case Term::den_jewish: return s.denomination == Denomination::jewish ? 1.0 : 0.0;
    case Term::den_muslim: return s.denomination == Denomination::muslim ? 1.0 : 0.0;
    case Term::den_sikh: return s.denomination == Denomination::sikh ? 1.0 : 0.0;
  }
  throw std::logic_error("unreachable term");
}

namespace {

bool row_complete(const PupilRecord& p, const std::vector<Term>& terms) {
  for (Term t : terms)
    if (requires_ethnicity(t) && !p.ethnicity.has_value()) return false;
  return true;
}

}  // namespace

std::optional<Eigen::RowVectorXd> encode_fixed_row(const PupilRecord& pupil,
                                                   const SchoolRecord& school,
                                                   const ModelSpec& spec) {
  if (!row_complete(pupil, spec.fixed_terms)) return std::nullopt;
  Eigen::RowVectorXd row(spec.p());
  for (int j = 0; j < spec.p(); ++j) row[j] = term_value(pupil, school, spec.fixed_terms[j]);
  return row;
}

DesignMatrices build_design(const std::vector<PupilRecord>& pupils,
                            const std::vector<SchoolRecord>& schools,
                            const ModelSpec& spec, const BuildOptions& opts) {
  spec.validate();
  if (pupils.empty() || schools.empty()) throw std::invalid_argument("empty data");

  std::unordered_map<std::string, const SchoolRecord*> school_by_id;
  school_by_id.reserve(schools.size());
  for (const auto& s : schools) school_by_id[s.school_id] = &s;

  // Select usable pupils, then order rows by (LA, school, input order).
  struct RowRef {
    const PupilRecord* pupil;
    const SchoolRecord* school;
    std::size_t input_index;
  };
  std::vector<RowRef> rows;
  rows.reserve(pupils.size());
  int dropped = 0;
  const std::vector<Term> all_terms = [&] {
    std::vector<Term> t = spec.fixed_terms;
    t.insert(t.end(), spec.random_la.begin(), spec.random_la.end());
    t.insert(t.end(), spec.random_school.begin(), spec.random_school.end());
    return t;
  }();
  for (std::size_t i = 0; i < pupils.size(); ++i) {
    const auto& p = pupils[i];
    if (opts.subset && !opts.subset->count(p.pupil_id)) continue;
    auto it = school_by_id.find(p.school_id);
    if (it == school_by_id.end())
      throw std::invalid_argument("pupil " + p.pupil_id + " references unknown school " +
                                  p.school_id);
    if (it->second->la_id != p.la_id)
      throw std::invalid_argument("pupil " + p.pupil_id + ": school " + p.school_id +
                                  " belongs to LA " + it->second->la_id + ", not " + p.la_id);
    if (!row_complete(p, all_terms)) {
      ++dropped;
      continue;
    }
    rows.push_back({&p, it->second, i});
  }
  if (rows.empty()) throw std::invalid_argument("empty data after listwise deletion");

  std::sort(rows.begin(), rows.end(), [](const RowRef& a, const RowRef& b) {
    if (a.pupil->la_id != b.pupil->la_id) return a.pupil->la_id < b.pupil->la_id;
    if (a.pupil->school_id != b.pupil->school_id) return a.pupil->school_id < b.pupil->school_id;
    return a.input_index < b.input_index;
  });

  const int n = static_cast<int>(rows.size());
  DesignMatrices d;
  d.y.resize(n);
  d.x.resize(n, spec.p());
  d.z_la.resize(n, spec.q_la());
  d.z_school.resize(n, spec.q_school());
  d.pupil_ids.reserve(n);
  d.n_dropped_incomplete = dropped;

  for (int i = 0; i < n; ++i) {
    const auto& r = rows[i];
    d.y[i] = r.pupil->attainment8_raw;
    for (int j = 0; j < spec.p(); ++j)
      d.x(i, j) = term_value(*r.pupil, *r.school, spec.fixed_terms[j]);
    for (int j = 0; j < spec.q_la(); ++j)
      d.z_la(i, j) = term_value(*r.pupil, *r.school, spec.random_la[j]);
    for (int j = 0; j < spec.q_school(); ++j)
      d.z_school(i, j) = term_value(*r.pupil, *r.school, spec.random_school[j]);
    d.pupil_ids.push_back(r.pupil->pupil_id);
  }
  if (opts.outcome != OutcomeTransform::none) d.y = normalize_attainment8(d.y, opts.outcome);

  // Contiguous (LA, school) blocks over the sorted rows.
  int i = 0;
  while (i < n) {
    LaBlock la;
    la.la_id = rows[i].pupil->la_id;
    la.row_begin = i;
    while (i < n && rows[i].pupil->la_id == la.la_id) {
      SchoolBlock sb;
      sb.school_id = rows[i].pupil->school_id;
      sb.row_begin = i;
      while (i < n && rows[i].pupil->la_id == la.la_id &&
             rows[i].pupil->school_id == sb.school_id)
        ++i;
      sb.row_end = i;
      la.schools.push_back(std::move(sb));
    }
    la.row_end = i;
    d.las.push_back(std::move(la));
  }
  for (const auto& la : d.las) d.n_schools += static_cast<int>(la.schools.size());
  return d;
}

}  // namespace edscreen
