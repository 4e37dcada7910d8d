#pragma once

#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Core>

#include "edscreen/model_spec.hpp"
#include "edscreen/types.hpp"

namespace edscreen {

enum class OutcomeTransform { zscore, rank_inverse_normal, none };
std::string to_string(OutcomeTransform t);
OutcomeTransform outcome_transform_from_string(const std::string& s);

/// Standardizes a score vector. zscore: (x - mean)/sd with the sample SD
/// (divisor n-1). rank_inverse_normal: Blom scores re-standardized to unit
/// sample SD. Throws on fewer than two distinct values ("degenerate
/// outcome").
Eigen::VectorXd normalize_attainment8(const Eigen::VectorXd& raw,
                                      OutcomeTransform mode = OutcomeTransform::zscore);

inline double center_ks2(double ks2_score) { return ks2_score - 4.0; }

/// Fixed-design row for one pupil, in spec order. Returns nullopt when a
/// variable required by the spec is missing (listwise deletion marker).
std::optional<Eigen::RowVectorXd> encode_fixed_row(const PupilRecord& pupil,
                                                   const SchoolRecord& school,
                                                   const ModelSpec& spec);

/// Design value of a single term for one pupil. Ethnicity terms require a
/// present ethnicity.
double term_value(const PupilRecord& pupil, const SchoolRecord& school, Term term);

struct SchoolBlock {
  std::string school_id;
  int row_begin = 0;
  int row_end = 0;  // exclusive
  int n() const { return row_end - row_begin; }
};

struct LaBlock {
  std::string la_id;
  int row_begin = 0;
  int row_end = 0;
  std::vector<SchoolBlock> schools;
  int n() const { return row_end - row_begin; }
};

/// Stacked model inputs, rows sorted by (LA, school). Z columns are the
/// fixed-term columns named in the random blocks (intercept column = 1s).
struct DesignMatrices {
  Eigen::VectorXd y;
  Eigen::MatrixXd x;         // n x p
  Eigen::MatrixXd z_la;      // n x q3 (0 columns when no LA block)
  Eigen::MatrixXd z_school;  // n x q2
  std::vector<LaBlock> las;
  std::vector<std::string> pupil_ids;  // in row order
  int n_dropped_incomplete = 0;
  int n_schools = 0;

  int n() const { return static_cast<int>(y.size()); }
  int p() const { return static_cast<int>(x.cols()); }
  int q_la() const { return static_cast<int>(z_la.cols()); }
  int q_school() const { return static_cast<int>(z_school.cols()); }
};

struct BuildOptions {
  OutcomeTransform outcome = OutcomeTransform::zscore;
  /// When set, only pupils whose id is in the set are used.
  const std::unordered_set<std::string>* subset = nullptr;
};

/// Assembles design matrices from records. Incomplete rows (e.g. missing
/// ethnicity) are dropped and counted. Throws on empty data, on pupils
/// referencing unknown schools, and on degenerate outcomes.
DesignMatrices build_design(const std::vector<PupilRecord>& pupils,
                            const std::vector<SchoolRecord>& schools,
                            const ModelSpec& spec,
                            const BuildOptions& opts = {});

}  // namespace edscreen
