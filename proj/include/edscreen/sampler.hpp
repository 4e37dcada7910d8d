#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "edscreen/types.hpp"

namespace edscreen {

enum class DesignKind { srs_per_la, equal_per_school };
std::string to_string(DesignKind k);
DesignKind design_kind_from_string(const std::string& s);

struct SampleDesign {
  DesignKind kind = DesignKind::srs_per_la;
  int target_per_la = 250;
  int min_la_size = 100;  // LAs below this are excluded and listed
  std::uint64_t seed = 1;
};

struct SampledPupil {
  std::string pupil_id;
  std::string la_id;
  std::string school_id;
  double weight = 1.0;
};

struct LaCount {
  std::string la_id;
  int population = 0;
  int achieved = 0;
  int quota_per_school = 0;  // design B only
};

struct ExcludedLa {
  std::string la_id;
  int population = 0;
  std::string reason;
};

struct SampleResult {
  DesignKind kind = DesignKind::srs_per_la;
  std::vector<SampledPupil> pupils;  // ordered by (la, school, pupil id)
  std::vector<LaCount> la_counts;
  std::vector<ExcludedLa> excluded;
  int unsampled_schools = 0;  // schools of eligible LAs with no sampled pupil
  std::uint64_t seed = 0;

  std::size_t size() const { return pupils.size(); }
  std::string audit_json() const;
};

/// Uniform without-replacement sample of min(target, N) pupils from every LA
/// with at least `min_la_size` pupils.
SampleResult srs_per_la(const Population& population, const SampleDesign& design);

/// Per eligible LA with s schools: quota m = round-half-up(target/s), at
/// least 1, sampled uniformly without replacement within each school.
SampleResult equal_per_school(const Population& population, const SampleDesign& design);

/// Fills per-pupil design weights: N_la/n_la for design A, N_school/m_school
/// for design B. Weights are recorded for release; weighted estimation is
/// out of scope.
SampleResult attach_weights(SampleResult sample, const Population& population);

/// Convenience: draw + weights.
SampleResult draw_sample(const Population& population, const SampleDesign& design);

void write_sample_csv(const std::string& path, const SampleResult& sample);
SampleResult read_sample_csv(const std::string& path);

}  // namespace edscreen
