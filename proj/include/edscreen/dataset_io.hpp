#pragma once

#include <string>
#include <vector>

#include "edscreen/types.hpp"

namespace edscreen {

// Canonical CSV schemas. Column names match the record field names.
extern const std::vector<std::string> kPupilColumns;
extern const std::vector<std::string> kSchoolColumns;

void write_pupils_csv(const std::string& path, const std::vector<PupilRecord>& pupils);
void write_schools_csv(const std::string& path, const std::vector<SchoolRecord>& schools);

/// truth.csv rows: level,id,term,value (long format, one row per realized
/// random-effect coefficient).
void write_truth_csv(const std::string& path, const PopulationTruth& truth,
                     const std::vector<std::string>& la_terms,
                     const std::vector<std::string>& school_terms);

std::vector<PupilRecord> read_pupils_csv(const std::string& path);
std::vector<SchoolRecord> read_schools_csv(const std::string& path);
PopulationTruth read_truth_csv(const std::string& path);

}  // namespace edscreen
