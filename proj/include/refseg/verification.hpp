#pragma once

#include <cstdint>
#include <iosfwd>

namespace refseg {

/// Outcome of the fast-path vs brute-force equivalence sweep.
struct OracleSuiteResult {
    int cases = 0;
    uint64_t label_mismatches = 0;  // pixels whose labels disagree, summed
    double max_weight_deviation = 0.0;
};

/// Runs `cases` randomized matching instances (64x64 queries, d=16,
/// reference counts cycling {1000, 5000, 12288}, neighbor counts cycling
/// {1, 10%, 50%, 100%}, 2/3/5 categories, both task kinds, with planted
/// duplicate, opposite, and zero vectors) through assign_labels and
/// brute_force_oracle, comparing labels exactly and weights by max
/// absolute deviation. `progress`, when given, gets a note every few cases.
OracleSuiteResult run_oracle_suite(int cases, uint64_t seed, std::ostream* progress);

}  // namespace refseg
