#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "qflow/record.hpp"

namespace qflow {

inline constexpr int kNumCriteria = 10;
inline constexpr std::uint64_t kAcceptanceSeed = 20261016;

struct AcceptanceOptions {
    std::uint64_t seed = kAcceptanceSeed;
    // where the soft stationarity criterion leaves its diagnostic bundle; empty: nowhere
    std::filesystem::path bundle_dir;
};

// Criteria 1..10.  Tolerances, sizes and seeds are fixed here.  Criterion 10
// is soft.  Exceptions are caught and reported as status error.
ExperimentResult run_criterion(int id, const AcceptanceOptions& opts);

// "[PASS] C4 <title>: <diagnostic>"
std::string criterion_line(const ExperimentResult& r);

}  // namespace qflow
