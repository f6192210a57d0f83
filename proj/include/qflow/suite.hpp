#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "qflow/acceptance.hpp"
#include "qflow/config.hpp"
#include "qflow/record.hpp"

namespace qflow {

enum class SuiteKind { unit, acceptance, full };
SuiteKind parse_suite(const std::string& s);
const char* suite_name(SuiteKind k);

// One named experiment (see experiment_names()) on the configured geometry and
// model.  Files go to out_dir when it is non-empty.  Never throws: failures
// come back as status error.
ExperimentResult run_experiment(const std::string& name, const ValidatedConfig& vc,
                                const std::filesystem::path& out_dir);

// The config's experiment list, scheduled on experiment.workers threads.
RunRecord run_experiments(const ValidatedConfig& vc, const std::filesystem::path& out_dir);

// unit: criteria 1-3.  acceptance: criteria 1-10.  full: acceptance plus the
// config's experiment list.  Criteria use experiment.seed.
RunRecord run_suite(const ValidatedConfig& vc, SuiteKind kind, const std::filesystem::path& out_dir);

// Runs independent jobs on up to `workers` threads; results keep job order.
std::vector<ExperimentResult> schedule(const std::vector<std::function<ExperimentResult()>>& jobs, int workers);

}  // namespace qflow
