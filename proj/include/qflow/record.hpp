#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qflow/config.hpp"

namespace qflow {

// A reported number.  Either it carries a standard error, or it is exact:
// a deterministic function of the seed with no sampling error to attach
// (counts, test statistics, p-values, algebraic residuals).
struct Quantity {
    std::string name;
    double value = 0.0;
    std::optional<double> se;

    static Quantity exact(std::string name, double value) { return {std::move(name), value, std::nullopt}; }
    static Quantity estimate(std::string name, double value, double se) { return {std::move(name), value, se}; }
};

enum class Status { pass, fail, error };
const char* status_name(Status s);

struct ExperimentResult {
    std::string name;
    std::string title;
    Status status = Status::pass;
    bool soft = false;           // a failure does not fail the run
    bool config_error = false;   // status error caused by a ConfigError
    std::vector<Quantity> values;
    std::string diagnostic;
    std::vector<std::string> artifacts;  // files written, relative to the output dir
    double wall_seconds = 0.0;

    bool hard_failure() const { return status != Status::pass && !soft; }
};

struct RunRecord {
    std::string config_hash;
    Json config;  // normalized
    Json derived;
    std::uint64_t seed = 0;
    std::string rng_name;
    int rng_version = 0;
    std::string version;
    std::string suite;  // "unit", "acceptance", "full", or the experiment list
    std::vector<ExperimentResult> experiments;
    double wall_seconds = 0.0;

    bool passed() const;
    // FNV-1a of everything except wall-clock times
    std::string outputs_hash() const;
};

const char* artifact_version();

Json to_json(const ExperimentResult& r, bool with_timing = true);
Json to_json(const RunRecord& r, bool with_timing = true);
RunRecord new_record(const ValidatedConfig& vc, std::string suite);

// Writes record.<format> into dir and returns the path.
std::filesystem::path emit_report(const RunRecord& r, const std::string& format, const std::filesystem::path& dir);

// Raw little-endian float64 array plus a JSON sidecar with shape, dtype and
// endianness.  Returns the .bin path.
std::filesystem::path write_snapshot(const std::filesystem::path& dir, const std::string& name,
                                     const std::vector<double>& data, const std::vector<std::size_t>& shape,
                                     const Json& meta = Json::object());

struct Snapshot {
    std::vector<double> data;
    std::vector<std::size_t> shape;
    Json meta;
};
Snapshot read_snapshot(const std::filesystem::path& bin_path);

}  // namespace qflow
