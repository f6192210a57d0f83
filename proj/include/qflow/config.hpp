#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qflow/forms.hpp"
#include "qflow/spectral.hpp"
#include "qflow/stochastic.hpp"

namespace qflow {

using Json = nlohmann::ordered_json;

struct GeometryConfig {
    int n = 2;
    double L = 6.283185307179586;
    int grid = 16;
    int trunc = 8;
    double q_ref_const = 0.0;

    bool operator==(const GeometryConfig&) const = default;
};

// constant + sum amp * e_k, with e_k the normalized cosine (or sine) mode
struct ModeTerm {
    std::vector<int> k;
    bool sine = false;
    double amp = 0.0;

    bool operator==(const ModeTerm&) const = default;
};

struct FieldSpec {
    double constant = 0.0;
    std::vector<ModeTerm> modes;

    bool operator==(const FieldSpec&) const = default;
};

struct ModelConfig {
    FlowKind flavor = FlowKind::NQF;
    double sigma = 1.0;
    std::optional<double> gamma;  // only as a consistency check
    double rho = 1.0;
    FieldSpec f{1.0, {}};
    FieldSpec phi0;  // initial conformal factor for the flows

    bool operator==(const ModelConfig&) const = default;
};

struct SchemeConfig {
    double dt = 1e-3;
    double T = 1.0;
    DetScheme scheme = DetScheme::imex;
    NoiseMode noise = NoiseMode::cellwise;
    double floor = 1e-12;
    std::vector<double> windows{1e-3};

    bool operator==(const SchemeConfig&) const = default;
};

struct ExperimentConfig {
    std::vector<std::string> checks;
    std::size_t reps = 2000;
    std::size_t paths = 300;
    std::uint64_t seed = 1;
    int workers = 1;

    bool operator==(const ExperimentConfig&) const = default;
};

struct OutputConfig {
    std::string dir;  // empty: $QFLOW_OUTPUT_DIR, then ./qflow_out
    int cadence = 10;
    std::vector<std::string> formats{"json"};
    bool snapshots = false;

    bool operator==(const OutputConfig&) const = default;
};

struct RunConfig {
    GeometryConfig geometry;
    ModelConfig model;
    SchemeConfig scheme;
    ExperimentConfig experiment;
    OutputConfig output;

    bool operator==(const RunConfig&) const = default;
};

inline constexpr const char* kOutputDirEnv = "QFLOW_OUTPUT_DIR";

// The experiment names accepted in experiment.checks.
const std::vector<std::string>& experiment_names();

// Throws ConfigError on unknown keys, wrong types or bad enum values.
RunConfig parse_config(const Json& j);
RunConfig load_config(const std::filesystem::path& path);
Json to_json(const RunConfig& cfg);
// FNV-1a 64 of the canonical dump, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);
std::string fnv1a_hex(const std::string& bytes);

struct DerivedConstants {
    double a_n = 0.0;
    double gamma = 0.0;
    double gamma_critical = 0.0;
    double Q_r1 = 0.0;             // (4 pi)^{n/2} (n/2 - 1)!
    double Q_ref1 = 0.0;           // q_ref_const L^n
    double sigma2_bound = 0.0;     // 2 Q_r(1) / n
    double sigma2_margin = 0.0;    // bound - sigma^2, must be > 0
    double moment_margin = 0.0;    // Q_r(1) - rho Q_ref(1) (rho = 1 for NQF), must be > 0
    double invariant_margin = 0.0; // -2 Q_ref(1) - sigma^2, >= 0 in the LQF invariant regime
    bool polyakov_liouville = false;
    bool exploratory = false;
    bool synthetic_background = false;  // q_ref_const != 0 on the flat torus
    std::vector<std::string> warnings;
};

struct ValidatedConfig {
    RunConfig cfg;
    DerivedConstants derived;
};

// Hard errors: n odd, grid < 2 trunc, inconsistent gamma, wrong f sign.  A
// sigma-bound or moment-condition violation only marks the run exploratory.
ValidatedConfig validate_config(const RunConfig& cfg);
Json to_json(const DerivedConstants& d);

Torus make_geometry(const RunConfig& cfg);
FieldCoeffs make_field(const Torus& geom, const FieldSpec& spec);
MeasureModel make_model(const Torus& geom, const RunConfig& cfg);
std::filesystem::path output_dir(const RunConfig& cfg, const std::optional<std::string>& override_dir = std::nullopt);

}  // namespace qflow
