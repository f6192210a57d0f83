#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qflow/chaos.hpp"
#include "qflow/energy.hpp"
#include "qflow/rng.hpp"

namespace qflow {

struct MeasureState {
    GridMeasure masses;
    double t = 0.0;
    GridValues phi_grid;  // (1/n) log(m_i / dV)
    bool alive = true;
    std::optional<double> death_time;

    double volume() const;
};

MeasureState measure_state_from_phi(const Torus& geom, const FieldCoeffs& phi);
MeasureState measure_state_from_masses(const Torus& geom, GridMeasure masses, double t = 0.0);

enum class NoiseMode { cellwise, spectral_gram };

struct SdeScheme {
    double dt = 1e-3;
    NoiseMode noise_mode = NoiseMode::cellwise;
    double clamp_floor = 1e-12;  // relative to the reference cell volume
    int dealias_pad = 0;         // recorded only; the drift works on the full grid band
};

struct StochasticParams {
    double sigma = 0.0;
    double rho = 1.0;
    SdeScheme scheme;
};

// 2 (4 pi)^{n/2} (n/2 - 1)! / n, i.e. 4 / (n a_n).
double sigma_squared_bound(int n);

struct StepDiagnostics {
    std::size_t clamped = 0;   // cells raised to the floor in this step
    double raw_volume = 0.0;   // volume before clamping
};

// Euler-Maruyama step of the cell masses.  The clamp keeps the total mass of
// the unclamped update, so the volume follows the exact Euler volume recursion.
MeasureState stochastic_step(const Torus& geom, FlowKind which, const MeasureState& state,
                             const PrescribingFunction& f, const StochasticParams& params, RandomStream& rng,
                             StepDiagnostics* diag = nullptr);

// Deterministic drift per cell (mass units per unit time).
GridValues measure_drift(const Torus& geom, FlowKind which, const MeasureState& state, const PrescribingFunction& f,
                         double rho);

// Explicit Euler step of the volume-form equation built from the smooth flow_rhs.
// Needs a full-band geometry, where the grid log-density is exactly representable.
MeasureState euler_volume_form_step(const Torus& geom, FlowKind which, const MeasureState& state,
                                    const PrescribingFunction& f, double rho, double dt);

struct FlowRun {
    std::vector<double> times;
    std::vector<double> volume;
    std::vector<std::vector<double>> omega_h;  // per recorded time, omega_t(h_j)
    std::optional<double> death_time;
    std::size_t steps = 0;
    std::size_t clamped_cells = 0;
    double floor_fraction = 0.0;  // clamped cells / (cells * steps)
    bool unreliable = false;      // floor_fraction > 1%
    bool sigma_bound_violated = false;
    bool aborted = false;
    std::string diagnostic;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
    MeasureState final_state;
};

FlowRun run_flow(const Torus& geom, FlowKind which, const MeasureState& init, const PrescribingFunction& f,
                 const StochasticParams& params, double T, int cadence, const std::vector<FieldCoeffs>& tests,
                 RandomStream& rng);

}  // namespace qflow
