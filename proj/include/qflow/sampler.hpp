#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "qflow/fields.hpp"
#include "qflow/forms.hpp"
#include "qflow/stochastic.hpp"
#include "qflow/volume.hpp"

namespace qflow {

struct SamplerOptions {
    double eps = 1e-3;  // window (eps, 1/eps) in M(1)
    std::size_t burn_in = 1000;
    std::size_t samples = 1000;
    std::size_t thin = 10;
    double pcn_beta = 0.3;
    double u_step = 1.0;  // Gaussian step in u = log M(1)
    std::size_t mass_reps = 2000;  // importance samples for the window mass
};

struct ChainSample {
    FieldCoeffs psi;  // grounded
    double u = 0.0;   // log M(1)
    double log_m1 = 0.0;  // log of the grounded field's total mass
};

struct WindowMass {
    double eps = 0.0;
    double value = 0.0;
    double se = 0.0;
};

struct ChainRun {
    std::vector<ChainSample> samples;
    double psi_accept = 0.0;
    double u_accept = 0.0;   // 0 when u is frozen (gamma = 0)
    double tau_u = 0.0;      // integrated autocorrelation times of the thinned series
    double tau_log_m1 = 0.0;
    WindowMass window_mass;
};

// psi' = sqrt(1 - beta^2) psi + beta xi, xi a fresh grounded CGF.
FieldCoeffs pcn_propose(const CgfSampler& sampler, const FieldCoeffs& psi, double beta, RandomStream& rng);

// pCN-within-Gibbs over (psi, u) for nu restricted to the window.  At
// gamma = 0 u is frozen at log V and the chain targets the CGF law.
ChainRun sample_symmetrizing(const Torus& geom, const MeasureModel& model, const SamplerOptions& opts,
                             RandomStream& rng);

// nu(window eps) for every eps, from the same grounded draws.
std::vector<WindowMass> window_masses(const Torus& geom, const MeasureModel& model, const std::vector<double>& eps,
                                      std::size_t reps, RandomStream& rng);

// e^u times the unit-mass GMC of the grounded field.
GmcMeasure chain_measure(const Torus& geom, const MeasureModel& model, const ChainSample& s);

struct StationarityOptions {
    double T = 1.0;
    double dt = 2e-4;
    std::size_t paths = 300;  // per time point; initial states are disjoint
    SamplerOptions chain;
    std::vector<CylinderFunctional> observables;
};

struct ObservableTest {
    std::string name;
    KsResult ks;
};

struct StationarityReport {
    std::vector<ObservableTest> tests;  // V first, then the observables
    KsResult volume_vs_gamma;           // V at T against the CIR stationary law
    KsResult volume0_vs_gamma;          // V at 0 against the same law
    GammaLaw gamma_law{};
    bool polyakov_liouville = false;
    bool feller_volume = false;
    std::size_t dead_paths = 0;
    std::size_t unreliable_paths = 0;
    ChainRun chain;  // states used, samples cleared
};

// LQF with q_ref < 0, f = q_ref and sigma^2 <= -2 Q_ref(1).
StationarityReport stationarity_check(const Torus& geom, const MeasureModel& model, const StationarityOptions& opts,
                                      RandomStream& rng);

// rho = 1 + a_n n sigma^2 / 4
bool polyakov_liouville_rho(int n, double sigma, double rho);

}  // namespace qflow
