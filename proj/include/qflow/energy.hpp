#pragma once

#include <string>
#include <vector>

#include "qflow/spectral.hpp"

namespace qflow {

enum class SignClass { strictly_positive, nonpositive };

struct PrescribingFunction {
    FieldCoeffs coeffs;
    GridValues grid;
    SignClass sign_class;
};

// Classifies f on the grid; throws if f changes sign.
PrescribingFunction make_prescribing(const Torus& geom, const FieldCoeffs& f);
PrescribingFunction constant_prescribing(const Torus& geom, double value);

struct SmoothConformalState {
    FieldCoeffs phi;
    GridValues phi_grid;
    GridValues density;  // e^{n phi}
    double volume = 0.0;  // omega(1)
};

SmoothConformalState make_state(const Torus& geom, const FieldCoeffs& phi);

// omega_phi(g) = sum dV e^{n phi} g
double omega(const Torus& geom, const SmoothConformalState& s, const GridValues& g);

// q_ref omega_ref(h) + omega_ref(phi P h)
double q_pairing(const Torus& geom, const SmoothConformalState& s, const FieldCoeffs& h);

// Q_t = e^{-n phi}(q_ref + P phi) on the grid.
GridValues q_curvature(const Torus& geom, const SmoothConformalState& s);

enum class Functional { E1, E2 };
enum class FlowKind { NQF, LQF };

double energy(const Torus& geom, Functional which, const SmoothConformalState& s, const PrescribingFunction& f,
              double rho = 1.0);

// -(Q_t - Q(1) f / omega(f)) for NQF, -(Q_t - f) with rho q_ref for LQF.
GridValues flow_rhs(const Torus& geom, FlowKind which, const SmoothConformalState& s, const PrescribingFunction& f,
                    double rho = 1.0);

// Projection of flow_rhs onto the truncated space in the omega_phi inner product.
FieldCoeffs galerkin_velocity(const Torus& geom, FlowKind which, const SmoothConformalState& s,
                              const PrescribingFunction& f, double rho = 1.0);

enum class DetScheme { rk4, imex };

struct TrajectoryPoint {
    double t;
    double volume;
    double energy;
    double q_norm;     // ||Q_t||_{L2(omega_t)}
    double q_total;    // Q_t(1)
    FieldCoeffs phi;   // filled only when snapshots are requested
};

struct Trajectory {
    std::vector<TrajectoryPoint> points;
    SmoothConformalState final_state;
    bool aborted = false;
    std::string diagnostic;
    int steps = 0;
};

struct DetOptions {
    double dt = 1e-3;
    double T = 1.0;
    DetScheme scheme = DetScheme::imex;
    int cadence = 1;  // record every `cadence` steps
    bool snapshots = false;
    double rho = 1.0;
};

Trajectory integrate_deterministic(const Torus& geom, FlowKind which, const FieldCoeffs& phi0,
                                   const PrescribingFunction& f, const DetOptions& opt);

}  // namespace qflow
