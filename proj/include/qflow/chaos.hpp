#pragma once

#include <optional>
#include <vector>

#include "qflow/fields.hpp"
#include "qflow/rng.hpp"
#include "qflow/spectral.hpp"

namespace qflow {

// Nonnegative mass per grid cell.
using GridMeasure = std::vector<double>;

struct GmcMeasure {
    GridMeasure cells;
    double gamma = 0.0;
    int trunc = 0;
    double counterterm = 0.0;  // (gamma^2/2) Var psi_N(x)

    double total() const;
};

// Largest admissible gamma (exclusive).
double gamma_critical(int n);

// M = dV exp(gamma (psi + c) - counterterm) per cell.
GmcMeasure build_gmc(const Torus& geom, const FieldCoeffs& psi, double gamma, double shift_c = 0.0);
GmcMeasure build_gmc(const Torus& geom, const CgfSample& psi, double gamma, double shift_c = 0.0);

// Ground density lambda(x) in [1 - rho, 1 + rho] on the grid: the field is
// lambda psi and the reference measure lambda dx, renormalized pointwise.
GmcMeasure build_gmc_weighted(const Torus& geom, const FieldCoeffs& psi, double gamma, const GridValues& density,
                              double shift_c = 0.0);

// Cellwise multiplication by exp(gamma h).
GmcMeasure gmc_shift(const Torus& geom, const GmcMeasure& m, const FieldCoeffs& h);

struct MomentEstimate {
    int trunc;
    double p;
    double mean;
    double se;
};

struct MomentScan {
    std::vector<MomentEstimate> rows;  // N-major
    std::vector<double> p_list;
    std::vector<int> N_list;
    double threshold;  // 2n / gamma^2
    // least-squares slope of log E[M(1)^p] against log N, per p
    std::vector<double> log_slope;

    bool predicted_finite(std::size_t ip) const { return p_list[ip] < threshold; }
};

// E[M(1)^p] over `reps` fresh fields at each truncation in N_list (grid G fixed).
MomentScan gmc_moment_scan(int n, double L, int G, const std::vector<int>& N_list, double gamma,
                           const std::vector<double>& p_list, int reps, RandomStream& rng);

struct InversionPlan {
    MollifierProfile eta = MollifierProfile::tent;
    std::vector<double> eps_list;  // decreasing mollification radii
    int mc_reps = 200;
    std::vector<double> F_const;  // per eps
    std::vector<double> F_se;
};

struct CountertermEstimate {
    std::vector<double> F;
    std::vector<double> se;
};

// F(eps) = E[(1/gamma) log (eta_eps * M(psi'))(x0)] by Monte Carlo.  With
// base_cell unset every grid point is pooled (translation invariance).
CountertermEstimate estimate_counterterm(const Torus& geom, double gamma, const InversionPlan& plan, RandomStream& rng,
                                         std::optional<std::size_t> base_cell = std::nullopt);

// Fills plan.F_const / plan.F_se.
void calibrate(const Torus& geom, double gamma, InversionPlan& plan, RandomStream& rng);

struct InversionResult {
    FieldCoeffs field;  // every truncated mode, zero mode included
    double eps = 0.0;
    std::size_t floor_hits = 0;  // cells where the smoothed mass hit 1e-300

    FieldCoeffs grounded() const;
};

// r = (1/gamma) log(eta_eps * m) - F(eps) projected on the truncated basis.
InversionResult invert_gmc(const Torus& geom, const GmcMeasure& m, const InversionPlan& plan, std::size_t eps_index);

}  // namespace qflow
