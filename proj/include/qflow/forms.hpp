#pragma once

#include <cstddef>
#include <vector>

#include "qflow/cylinder.hpp"
#include "qflow/energy.hpp"
#include "qflow/rng.hpp"

namespace qflow {

// Parameters of nu_NQF / nu_LQF.  gamma is always derived from sigma.
struct MeasureModel {
    FlowKind kind = FlowKind::NQF;
    double sigma = 1.0;
    double rho = 1.0;
    PrescribingFunction f;
};

// n sqrt(a_n sigma^2 / 2)
double gamma_of_sigma(int n, double sigma);
double model_gamma(const Torus& geom, const MeasureModel& model);
// 2 Q_ref(1) / (n sigma^2), times rho for LQF: the power of M(f) (NQF) or of
// M(1) (LQF) in the psi-marginal.  Zero when Q_ref(1) = 0, even at sigma = 0.
double marginal_exponent(const Torus& geom, const MeasureModel& model);
// Sign of f, subcritical gamma, and the moment condition exponent < 2n/gamma^2.
void check_regime(const Torus& geom, const MeasureModel& model);

// The measures are handled on (psi, u) with psi grounded and u = log M(1);
// the window of a functional becomes |u| < |log eps|.  Per psi, u is
// integrated by the trapezoid rule in s = u / |log eps|, which is spectrally
// accurate because every integrand carries the bump.
enum class IbpTarget { grounded, ungrounded, nqf, lqf };

struct IbpOptions {
    std::size_t reps = 100000;
    int quad_nodes = 128;
    // r(x) = exp(r_rate x / V) in the ungrounded identity
    double r_rate = 0.5;
};

struct IbpReport {
    double lhs = 0.0, lhs_se = 0.0;
    double rhs = 0.0, rhs_se = 0.0;
    double diff_se = 0.0;
    double z = 0.0;  // mean(lhs - rhs) / SE, paired per psi; 0 when both sides vanish
    double ess = 0.0;
    double term_scale = 0.0;  // mean over draws of the integrated |lhs| + |rhs| terms
    std::size_t reps = 0;
};

inline constexpr double kMinEss = 100.0;

// Throws NumericalError when the importance weights give ESS < 100.  For the
// LQF identity h must be grounded.
IbpReport ibp_check(const Torus& geom, IbpTarget target, const CylinderFunctional& G, const FieldCoeffs& h,
                    const MeasureModel& model, const IbpOptions& opts, RandomStream& rng);

struct GeneratorTerms {
    double drift_f = 0.0;       // M(f g_i) / M(f) (NQF) or M(f g_i) (LQF) term
    double second_order = 0.0;  // (n^2 sigma^2 / 2) sum d_ij q M(g_i g_j)
    double q_ref_term = 0.0;    // -n (rho) Q_ref sum d_i q omega_ref(g_i)
    double field_term = 0.0;    // -(n^2 sigma^2 / 2 gamma) sum d_i q <g_i, psi>_E

    double total() const { return drift_f + second_order + q_ref_term + field_term; }
};

// psi is ungrounded: psi[0] carries c sqrt(V).
GeneratorTerms generator_terms(const Torus& geom, const CylinderFunctional& G, const FieldCoeffs& psi,
                               const MeasureModel& model);
double apply_generator(const Torus& geom, const CylinderFunctional& G, const FieldCoeffs& psi,
                       const MeasureModel& model);
// n^2 sigma^2 sum d_i p d_j q M(f_i g_j)
double carre_du_champ(const Torus& geom, const CylinderFunctional& F, const CylinderFunctional& G,
                      const FieldCoeffs& psi, const MeasureModel& model);

struct PairEstimate {
    double a = 0.0, a_se = 0.0;
    double b = 0.0, b_se = 0.0;
    double diff_se = 0.0;
    double z = 0.0;
    double ess = 0.0;
    std::size_t reps = 0;
};

// a = E_nu[F LG], b = E_nu[G LF].
PairEstimate generator_symmetry(const Torus& geom, const CylinderFunctional& F, const CylinderFunctional& G,
                                const MeasureModel& model, std::size_t reps, RandomStream& rng, int quad_nodes = 128);
// a = E_nu[F (-LG)], b = E(F, G) from the carre du champ.
PairEstimate form_identity(const Torus& geom, const CylinderFunctional& F, const CylinderFunctional& G,
                           const MeasureModel& model, std::size_t reps, RandomStream& rng, int quad_nodes = 128);

}  // namespace qflow
