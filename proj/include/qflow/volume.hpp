#pragma once

#include <functional>
#include <vector>

#include "qflow/rng.hpp"
#include "qflow/stats.hpp"

namespace qflow {

// dV = nσ√V dB is BESQ(0) in X = 4V/c² with c = nσ.  `c` below is that
// diffusion coefficient.
double besq0_transition(double v0, double t, double c, RandomStream& rng);
double besq0_absorption_prob(double v0, double t, double c);
// P(V_t <= v), atom at 0 included.
double besq0_cdf(double v0, double t, double c, double v);

// dV = a (V - b) dt + s √V dB, i.e. mean reversion rate -a towards b.
struct CirSpec {
    double a = 0.0;  // n Q_ref(1) / V_ref
    double b = 0.0;  // rho V_ref
    double s = 0.0;  // n sigma
    bool feller_volume = false;  // 2 (-q_ref)(rho V_ref) >= sigma^2
    bool feller = false;        // 2 kappa b >= s^2, i.e. 2 (-q_ref)(rho V_ref) >= n sigma^2

    double kappa() const { return -a; }
};

CirSpec make_cir_spec(int n, double q_ref, double V_ref, double rho, double sigma);

double cir_transition(const CirSpec& spec, double v0, double t, RandomStream& rng);
double cir_cdf(const CirSpec& spec, double v0, double t, double v);
double cir_mean(const CirSpec& spec, double v0, double t);
double cir_variance(const CirSpec& spec, double v0, double t);

struct GammaLaw {
    double shape;
    double scale;
};
// Needs kappa > 0.
GammaLaw cir_stationary(const CirSpec& spec);
double gamma_cdf(const GammaLaw& law, double v);

// Kolmogorov-Smirnov; both sides need at least 200 samples.
inline constexpr std::size_t kMinLawSamples = 200;
KsResult compare_laws(const std::vector<double>& a, const std::vector<double>& b);
KsResult compare_laws(const std::vector<double>& a, const std::function<double(double)>& cdf);

}  // namespace qflow
