#include "qflow/volume.hpp"

#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/non_central_chi_squared.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/random/gamma_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>

#include "qflow/errors.hpp"

namespace qflow {

namespace {

long poisson(double mean, RandomStream& rng) {
    if (mean <= 0.0) return 0;
    return boost::random::poisson_distribution<long, double>(mean)(rng);
}

double gamma_variate(double shape, RandomStream& rng) {
    if (shape <= 0.0) return 0.0;
    return boost::random::gamma_distribution<double>(shape, 1.0)(rng);
}

void check_besq(double v0, double t, double c) {
    require(v0 >= 0.0 && std::isfinite(v0), "negative initial volume");
    require(t > 0.0, "time must be positive");
    require(c > 0.0, "diffusion coefficient must be positive");
}

// c(t) = s² (1 - e^{-κt}) / (4κ), with the κ → 0 limit s² t / 4.
double cir_scale(const CirSpec& sp, double t) {
    const double k = sp.kappa();
    if (std::abs(k * t) < 1e-12) return sp.s * sp.s * t / 4.0;
    return -sp.s * sp.s * std::expm1(-k * t) / (4.0 * k);
}

}  // namespace

double besq0_transition(double v0, double t, double c, RandomStream& rng) {
    check_besq(v0, t, c);
    const double x0 = 4.0 * v0 / (c * c);
    const long N = poisson(x0 / (2.0 * t), rng);
    const double x = 2.0 * t * gamma_variate(double(N), rng);
    return x * c * c / 4.0;
}

double besq0_absorption_prob(double v0, double t, double c) {
    check_besq(v0, t, c);
    return std::exp(-2.0 * v0 / (c * c * t));
}

double besq0_cdf(double v0, double t, double c, double v) {
    check_besq(v0, t, c);
    if (v < 0.0) return 0.0;
    const double mu = 2.0 * v0 / (c * c * t);  // Poisson mean x0 / (2t)
    const double y = 2.0 * v / (c * c * t);     // x / (2t)
    double total = std::exp(-mu);
    if (mu == 0.0 || v == 0.0) return total;
    // sum_k≥1 Pois(k; mu) P(k, y), walking outwards from the mode
    const long mode = std::max(1L, long(mu));
    auto term = [&](long k) {
        return std::exp(-mu + k * std::log(mu) - std::lgamma(k + 1.0)) * boost::math::gamma_p(double(k), y);
    };
    for (long k = mode; k >= 1; --k) {
        const double tk = term(k);
        total += tk;
        if (k < mode && tk < 1e-17 * total) break;
    }
    for (long k = mode + 1;; ++k) {
        const double tk = term(k);
        total += tk;
        if (tk < 1e-17 * total && k > mu) break;
    }
    return std::min(total, 1.0);
}

CirSpec make_cir_spec(int n, double q_ref, double V_ref, double rho, double sigma) {
    require(n > 0 && V_ref > 0.0 && sigma > 0.0, "invalid CIR parameters");
    CirSpec sp;
    sp.a = n * q_ref;  // n Q_ref(1) / V_ref
    sp.b = rho * V_ref;
    sp.s = n * sigma;
    sp.feller_volume = 2.0 * (-q_ref) * (rho * V_ref) >= sigma * sigma;
    sp.feller = 2.0 * sp.kappa() * sp.b >= sp.s * sp.s;
    return sp;
}

double cir_transition(const CirSpec& sp, double v0, double t, RandomStream& rng) {
    require(t > 0.0, "time must be positive");
    require(v0 >= 0.0 && sp.s > 0.0, "invalid CIR state");
    const double cs = cir_scale(sp, t);
    const double d = 4.0 * sp.kappa() * sp.b / (sp.s * sp.s);
    require(d >= 0.0, "CIR dimension must be nonnegative");
    const double lam = v0 * std::exp(-sp.kappa() * t) / cs;
    const long N = poisson(lam / 2.0, rng);
    // chi²_{d+2N} = 2 Gamma((d + 2N)/2)
    return cs * 2.0 * gamma_variate(d / 2.0 + double(N), rng);
}

double cir_cdf(const CirSpec& sp, double v0, double t, double v) {
    require(t > 0.0, "time must be positive");
    if (v <= 0.0) return 0.0;
    const double cs = cir_scale(sp, t);
    const double d = 4.0 * sp.kappa() * sp.b / (sp.s * sp.s);
    require(d > 0.0, "CIR cdf needs a positive dimension");
    const double lam = v0 * std::exp(-sp.kappa() * t) / cs;
    if (lam == 0.0) return boost::math::cdf(boost::math::chi_squared_distribution<double>(d), v / cs);
    return boost::math::cdf(boost::math::non_central_chi_squared_distribution<double>(d, lam), v / cs);
}

double cir_mean(const CirSpec& sp, double v0, double t) {
    return sp.b + (v0 - sp.b) * std::exp(-sp.kappa() * t);
}

double cir_variance(const CirSpec& sp, double v0, double t) {
    const double k = sp.kappa(), s2 = sp.s * sp.s;
    if (std::abs(k * t) < 1e-12) return v0 * s2 * t;
    const double e = std::exp(-k * t), om = -std::expm1(-k * t);
    return v0 * s2 * e * om / k + sp.b * s2 * om * om / (2.0 * k);
}

GammaLaw cir_stationary(const CirSpec& sp) {
    require(sp.kappa() > 0.0, "stationary law needs mean reversion");
    require(sp.b > 0.0, "stationary law needs a positive level");
    return {2.0 * sp.kappa() * sp.b / (sp.s * sp.s), sp.s * sp.s / (2.0 * sp.kappa())};
}

double gamma_cdf(const GammaLaw& law, double v) {
    if (v <= 0.0) return 0.0;
    return boost::math::gamma_p(law.shape, v / law.scale);
}

KsResult compare_laws(const std::vector<double>& a, const std::vector<double>& b) {
    require(a.size() >= kMinLawSamples && b.size() >= kMinLawSamples, "insufficient samples");
    return ks_two_sample(a, b);
}

KsResult compare_laws(const std::vector<double>& a, const std::function<double(double)>& cdf) {
    require(a.size() >= kMinLawSamples, "insufficient samples");
    return ks_one_sample(a, cdf);
}

}  // namespace qflow
