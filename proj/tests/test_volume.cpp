#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <memory>
#include <numbers>

#include "qflow/errors.hpp"
#include "qflow/volume.hpp"

using namespace qflow;

namespace {

constexpr double pi = std::numbers::pi;

// Brute-force Euler for dV = kappa (b - V) dt + s sqrt(V) dB, absorbed at 0.
std::vector<double> euler_paths(double v0, double t, double kappa, double b, double s, double dt, int paths,
                                RandomStream& rng) {
    std::vector<double> out;
    const int steps = int(std::lround(t / dt));
    for (int p = 0; p < paths; ++p) {
        double v = v0;
        for (int k = 0; k < steps && v > 0.0; ++k) v += kappa * (b - v) * dt + s * std::sqrt(v * dt) * rng.normal();
        out.push_back(std::max(v, 0.0));
    }
    return out;
}

}  // namespace

TEST_CASE("BESQ0 sampler basics") {
    RandomStream rng(1, 0);
    for (int k = 0; k < 100; ++k) CHECK(besq0_transition(0.0, 1.0, 2.0, rng) == 0.0);
    CHECK(besq0_absorption_prob(0.0, 1.0, 2.0) == 1.0);
    CHECK_THROWS(besq0_transition(-1.0, 1.0, 2.0, rng));
    CHECK_THROWS(besq0_absorption_prob(1.0, 0.0, 2.0));
    RunningStats m;
    for (int k = 0; k < 100000; ++k) m.add(besq0_transition(1.5, 0.7, 1.6, rng));
    CHECK(std::abs(m.mean() - 1.5) < 3 * m.stderr_mean());
}

TEST_CASE("BESQ0 absorption and law against fine-step Euler") {
    // c = n sigma = 2, v0 = 0.05, t = 0.05: absorption exp(-1/2)
    const double v0 = 0.05, t = 0.05, c = 2.0;
    RandomStream rng(2, 0), erng(2, 1);
    auto euler = euler_paths(v0, t, 0.0, 0.0, c, 1e-5, 4000, erng);
    RunningStats absorbed;
    for (double v : euler) absorbed.add(v == 0.0 ? 1.0 : 0.0);
    const double p = besq0_absorption_prob(v0, t, c);
    MESSAGE("Euler absorption " << absorbed.mean() << " +- " << absorbed.stderr_mean() << " exact " << p);
    CHECK(std::abs(absorbed.mean() - p) < 3 * absorbed.stderr_mean());
    std::vector<double> exact;
    RunningStats atom;
    for (int k = 0; k < 4000; ++k) {
        exact.push_back(besq0_transition(v0, t, c, rng));
        atom.add(exact.back() == 0.0 ? 1.0 : 0.0);
    }
    CHECK(std::abs(atom.mean() - p) < 3 * atom.stderr_mean());
    auto ks = compare_laws(exact, euler);
    MESSAGE("exact vs Euler KS p = " << ks.p_value);
    CHECK(ks.p_value > 0.01);
    auto self = compare_laws(exact, [&](double v) { return besq0_cdf(v0, t, c, v); });
    CHECK(self.p_value > 0.01);
}

TEST_CASE("BESQ0 scale consistency") {
    // V with coefficient c maps to X = 4V/c^2, a standard BESQ0 (c = 2)
    const double v0 = 3.0, t = 0.8, c = 1.3;
    RandomStream r1(3, 0), r2(3, 1);
    std::vector<double> a, b;
    for (int k = 0; k < 5000; ++k) {
        a.push_back(4 * besq0_transition(v0, t, c, r1) / (c * c));
        b.push_back(besq0_transition(4 * v0 / (c * c), t, 2.0, r2));
    }
    CHECK(compare_laws(a, b).p_value > 0.01);
    CHECK(besq0_cdf(v0, t, c, 2.0) == doctest::Approx(besq0_cdf(4 * v0 / (c * c), t, 2.0, 8.0 / (c * c))).epsilon(1e-13));
}

TEST_CASE("CIR spec and Feller flags") {
    // n = 2, V_ref = 4 pi^2, q = -0.05, rho = 1: 2(-q) rho V = 3.95
    auto both = make_cir_spec(2, -0.05, 4 * pi * pi, 1.0, 1.0);
    CHECK(both.feller_volume);
    CHECK(both.feller);
    // sigma^2 = 3 satisfies 2(-q) rho V >= sigma^2 but not 2 kappa b >= s^2
    auto volume_only = make_cir_spec(2, -0.05, 4 * pi * pi, 1.0, std::sqrt(3.0));
    CHECK(volume_only.feller_volume);
    CHECK(!volume_only.feller);
    CHECK(both.kappa() == doctest::Approx(0.1));
    CHECK(both.b == doctest::Approx(4 * pi * pi));
    auto st = cir_stationary(both);
    // shape 2(-q) rho V / (n sigma^2), scale n sigma^2 / (2|q|)
    CHECK(st.shape == doctest::Approx(2 * 0.05 * 4 * pi * pi / 2));
    CHECK(st.scale == doctest::Approx(2.0 / 0.1));
    CHECK_THROWS(cir_transition(both, 1.0, 0.0, *std::make_unique<RandomStream>(0, 0)));
}

TEST_CASE("CIR closed-form moments against fine-step Euler and the exact sampler") {
    auto sp = make_cir_spec(2, -0.5, 4 * pi * pi, 1.2, 0.6);
    const double v0 = 30.0, t = 0.1;
    RandomStream erng(4, 0), rng(4, 1);
    auto euler = euler_paths(v0, t, sp.kappa(), sp.b, sp.s, 1e-5, 2000, erng);
    RunningStats em, ev, xm, xv;
    const double mu = cir_mean(sp, v0, t), var = cir_variance(sp, v0, t);
    for (double v : euler) {
        em.add(v);
        ev.add((v - mu) * (v - mu));
    }
    std::vector<double> exact;
    for (int k = 0; k < 100000; ++k) {
        const double v = cir_transition(sp, v0, t, rng);
        exact.push_back(v);
        xm.add(v);
        xv.add((v - mu) * (v - mu));
    }
    MESSAGE("mean " << mu << " Euler " << em.mean() << " exact " << xm.mean() << "; var " << var << " Euler "
                    << ev.mean() << " exact " << xv.mean());
    CHECK(std::abs(em.mean() - mu) < 3 * em.stderr_mean());
    CHECK(std::abs(ev.mean() - var) < 3 * ev.stderr_mean());
    CHECK(std::abs(xm.mean() - mu) < 3 * xm.stderr_mean());
    CHECK(std::abs(xv.mean() - var) < 3 * xv.stderr_mean());
    exact.resize(5000);
    CHECK(compare_laws(exact, [&](double v) { return cir_cdf(sp, v0, t, v); }).p_value > 0.01);
}

TEST_CASE("CIR long-run mean and stationary law") {
    auto sp = make_cir_spec(2, -0.5, 4 * pi * pi, 0.8, 1.0);
    RandomStream rng(5, 0);
    std::vector<double> xs;
    RunningStats m;
    for (int k = 0; k < 20000; ++k) {
        xs.push_back(cir_transition(sp, 5.0, 50.0 / sp.kappa(), rng));
        m.add(xs.back());
    }
    CHECK(std::abs(m.mean() - sp.b) < 3 * m.stderr_mean());
    const auto law = cir_stationary(sp);
    CHECK(compare_laws(xs, [&](double v) { return gamma_cdf(law, v); }).p_value > 0.01);
}

TEST_CASE("CIR paths stay positive under the Feller condition") {
    // invariant-regime hypothesis sigma^2 <= -2 Q_ref(1), here also the true Feller condition
    const double q = -0.1, V = 4 * pi * pi;
    auto sp = make_cir_spec(2, q, V, 1.0, 1.0);
    REQUIRE(sp.feller);
    REQUIRE(1.0 <= -2 * q * V);
    RandomStream rng(6, 0);
    double lo = INFINITY;
    for (int p = 0; p < 10000; ++p) {
        double v = V;
        for (int k = 0; k < 50; ++k) {
            v = cir_transition(sp, v, 0.02, rng);
            lo = std::min(lo, v);
        }
    }
    CHECK(lo > 0.0);
}

TEST_CASE("CIR degenerates to BESQ0") {
    CirSpec sp;
    sp.a = -1e-7;
    sp.b = 1e-3;
    sp.s = 1.7;
    RandomStream r1(7, 0), r2(7, 1);
    std::vector<double> a, b;
    for (int k = 0; k < 5000; ++k) {
        a.push_back(cir_transition(sp, 2.0, 0.6, r1));
        b.push_back(besq0_transition(2.0, 0.6, 1.7, r2));
    }
    CHECK(compare_laws(a, b).p_value > 0.01);
}

TEST_CASE("compare_laws calibration") {
    std::vector<double> xs(500);
    RandomStream rng(8, 0);
    for (double& x : xs) x = rng.normal();
    auto same = compare_laws(xs, xs);
    CHECK(same.statistic == 0.0);
    CHECK(same.p_value == 1.0);
    CHECK_THROWS_WITH(compare_laws(std::vector<double>(199, 0.0), xs), "insufficient samples");
    CHECK_THROWS_WITH(compare_laws(std::vector<double>(10, 0.0), normal_cdf), "insufficient samples");

    std::vector<double> ps;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> z(10000);
        RandomStream r(9, trial);
        for (double& x : z) x = r.normal();
        ps.push_back(compare_laws(z, normal_cdf).p_value);
    }
    auto meta = compare_laws(ps, [](double p) { return std::clamp(p, 0.0, 1.0); });
    MESSAGE("meta-test p = " << meta.p_value);
    CHECK(meta.p_value > 0.01);
}
