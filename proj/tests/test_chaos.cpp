#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "qflow/chaos.hpp"
#include "qflow/errors.hpp"
#include "qflow/stats.hpp"

using namespace qflow;

namespace {

constexpr double pi = std::numbers::pi;

// k_N(0, z) by the explicit cosine sum (n = 2, a_2 = 1/(2 pi)).
double kernel2(double L, int N, double z0, double z1) {
    double s = 0.0;
    for (int k0 = -N; k0 <= N; ++k0)
        for (int k1 = -N; k1 <= N; ++k1) {
            if (k0 == 0 && k1 == 0) continue;
            const double lam = std::pow(2 * pi / L, 2) * (k0 * k0 + k1 * k1);
            s += 2 * pi * std::cos(2 * pi * (k0 * z0 + k1 * z1) / L) / (lam * L * L);
        }
    return s;
}

// E[M(1)^2] at grid level: sum_{i,j} dV^2 exp(gamma^2 k_N(x_i - x_j)).
double second_moment_oracle(double L, int G, int N, double gamma) {
    const double dV = std::pow(L / G, 2);
    double s = 0.0;
    for (int i = 0; i < G; ++i)
        for (int j = 0; j < G; ++j) s += std::exp(gamma * gamma * kernel2(L, N, i * L / G, j * L / G));
    return L * L * dV * s;
}

double corr(const std::vector<double>& a, const std::vector<double>& b) {
    RunningStats sa, sb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sa.add(a[i]);
        sb.add(b[i]);
    }
    double c = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) c += (a[i] - sa.mean()) * (b[i] - sb.mean());
    return c / double(a.size() - 1) / std::sqrt(sa.variance() * sb.variance());
}

}  // namespace

TEST_CASE("build_gmc basics") {
    Torus g(2, 2 * pi, 32, 8);
    RandomStream rng(10, 0);
    auto psi = sample_cgf(g, rng);
    auto m0 = build_gmc(g, psi, 0.0);
    CHECK(m0.total() == doctest::Approx(4 * pi * pi).epsilon(1e-13));
    for (double c : m0.cells) CHECK(c == doctest::Approx(g.cell_volume()).epsilon(1e-14));
    CHECK_THROWS_WITH(build_gmc(g, psi, 2.0), "supercritical gamma");
    CHECK_THROWS_WITH(build_gmc(g, psi, 2.5), "supercritical gamma");
    CHECK_NOTHROW(build_gmc(g, psi, 1.99));

    // counterterm N = 1: Var psi_1(x) = 3/pi by the brute force sum over the eight frequencies
    Torus g1(2, 2 * pi, 8, 1);
    for (double gam : {0.3, 1.0, 1.7}) {
        auto m = build_gmc(g1, g1.zeros(), gam);
        CHECK(m.counterterm == doctest::Approx(gam * gam / 2 * 3.0 / pi).epsilon(1e-14));
    }
}

TEST_CASE("expected total mass is exact at truncation") {
    Torus g(2, 2 * pi, 32, 8);
    CgfSampler sampler(g);
    RandomStream rng(11, 0);
    const double c = 0.4, gam = 1.2;
    RunningStats tot;
    FieldCoeffs psi;
    for (int r = 0; r < 10000; ++r) {
        sampler.draw(rng, psi);
        tot.add(build_gmc(g, psi, gam, c).total());
    }
    const double target = 4 * pi * pi * std::exp(gam * c);
    CHECK(std::abs(tot.mean() - target) < 3 * tot.stderr_mean());
}

TEST_CASE("shift property") {
    Torus g(2, 2 * pi, 32, 8);
    RandomStream rng(12, 0);
    auto psi = sample_cgf(g, rng);
    const double gam = 1.1;
    auto m = build_gmc(g, psi, gam);
    auto same = gmc_shift(g, m, g.zeros());
    for (std::size_t i = 0; i < m.cells.size(); ++i) CHECK(same.cells[i] == m.cells[i]);

    auto mc = gmc_shift(g, m, g.constant(0.7));
    CHECK(mc.total() == doctest::Approx(m.total() * std::exp(gam * 0.7)).epsilon(1e-13));

    for (int t = 0; t < 5; ++t) {
        FieldCoeffs h = g.zeros();
        for (std::size_t a = 1; a < g.num_modes(); ++a) {
            const auto& k = g.modes()[a].k;
            if (std::abs(k[0]) <= 2 && std::abs(k[1]) <= 2) h[a] = rng.normal();
        }
        auto direct = build_gmc(g, psi.field + h, gam);
        auto shifted = gmc_shift(g, m, h);
        double worst = 0.0;
        for (std::size_t i = 0; i < m.cells.size(); ++i)
            worst = std::max(worst, std::abs(direct.cells[i] / shifted.cells[i] - 1.0));
        CHECK(worst < 1e-12);
        CHECK(direct.counterterm == shifted.counterterm);
    }
}

TEST_CASE("weighted ground measure") {
    Torus g(2, 2 * pi, 32, 8);
    GridValues lam(g.num_cells());
    for (std::size_t i = 0; i < lam.size(); ++i) lam[i] = 1.0 + 0.3 * std::sin(g.point(i)[0]);
    const double mass = g.quadrature(lam);
    CgfSampler sampler(g);
    RandomStream rng(13, 0);
    RunningStats tot;
    FieldCoeffs psi;
    for (int r = 0; r < 10000; ++r) {
        sampler.draw(rng, psi);
        tot.add(build_gmc_weighted(g, psi, 1.0, lam).total());
    }
    CHECK(std::abs(tot.mean() - mass) < 3 * tot.stderr_mean());
    // rho must stay below sqrt(2n)/gamma - 1 = 0.25 at gamma = 1.6
    CHECK_THROWS_WITH(build_gmc_weighted(g, psi, 1.6, lam), "ground density outside the admissible band");
}

TEST_CASE("moment scan against the double-integral oracle") {
    const double L = 2 * pi, gam = 1.0;  // gamma = 0.5 sqrt(2n), threshold 2n/gamma^2 = 4
    RandomStream rng(14, 0);
    const std::vector<int> Ns = {2, 4, 8};
    auto scan = gmc_moment_scan(2, L, 32, Ns, gam, {0.0, 1.0, 2.0}, 10000, rng);
    CHECK(scan.threshold == doctest::Approx(4.0));
    std::vector<double> oracle;
    for (std::size_t iN = 0; iN < Ns.size(); ++iN) {
        const auto& p0 = scan.rows[iN * 3 + 0];
        const auto& p1 = scan.rows[iN * 3 + 1];
        const auto& p2 = scan.rows[iN * 3 + 2];
        CHECK(p0.mean == 1.0);
        CHECK(std::abs(p1.mean - L * L) < 3 * p1.se);
        oracle.push_back(second_moment_oracle(L, 32, Ns[iN], gam));
        MESSAGE("N=" << Ns[iN] << " E[M^2] = " << p2.mean << " +- " << p2.se << " oracle " << oracle.back());
        CHECK(std::abs(p2.mean - oracle.back()) < 3 * p2.se);
    }
    // the oracle stabilizes: increments shrink with N
    CHECK(oracle[2] - oracle[1] < oracle[1] - oracle[0]);
    CHECK(std::abs(scan.log_slope[0]) < 1e-12);
    CHECK(scan.predicted_finite(2));
    CHECK_THROWS(gmc_moment_scan(2, L, 32, Ns, gam, {1.0}, 10, rng));
}

TEST_CASE("second moment blows up above the threshold") {
    // gamma^2 >= n: the exact second moment grows without bound in N
    const double L = 2 * pi;
    const double lo = second_moment_oracle(L, 64, 8, 1.6);
    const double hi = second_moment_oracle(L, 64, 32, 1.6);
    CHECK(hi > 2 * lo);
    const double lo_ok = second_moment_oracle(L, 64, 8, 0.8);
    const double hi_ok = second_moment_oracle(L, 64, 32, 0.8);
    CHECK(hi_ok < 1.2 * lo_ok);
}

TEST_CASE("inversion: small gamma recovers low modes") {
    Torus g(2, 2 * pi, 128, 8);
    const double cell = 2 * pi / 128;
    const double gam = 0.05 * 2.0;
    InversionPlan plan;
    plan.eps_list = {6 * cell, 4 * cell, 2.5 * cell};
    plan.mc_reps = 40;
    RandomStream rng(15, 0);
    calibrate(g, gam, plan, rng);
    RandomStream draw(15, 1);
    double num = 0, den = 0;
    std::vector<double> err_by_eps(plan.eps_list.size(), 0.0);
    for (int r = 0; r < 10; ++r) {
        auto psi = sample_cgf(g, draw);
        auto m = build_gmc(g, psi, gam);
        for (std::size_t e = 0; e < plan.eps_list.size(); ++e) {
            auto rec = invert_gmc(g, m, plan, e).grounded();
            double ne = 0, de = 0;
            for (std::size_t a = 1; a < g.num_modes(); ++a) {
                const auto& k = g.modes()[a].k;
                if (std::abs(k[0]) > 2 || std::abs(k[1]) > 2) continue;
                ne += std::pow(rec[a] - psi.field[a], 2);
                de += std::pow(psi.field[a], 2);
            }
            err_by_eps[e] += std::sqrt(ne / de);
            if (e + 1 == plan.eps_list.size()) {
                num += ne;
                den += de;
            }
        }
    }
    MESSAGE("relative L2 error at smallest eps " << std::sqrt(num / den));
    CHECK(std::sqrt(num / den) < 0.05);
    CHECK(err_by_eps[1] < err_by_eps[0]);
    CHECK(err_by_eps[2] < err_by_eps[1]);
}

TEST_CASE("inversion: shift equivariance and errors") {
    Torus g(2, 2 * pi, 64, 8);
    const double cell = 2 * pi / 64;
    InversionPlan plan;
    plan.eps_list = {3 * cell};
    plan.mc_reps = 10;
    RandomStream rng(16, 0);
    calibrate(g, 0.8, plan, rng);
    auto psi = sample_cgf(g, rng);
    auto m = build_gmc(g, psi, 0.8);
    const double c = 0.35;
    auto a = invert_gmc(g, m, plan, 0);
    auto b = invert_gmc(g, gmc_shift(g, m, g.constant(c)), plan, 0);
    const double rootV = std::sqrt(g.volume());
    CHECK(std::abs((b.field[0] - a.field[0]) / rootV - c) < 1e-10);
    for (std::size_t k = 1; k < g.num_modes(); ++k) CHECK(std::abs(b.field[k] - a.field[k]) < 1e-10);
    CHECK(a.floor_hits == 0);

    GmcMeasure dead = m;
    std::fill(dead.cells.begin(), dead.cells.begin() + 64 * 10, 0.0);
    CHECK_THROWS_WITH(invert_gmc(g, dead, plan, 0), "degenerate measure for inversion");
    InversionPlan tight = plan;
    tight.eps_list = {1.5 * cell};
    CHECK_THROWS_WITH(invert_gmc(g, m, tight, 0), "mollification radius below two grid cells");
    InversionPlan raw;
    raw.eps_list = {3 * cell};
    CHECK_THROWS_WITH(invert_gmc(g, m, raw, 0), "inversion plan is not calibrated");
}

TEST_CASE("inversion: recovery correlation across replicas") {
    Torus g(2, 2 * pi, 64, 8);
    const double cell = 2 * pi / 64;
    const double gam = 0.3 * 2.0;
    InversionPlan plan;
    plan.eps_list = {2.5 * cell};
    plan.mc_reps = 50;
    RandomStream rng(17, 0);
    calibrate(g, gam, plan, rng);
    auto h = g.trig({1, 0}) + g.trig({0, 1}, true) + 0.5 * g.trig({1, 1});
    std::vector<double> truth, rec;
    RandomStream draw(17, 1);
    for (int r = 0; r < 100; ++r) {
        auto psi = sample_cgf(g, draw);
        truth.push_back(l2_inner(psi.field, h));
        rec.push_back(l2_inner(invert_gmc(g, build_gmc(g, psi, gam), plan, 0).grounded(), h));
    }
    const double rho = corr(truth, rec);
    MESSAGE("recovery correlation " << rho);
    CHECK(rho > 0.9);
}

TEST_CASE("counterterm is translation invariant") {
    Torus g(2, 2 * pi, 64, 8);
    InversionPlan plan;
    plan.eps_list = {3 * 2 * pi / 64};
    plan.mc_reps = 400;
    RandomStream r1(18, 0), r2(18, 1);
    auto a = estimate_counterterm(g, 1.0, plan, r1, 0);
    auto b = estimate_counterterm(g, 1.0, plan, r2, 2080);
    MESSAGE("F at two points: " << a.F[0] << " +- " << a.se[0] << ", " << b.F[0] << " +- " << b.se[0]);
    CHECK(std::abs(a.F[0] - b.F[0]) < 3 * std::hypot(a.se[0], b.se[0]));
    CHECK(std::isfinite(a.F[0]));
}
