#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <numbers>

#include "qflow/errors.hpp"
#include "qflow/fields.hpp"
#include "qflow/stats.hpp"

using namespace qflow;

namespace {

constexpr double pi = std::numbers::pi;

// k_N(0, z) by the explicit double-cosine sum over the frequency cube (n = 2).
double kernel2(double L, int N, double z0, double z1) {
    const double a = 1.0 / (2.0 * pi);
    double s = 0.0;
    for (int k0 = -N; k0 <= N; ++k0)
        for (int k1 = -N; k1 <= N; ++k1) {
            if (k0 == 0 && k1 == 0) continue;
            const double lam = std::pow(2 * pi / L, 2) * (k0 * k0 + k1 * k1);
            s += std::cos(2 * pi * (k0 * z0 + k1 * z1) / L) / (a * lam * L * L);
        }
    return s;
}

}  // namespace

TEST_CASE("CGF mode variances, kurtosis and grounding") {
    Torus g(2, 2 * pi, 32, 8);
    CgfSampler sampler(g);
    RandomStream rng(2024, 0);
    const int reps = 100000;
    std::vector<int> watch;
    for (std::size_t a = 1; a < g.num_modes(); ++a) {
        const auto& k = g.modes()[a].k;
        if (std::abs(k[0]) <= 2 && std::abs(k[1]) <= 2) watch.push_back(int(a));
    }
    CHECK(watch.size() == 24);
    std::vector<RunningStats> sq(watch.size()), fourth(watch.size());
    FieldCoeffs f;
    double worst_mean = 0.0;
    for (int r = 0; r < reps; ++r) {
        sampler.draw(rng, f);
        REQUIRE(f[0] == 0.0);
        for (std::size_t w = 0; w < watch.size(); ++w) {
            const double x = f[watch[w]];
            sq[w].add(x * x);
            fourth[w].add(x * x * x * x);
        }
        if (r < 50) worst_mean = std::max(worst_mean, std::abs(g.quadrature(g.to_grid(f))));
    }
    CHECK(worst_mean < 1e-12);
    for (std::size_t w = 0; w < watch.size(); ++w) {
        const auto& m = g.modes()[watch[w]];
        const double target = 1.0 / (g.a_n() * m.Lambda);
        CHECK(std::abs(sq[w].mean() - target) < 3.0 * sq[w].stderr_mean());
        // kurtosis m4/m2^2 against 3; delta-method SE ~ sqrt(96/reps) for a normal
        const double kurt = fourth[w].mean() / (sq[w].mean() * sq[w].mean());
        CHECK(std::abs(kurt - 3.0) < 3.0 * std::sqrt(96.0 / reps));
    }
}

TEST_CASE("CGF covariance of L2 pairings matches the kernel double integral") {
    const double L = 2 * pi;
    Torus g(2, L, 32, 8);
    // u, v fixed low-mode test functions
    auto u = g.trig({1, 0}) + 0.5 * g.trig({1, 1}, true);
    auto v = g.trig({1, 0}) + g.trig({0, 2});
    auto ug = g.to_grid(u), vg = g.to_grid(v);
    const int G = 32;
    std::vector<double> row(G * G);
    for (int i = 0; i < G; ++i)
        for (int j = 0; j < G; ++j) row[i * G + j] = kernel2(L, 8, i * L / G, j * L / G);
    double oracle = 0.0;
    for (int a = 0; a < G * G; ++a)
        for (int b = 0; b < G * G; ++b) {
            const int di = ((a / G - b / G) % G + G) % G, dj = ((a % G - b % G) % G + G) % G;
            oracle += ug[a] * row[di * G + dj] * vg[b];
        }
    oracle *= g.cell_volume() * g.cell_volume();

    CgfSampler sampler(g);
    RandomStream rng(77, 3);
    RunningStats prod;
    FieldCoeffs f;
    for (int r = 0; r < 100000; ++r) {
        sampler.draw(rng, f);
        prod.add(l2_inner(f, u) * l2_inner(f, v));
    }
    MESSAGE("covariance oracle " << oracle << " estimate " << prod.mean() << " +- " << prod.stderr_mean());
    CHECK(std::abs(prod.mean() - oracle) < 3.0 * prod.stderr_mean());
    // the oracle equals the diagonal spectral form for these modes
    CHECK(oracle == doctest::Approx(std::pow(L, 2) / 2 / (1.0 / (2 * pi))).epsilon(1e-10));
}

TEST_CASE("E pairing with CGF samples") {
    Torus g(2, 2 * pi, 32, 8);
    CgfSampler sampler(g);
    RandomStream rng(5, 9);
    auto h = g.trig({1, 2}) + 0.3 * g.trig({2, 0}, true) + g.constant(4.0);
    const int idx = g.mode_index({2, 1}, ModeKind::cosine);
    REQUIRE(idx > 0);
    FieldCoeffs e = g.zeros();
    e[idx] = 1.0;
    RunningStats sq;
    for (int r = 0; r < 100000; ++r) {
        auto s = sampler.sample(rng);
        CHECK(pair_with_E(g, g.constant(1.0), s) == 0.0);
        if (r < 10) {
            const double lhs = pair_with_E(g, e, s);
            CHECK(lhs == doctest::Approx(g.a_n() * g.modes()[idx].Lambda * s.field[idx]).epsilon(1e-14));
        }
        const double x = pair_with_E(g, h, s);
        sq.add(x * x);
    }
    CHECK(std::abs(sq.mean() - pairing_E(g, h, h)) < 3.0 * sq.stderr_mean());
}

TEST_CASE("Cameron-Martin shift moves pairings linearly") {
    Torus g(2, 2 * pi, 32, 8);
    RandomStream rng(1, 1);
    auto s = sample_cgf(g, rng);
    auto h = g.trig({1, 1}) + g.trig({0, 3}, true);
    auto k = g.trig({1, 1}) + 2.0 * g.trig({2, 3});
    const double t = 0.37;
    CgfSample shifted = s;
    shifted.field = s.field + t * apply_operator(g, Operator::green, apply_operator(g, Operator::p, h));
    const double lhs = pair_with_E(g, k, shifted);
    const double rhs = pair_with_E(g, k, s) + t * pairing_E(g, k, h);
    CHECK(std::abs(lhs - rhs) < 1e-12 * (1.0 + std::abs(rhs)));
}

TEST_CASE("pointwise variance") {
    // n=2, L=2pi, N=1: the eight frequencies with |k|_inf = 1.  Brute force:
    // four with |k|=1 give 2 pi / (4 pi^2) each, four with |k|^2=2 give pi / (4 pi^2).
    Torus g(2, 2 * pi, 8, 1);
    const double brute = (4 * 2 * pi + 4 * pi) / (4 * pi * pi);
    CHECK(cgf_pointwise_variance(g) == doctest::Approx(3.0 / pi).epsilon(1e-14));
    CHECK(brute == doctest::Approx(3.0 / pi).epsilon(1e-14));
    const std::vector<double> x = {0.3, 1.7};
    CHECK(truncated_kernel(g, x, x) == doctest::Approx(3.0 / pi).epsilon(1e-13));
}

TEST_CASE("mollifier normalization and resolution guard") {
    Torus g(2, 2 * pi, 64, 8);
    const double cell = 2 * pi / 64;
    CHECK_THROWS_WITH(MollifierFamily(g, 1.0 / (0.9 * cell)), "mollifier support smaller than grid resolution");
    for (double cells : {1.5, 2.5, 6.0}) {
        MollifierFamily fam(g, 1.0 / (cells * cell));
        CHECK(g.quadrature(fam.kernel_row()) == doctest::Approx(1.0).epsilon(1e-10));
        for (double w : fam.kernel_row()) CHECK(w >= 0.0);
    }
}

TEST_CASE("mollified kernel diagonal: constant and equal to the double quadrature") {
    const double L = 2 * pi;
    const int G = 32;
    Torus g(2, L, G, 8);
    MollifierFamily fam(g, 1.0 / (2.5 * L / G));
    auto diag = mollified_kernel_diag(g, fam);
    const auto [lo, hi] = std::minmax_element(diag.begin(), diag.end());
    CHECK(*hi - *lo < 1e-8);

    // oracle: sum_{x', y'} q(x - x') k_N(x', y') q(x - y') dV^2 with k_N from the cosine sum
    std::vector<double> row(G * G);
    for (int i = 0; i < G; ++i)
        for (int j = 0; j < G; ++j) row[i * G + j] = kernel2(L, 8, i * L / G, j * L / G);
    std::vector<int> supp;
    for (int i = 0; i < G * G; ++i)
        if (fam.kernel_row()[i] > 0) supp.push_back(i);
    RandomStream rng(31, 0);
    for (int t = 0; t < 10; ++t) {
        const int x = int(rng.uniform() * G * G);
        double s = 0.0;
        for (int a : supp)
            for (int b : supp) {
                // x' = x - a, y' = x - b ; k_N(x', y') depends on b - a
                const int di = ((b / G - a / G) % G + G) % G, dj = ((b % G - a % G) % G + G) % G;
                s += fam.kernel_row()[a] * fam.kernel_row()[b] * row[di * G + dj];
            }
        s *= g.cell_volume() * g.cell_volume();
        CHECK(std::abs(s - diag[x]) < 1e-9);
    }
}

TEST_CASE("mollified field converges to the field as the support shrinks") {
    // fixed truncation, support held at two cells while the grid refines
    const double L = 2 * pi;
    double prev = 1e300;
    for (int G : {32, 64, 128, 256}) {
        Torus g(2, L, G, 4);
        RandomStream rng(8, 0);
        auto s = sample_cgf(g, rng);
        MollifierFamily fam(g, 1.0 / (2.0 * L / G));
        auto m = mollified_field(g, fam, s);
        auto f = g.to_grid(s.field);
        double err = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i) err = std::max(err, std::abs(m[i] - f[i]));
        MESSAGE("G=" << G << " max |psi^j - psi| = " << err);
        CHECK(err < 0.5 * prev);
        prev = err;
    }
    CHECK(prev < 0.01);
}

TEST_CASE("continuum mollifier multiplier agrees with a fine grid kernel") {
    Torus g(2, 2 * pi, 256, 8);
    MollifierFamily fam(g, 1.0 / 0.6);
    for (std::vector<int> k : {std::vector<int>{1, 0}, {3, 2}, {5, 5}, {0, 8}}) {
        const double xi = 2 * pi * std::sqrt(double(k[0] * k[0] + k[1] * k[1])) / g.length();
        CHECK(fam.grid_multiplier_at(k) == doctest::Approx(fam.continuum_multiplier(xi)).epsilon(2e-3));
    }
    CHECK(fam.continuum_multiplier(0.0) == 1.0);
}

TEST_CASE("mollified kernel converges off the diagonal") {
    const double L = 2 * pi;
    Torus g(2, L, 64, 8);
    RandomStream rng(4, 4);
    double worst = 0.0;
    auto fam = MollifierFamily::continuum_only(g, 1e4);
    for (int t = 0; t < 20; ++t) {
        std::vector<double> x = {rng.uniform() * L, rng.uniform() * L};
        std::vector<double> y = {rng.uniform() * L, rng.uniform() * L};
        if (g.distance(x, y) <= L / 8) continue;
        const double diff = mollified_kernel(g, fam, x, y, KernelDiscretization::continuum) - truncated_kernel(g, x, y);
        worst = std::max(worst, std::abs(diff));
    }
    CHECK(worst < 1e-6);
    // coarser supports are further away
    MollifierFamily wide(g, 2.0);
    std::vector<double> x = {0.0, 0.0}, y = {2.0, 1.0};
    CHECK(std::abs(mollified_kernel(g, wide, x, y, KernelDiscretization::continuum) - truncated_kernel(g, x, y)) > 1e-4);
}
