#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "qflow/cylinder.hpp"
#include "qflow/errors.hpp"
#include "qflow/forms.hpp"
#include "qflow/sampler.hpp"

using namespace qflow;

namespace {

constexpr double pi = std::numbers::pi;

// Random combination of the modes with |k|_inf <= 2.
FieldCoeffs low_mode(const Torus& g, RandomStream& rng, bool with_constant) {
    FieldCoeffs h = g.zeros();
    const auto& modes = g.modes();
    for (std::size_t a = 0; a < modes.size(); ++a) {
        int kmax = 0;
        for (int k : modes[a].k) kmax = std::max(kmax, std::abs(k));
        if (kmax <= 2 && (a > 0 || with_constant)) h[a] = 0.3 * rng.normal();
    }
    return h;
}

CylinderFunctional random_cylinder(const Torus& g, RandomStream& rng, double eps, int extra = 2) {
    std::vector<FieldCoeffs> h{g.constant(1.0)};
    for (int i = 0; i < extra; ++i) h.push_back(low_mode(g, rng, true));
    return make_cylinder(g, h, random_windowed_polynomial(1 + extra, 2, eps, rng));
}

class ConstantInWindow final : public ScalarFn {
public:
    explicit ConstantInWindow(double eps) : eps_(eps) {}
    int arity() const override { return 2; }
    double window() const override { return eps_; }
    Jet jet(const double* x) const override {
        Jet j;
        j.grad = JetVec::Zero(2);
        j.hess = JetMat::Zero(2, 2);
        j.value = x[0] > eps_ && x[0] < 1 / eps_ ? 2.5 : 0.0;
        return j;
    }
    double value_bound(const std::vector<double>&) const override { return 2.5; }
    double gradient_bound(const std::vector<double>&) const override { return 0.0; }

private:
    double eps_;
};

MeasureModel nqf_model(const Torus& g, const FieldCoeffs& f, double sigma) {
    return {FlowKind::NQF, sigma, 1.0, make_prescribing(g, f)};
}

MeasureModel lqf_model(const Torus& g, const FieldCoeffs& f, double sigma, double rho) {
    return {FlowKind::LQF, sigma, rho, make_prescribing(g, f)};
}

FieldCoeffs with_c(const Torus& g, FieldCoeffs psi, double c) {
    psi[0] = c * std::sqrt(g.volume());
    return psi;
}

}  // namespace

TEST_CASE("windowed polynomial partials against central differences") {
    RandomStream rng(1, 0);
    auto q = random_windowed_polynomial(3, 2, 1e-2, rng);
    auto q2 = random_windowed_polynomial(2, 2, 1e-2, rng);
    ProductFn pq(q, {0, 1, 2}, q2, {0, 3});
    for (const ScalarFn* fn : {q.get(), static_cast<const ScalarFn*>(&pq)}) {
        const int k = fn->arity();
        double x[4] = {3.0, -1.2, 0.7, 2.1};
        const Jet j = fn->jet(x);
        for (int i = 0; i < k; ++i) {
            const double hstep = 1e-5 * std::max(1.0, std::abs(x[i]));
            double xp[4], xm[4];
            std::copy(x, x + 4, xp);
            std::copy(x, x + 4, xm);
            xp[i] += hstep;
            xm[i] -= hstep;
            const Jet jp = fn->jet(xp), jm = fn->jet(xm);
            CHECK(j.grad[i] == doctest::Approx((jp.value - jm.value) / (2 * hstep)).epsilon(1e-6));
            for (int l = 0; l < k; ++l)
                CHECK(j.hess(l, i) == doctest::Approx((jp.grad[l] - jm.grad[l]) / (2 * hstep)).epsilon(1e-5).scale(1e-8));
        }
        CHECK(j.hess.isApprox(j.hess.transpose(), 1e-14));
        double out[4] = {200.0, 1.0, 1.0, 1.0};
        CHECK(fn->jet(out).value == 0.0);
    }
}

TEST_CASE("cylinder construction rejects a nonconstant h0") {
    Torus g(2, 2 * pi, 16, 8);
    RandomStream rng(2, 0);
    auto q = random_windowed_polynomial(2, 1, 1e-3, rng);
    CHECK_THROWS_WITH(make_cylinder(g, {g.trig({1, 0}), g.trig({0, 1})}, q), "h_0 must be the constant function 1");
    CHECK_THROWS(make_cylinder(g, {g.constant(1.0)}, q));
    CHECK_NOTHROW(make_cylinder(g, {g.constant(1.0), g.trig({0, 1})}, q));
}

TEST_CASE("Frechet derivative: trivial case, finite differences and the bound") {
    Torus g(2, 2 * pi, 16, 8);
    RandomStream rng(3, 0);
    const double gamma = 0.8;
    const CgfSampler cgf(g);

    auto only_mass = make_cylinder(g, {g.constant(1.0)}, random_windowed_polynomial(1, 3, 1e-3, rng));
    FieldCoeffs psi;
    cgf.draw(rng, psi);
    CHECK(frechet_derivative(g, only_mass, psi, gamma, g.zeros()) == 0.0);

    for (int trial = 0; trial < 5; ++trial) {
        auto G = random_cylinder(g, rng, 1e-3);
        cgf.draw(rng, psi);
        const FieldCoeffs h = low_mode(g, rng, true);
        const GmcMeasure m = build_gmc(g, psi, gamma);
        const double d = frechet_derivative(g, G, m, h);
        const double g0 = evaluate(G, m);
        double err[2];
        int idx = 0;
        for (double t : {1e-3, 1e-4}) {
            const double gt = evaluate(G, gmc_shift(g, m, t * h));
            err[idx++] = std::abs((gt - g0) / t - d);
        }
        MESSAGE("D_hG = " << d << ", errors " << err[0] << " " << err[1]);
        CHECK(err[0] / err[1] == doctest::Approx(10.0).epsilon(0.05));
    }

    for (int trial = 0; trial < 200; ++trial) {
        auto G = random_cylinder(g, rng, 1e-3);
        cgf.draw(rng, psi);
        const FieldCoeffs h = low_mode(g, rng, true);
        const double d = frechet_derivative(g, G, psi, gamma, h);
        REQUIRE(std::abs(d) <= frechet_bound(g, G, gamma, h));
    }
}

TEST_CASE("IBP: h = 1 cases vanish identically") {
    Torus g(2, 2 * pi, 16, 8, 0.02);
    RandomStream rng(4, 0);
    auto G = random_cylinder(g, rng, 1e-3);
    const auto model = nqf_model(g, g.constant(1.0) + 0.3 * g.trig({1, 0}), 1.0);
    IbpOptions opts;
    opts.reps = 200;
    auto grounded = ibp_check(g, IbpTarget::grounded, G, g.constant(1.0), model, opts, rng);
    CHECK(std::abs(grounded.rhs) == 0.0);
    CHECK(std::abs(grounded.lhs) < 1e-10 * std::max(1.0, grounded.lhs_se + 1.0));

    // NQF: the Q_ref terms cancel algebraically and the D_1 G term is a total
    // u-derivative, so both sides vanish up to quadrature error.
    opts.quad_nodes = 1024;
    auto nqf = ibp_check(g, IbpTarget::nqf, G, g.constant(1.0), model, opts, rng);
    MESSAGE("NQF h=1: lhs " << nqf.lhs << " rhs " << nqf.rhs << " (rhs se " << nqf.rhs_se << ")");
    CHECK(nqf.lhs == 0.0);
    CHECK(std::abs(nqf.rhs) < 1e-10 * (1.0 + std::abs(nqf.rhs_se) * std::sqrt(double(opts.reps))));
}

TEST_CASE("IBP: grounded lemma for a windowed polynomial of (omega(1), omega(cos x1))") {
    Torus g(2, 2 * pi, 16, 8);
    RandomStream rng(5, 0);
    auto G = make_cylinder(g, {g.constant(1.0), g.trig({1, 0})}, random_windowed_polynomial(2, 2, 1e-3, rng));
    const FieldCoeffs h = low_mode(g, rng, true);
    const auto model = nqf_model(g, g.constant(1.0), 1.0);
    IbpOptions opts;
    opts.reps = 100000;
    auto r = ibp_check(g, IbpTarget::grounded, G, h, model, opts, rng);
    MESSAGE("grounded: " << r.lhs << " +- " << r.lhs_se << " vs " << r.rhs << " +- " << r.rhs_se << ", z = " << r.z);
    CHECK(std::abs(r.z) < 3.0);
    CHECK(r.ess == doctest::Approx(double(opts.reps)));
}

TEST_CASE("IBP: ungrounded, NQF and LQF identities") {
    Torus g(2, 2 * pi, 16, 8, 0.0);
    RandomStream rng(6, 0);
    IbpOptions opts;
    opts.reps = 20000;
    opts.quad_nodes = 96;
    auto G = random_cylinder(g, rng, 1e-3);
    const FieldCoeffs h = low_mode(g, rng, true);

    auto un = ibp_check(g, IbpTarget::ungrounded, G, h, nqf_model(g, g.constant(1.0), 1.0), opts, rng);
    MESSAGE("ungrounded z = " << un.z);
    CHECK(std::abs(un.z) < 3.0);

    // f constant, q_ref = 0: E[G <h,psi>_E] = E[D_h G]
    auto flat = ibp_check(g, IbpTarget::nqf, G, h, nqf_model(g, g.constant(2.0), 1.0), opts, rng);
    MESSAGE("NQF (degenerate) z = " << flat.z << ", ess " << flat.ess);
    CHECK(std::abs(flat.z) < 3.0);

    Torus gq(2, 2 * pi, 16, 8, 0.02);
    auto nqf = ibp_check(gq, IbpTarget::nqf, G, h, nqf_model(gq, gq.constant(1.0) + 0.3 * gq.trig({1, 1}), 1.0),
                         opts, rng);
    MESSAGE("NQF z = " << nqf.z << ", ess " << nqf.ess);
    CHECK(std::abs(nqf.z) < 3.0);

    Torus gl(2, 2 * pi, 16, 8, -0.05);
    const auto lmodel = lqf_model(gl, -0.05 * (gl.constant(1.0) + 0.3 * gl.trig({0, 1})), 1.0, 1.2);
    CHECK_THROWS_WITH(ibp_check(gl, IbpTarget::lqf, G, h, lmodel, opts, rng),
                      "LQF integration by parts needs a grounded direction h");
    FieldCoeffs hg = h;
    hg[0] = 0.0;
    auto lqf = ibp_check(gl, IbpTarget::lqf, G, hg, lmodel, opts, rng);
    MESSAGE("LQF z = " << lqf.z << ", ess " << lqf.ess);
    CHECK(std::abs(lqf.z) < 3.0);
}

TEST_CASE("IBP z-scores are standard normal across random pairs") {
    Torus g(2, 2 * pi, 16, 8);
    RandomStream rng(7, 0);
    IbpOptions opts;
    opts.reps = 5000;
    const auto model = nqf_model(g, g.constant(1.0), 1.0);
    std::vector<double> zs;
    for (int pair = 0; pair < 40; ++pair) {
        auto G = random_cylinder(g, rng, 1e-3);
        const FieldCoeffs h = low_mode(g, rng, true);
        zs.push_back(ibp_check(g, IbpTarget::grounded, G, h, model, opts, rng).z);
    }
    const auto ks = ks_one_sample(zs, normal_cdf);
    MESSAGE("KS of z-scores p = " << ks.p_value);
    CHECK(ks.p_value > 0.01);
}

TEST_CASE("IBP refuses to report at low effective sample size") {
    // Q_ref(1) at 95% of the moment bound: the weights have no second moment
    Torus g(2, 2 * pi, 16, 8, 0.95 * 4 * pi / (4 * pi * pi));
    RandomStream rng(8, 0);
    auto G = random_cylinder(g, rng, 1e-3);
    const auto model = nqf_model(g, g.constant(1.0) + 0.9 * g.trig({1, 0}), 1.0);
    CHECK(marginal_exponent(g, model) == doctest::Approx(0.95 * 4 * pi));
    IbpOptions opts;
    opts.reps = 300;
    CHECK_THROWS_AS(ibp_check(g, IbpTarget::nqf, G, g.trig({1, 0}), model, opts, rng), NumericalError);
}

TEST_CASE("generator: constant functionals and the product rule") {
    Torus g(2, 2 * pi, 16, 8, 0.03);
    RandomStream rng(9, 0);
    const CgfSampler cgf(g);
    const auto nqf = nqf_model(g, g.constant(1.0) + 0.3 * g.trig({1, 0}), 0.9);
    Torus gl(2, 2 * pi, 16, 8, -0.03);
    const auto lqf = lqf_model(gl, gl.constant(-0.03) + 0.01 * gl.trig({0, 1}), 0.9, 1.1);

    auto K = make_cylinder(g, {g.constant(1.0), g.trig({1, 1})}, std::make_shared<ConstantInWindow>(1e-3));
    FieldCoeffs psi;
    for (int trial = 0; trial < 5; ++trial) {
        cgf.draw(rng, psi);
        CHECK(apply_generator(g, K, with_c(g, psi, 0.3 * rng.normal()), nqf) == 0.0);
    }

    for (const auto* setup : {&nqf, &lqf}) {
        const Torus& geo = setup == &nqf ? g : gl;
        for (int trial = 0; trial < 10; ++trial) {
            auto A = random_cylinder(geo, rng, 1e-3);
            auto B = random_cylinder(geo, rng, 1e-3, 1);
            auto AB = product(A, B);
            cgf.draw(rng, psi);
            const FieldCoeffs p = with_c(geo, psi, 0.2 * rng.normal());
            const GmcMeasure m = build_gmc(geo, p, model_gamma(geo, *setup));
            const double a = evaluate(A, m), b = evaluate(B, m);
            const double lhs = apply_generator(geo, AB, p, *setup) - a * apply_generator(geo, B, p, *setup) -
                               b * apply_generator(geo, A, p, *setup);
            const double cdc = carre_du_champ(geo, A, B, p, *setup);
            const double scale = std::abs(apply_generator(geo, AB, p, *setup)) + std::abs(cdc) + 1e-300;
            CHECK(std::abs(lhs - cdc) <= 1e-10 * scale);
        }
    }
}

TEST_CASE("generator symmetry and form identity, both flavors") {
    Torus g(2, 2 * pi, 16, 8, 0.02);
    Torus gl(2, 2 * pi, 16, 8, -0.05);
    RandomStream rng(10, 0);
    const auto nqf = nqf_model(g, g.constant(1.0) + 0.3 * g.trig({1, 0}), 1.0);
    const auto lqf = lqf_model(gl, -0.05 * (gl.constant(1.0) + 0.3 * gl.trig({0, 1})), 1.0, 1.0);
    for (const auto* setup : {&nqf, &lqf}) {
        const Torus& geo = setup == &nqf ? g : gl;
        auto F = random_cylinder(geo, rng, 1e-3);
        auto G = random_cylinder(geo, rng, 1e-3);
        auto sym = generator_symmetry(geo, F, G, *setup, 10000, rng, 96);
        auto form = form_identity(geo, F, G, *setup, 10000, rng, 96);
        MESSAGE("symmetry " << sym.a << " vs " << sym.b << " z = " << sym.z << "; form " << form.a << " vs "
                            << form.b << " z = " << form.z);
        CHECK(std::abs(sym.z) < 3.0);
        CHECK(std::abs(form.z) < 3.0);
        // the form is nonnegative on the diagonal
        auto diag = form_identity(geo, F, F, *setup, 2000, rng, 96);
        CHECK(diag.b >= 0.0);
    }
}

TEST_CASE("regime checks") {
    Torus g(2, 2 * pi, 16, 8, 0.5);  // Q_ref(1) = 2 pi^2 > 4 pi
    MeasureModel m = nqf_model(g, g.constant(1.0), 1.0);
    CHECK_THROWS_WITH(check_regime(g, m), "marginal not normalizable (A2/A2′ violated)");
    Torus ok(2, 2 * pi, 16, 8, 0.3);  // Q_ref(1) = 11.8 < 4 pi
    CHECK_NOTHROW(check_regime(ok, nqf_model(ok, ok.constant(1.0), 1.0)));
    MeasureModel wrong = nqf_model(ok, ok.constant(-1.0), 1.0);
    CHECK_THROWS(check_regime(ok, wrong));
    wrong.kind = FlowKind::LQF;
    CHECK_NOTHROW(check_regime(ok, wrong));
    CHECK_THROWS_WITH(check_regime(ok, nqf_model(ok, ok.constant(1.0), 1.05 * std::sqrt(4 * pi))), "supercritical gamma");
    CHECK(gamma_of_sigma(2, std::sqrt(4 * pi)) == doctest::Approx(gamma_critical(2)));
}

TEST_CASE("pCN preserves the CGF law") {
    Torus g(2, 2 * pi, 16, 8);
    RandomStream rng(11, 0);
    const CgfSampler cgf(g);
    const FieldCoeffs h = g.trig({1, 2}) + 0.5 * g.trig({2, 0}, true);
    std::vector<double> moved, fresh;
    FieldCoeffs psi, x;
    for (int i = 0; i < 3000; ++i) {
        cgf.draw(rng, psi);
        for (int k = 0; k < 3; ++k) psi = pcn_propose(cgf, psi, 0.4, rng);
        moved.push_back(pairing_E(g, h, psi));
        cgf.draw(rng, x);
        fresh.push_back(pairing_E(g, h, x));
    }
    CHECK(ks_two_sample(moved, fresh).p_value > 0.01);
}

TEST_CASE("sampler at gamma = 0 reproduces the CGF") {
    Torus g(2, 2 * pi, 16, 8);
    RandomStream rng(12, 0);
    MeasureModel m = nqf_model(g, g.constant(1.0), 0.0);
    SamplerOptions o;
    o.burn_in = 100;
    o.samples = 2000;
    o.thin = 10;
    o.pcn_beta = 0.5;
    auto run = sample_symmetrizing(g, m, o, rng);
    CHECK(run.psi_accept == 1.0);
    CHECK(run.u_accept == 0.0);
    const FieldCoeffs h = g.trig({1, 0}) + g.trig({1, 1}, true);
    std::vector<double> chain, direct;
    const CgfSampler cgf(g);
    FieldCoeffs x;
    for (const auto& s : run.samples) {
        chain.push_back(pairing_E(g, h, s.psi));
        cgf.draw(rng, x);
        direct.push_back(pairing_E(g, h, x));
    }
    const auto ks = ks_two_sample(chain, direct);
    MESSAGE("gamma = 0 chain vs CGF: p = " << ks.p_value);
    CHECK(ks.p_value > 0.01);
}

TEST_CASE("NQF with q_ref = 0: u-marginal is flat on the window") {
    Torus g(2, 2 * pi, 16, 8);
    RandomStream rng(13, 0);
    MeasureModel m = nqf_model(g, g.constant(1.0) + 0.2 * g.trig({0, 1}), 1.0);
    SamplerOptions o;
    o.eps = 1e-2;
    o.burn_in = 200;
    o.samples = 4000;
    o.thin = 5;
    o.u_step = 2 * std::log(100.0);
    o.mass_reps = 200;
    auto run = sample_symmetrizing(g, m, o, rng);
    MESSAGE("accept psi " << run.psi_accept << " u " << run.u_accept << ", tau_u " << run.tau_u);
    CHECK(run.psi_accept == 1.0);
    std::vector<std::size_t> bins(20, 0);
    const double ell = std::log(100.0);
    for (const auto& s : run.samples) bins[std::size_t((s.u + ell) / (2 * ell) * 20)]++;
    const double p = chi_square_uniform_p(bins);
    MESSAGE("chi-square p = " << p);
    CHECK(p > 0.01);
    // the window mass is 2 |log eps| / gamma here
    CHECK(run.window_mass.value == doctest::Approx(2 * ell / model_gamma(g, m)).epsilon(1e-12));
}

TEST_CASE("window masses are monotone in eps") {
    Torus g(2, 2 * pi, 16, 8, -0.05);
    RandomStream rng(14, 0);
    const auto m = lqf_model(g, -0.05 * (g.constant(1.0) + 0.3 * g.trig({1, 0})), 1.0, 1.0);
    auto w = window_masses(g, m, {0.1, 0.03, 1e-2, 1e-3}, 300, rng);
    for (std::size_t k = 1; k < w.size(); ++k) CHECK(w[k - 1].value <= w[k].value);
    CHECK(w.back().value > 0.0);
    Torus gn(2, 2 * pi, 16, 8, 0.01);
    auto wn = window_masses(gn, nqf_model(gn, gn.constant(1.0), 1.0), {0.5, 0.1, 1e-3}, 300, rng);
    for (std::size_t k = 1; k < wn.size(); ++k) CHECK(wn[k - 1].value <= wn[k].value);
}

TEST_CASE("LQF chain: u-marginal matches the Gamma volume law") {
    // f = q_ref constant: V = e^u is Gamma(2 rho |Q(1)| / (n sigma^2), n sigma^2 / (2|q|)) under nu
    Torus g(2, 2 * pi, 16, 8, -0.25);
    RandomStream rng(15, 0);
    const double rho = 1.0 + a_n_constant(2) * 2 / 4.0;
    const auto m = lqf_model(g, g.constant(-0.25), 1.0, rho);
    SamplerOptions o;
    o.burn_in = 500;
    o.samples = 1500;
    o.thin = 10;
    o.u_step = 0.5;
    o.mass_reps = 0;
    auto run = sample_symmetrizing(g, m, o, rng);
    MESSAGE("accept psi " << run.psi_accept << " u " << run.u_accept << ", tau_u " << run.tau_u);
    std::vector<double> vs;
    for (const auto& s : run.samples) vs.push_back(std::exp(s.u));
    const auto law = cir_stationary(make_cir_spec(2, -0.25, g.volume(), rho, 1.0));
    const auto ks = compare_laws(vs, [&](double v) { return gamma_cdf(law, v); });
    MESSAGE("KS p = " << ks.p_value);
    CHECK(ks.p_value > 0.01);
}

TEST_CASE("stationarity check: regime and a short LQF run") {
    Torus g(2, 2 * pi, 16, 8, -0.25);
    RandomStream rng(16, 0);
    const double rho = 1.0 + a_n_constant(2) * 2 / 4.0;
    auto m = lqf_model(g, g.constant(-0.25), 1.0, rho);
    StationarityOptions o;
    o.T = 0.3;
    o.dt = 2e-4;
    o.paths = 200;
    o.chain.burn_in = 500;
    o.chain.thin = 10;
    o.chain.u_step = 0.5;
    o.chain.mass_reps = 0;
    o.observables.push_back(make_cylinder(g, {g.constant(1.0), g.trig({1, 0})},
                                          std::make_shared<WindowedPolynomial>(
                                              2, 1e-3, std::vector<Monomial>{{1.0, {0, 1}}})));

    auto bad = lqf_model(g, g.constant(-0.25) + 0.01 * g.trig({1, 0}), 1.0, rho);
    CHECK_THROWS(stationarity_check(g, bad, o, rng));

    auto rep = stationarity_check(g, m, o, rng);
    CHECK(rep.polyakov_liouville);
    CHECK(rep.feller_volume);
    CHECK(rep.dead_paths == 0);
    for (const auto& t : rep.tests) MESSAGE(t.name << ": KS p = " << t.ks.p_value);
    MESSAGE("V(T) vs Gamma p = " << rep.volume_vs_gamma.p_value << ", V(0) vs Gamma p = "
                                 << rep.volume0_vs_gamma.p_value);
    CHECK(rep.tests.front().ks.p_value > 0.01);
    CHECK(rep.volume_vs_gamma.p_value > 0.01);
    CHECK(rep.volume0_vs_gamma.p_value > 0.01);
    m.rho = 1.0;
    CHECK(!polyakov_liouville_rho(2, 1.0, m.rho));
}
