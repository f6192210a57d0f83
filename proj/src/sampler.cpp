#include "qflow/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "qflow/errors.hpp"

namespace qflow {

namespace {

struct FieldStats {
    double log_m1 = 0.0;
    double p_f = 1.0;  // M(f) / M(1)
};

class StatsEval {
public:
    StatsEval(const Torus& geom, double gamma, const GridValues& f)
        : geom_(geom), gamma_(gamma), f_(f), ct_(0.5 * gamma * gamma * cgf_pointwise_variance(geom)) {}

    FieldStats operator()(const FieldCoeffs& psi) const {
        const GridValues g = geom_.to_grid(psi);
        const double dV = geom_.cell_volume();
        double m1 = 0.0, mf = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double v = dV * std::exp(gamma_ * g[i] - ct_);
            m1 += v;
            mf += v * f_[i];
        }
        return {std::log(m1), mf / m1};
    }

private:
    const Torus& geom_;
    double gamma_;
    const GridValues& f_;
    double ct_;
};

// log of the nu density per unit u, up to the constant -log gamma.
double log_target(FlowKind kind, double exponent, double kappa, const FieldStats& s, double u) {
    if (kind == FlowKind::NQF) return exponent == 0.0 ? 0.0 : exponent * (s.log_m1 + std::log(s.p_f));
    return exponent * (s.log_m1 - u) + kappa * std::exp(u) * s.p_f;
}

}  // namespace

FieldCoeffs pcn_propose(const CgfSampler& sampler, const FieldCoeffs& psi, double beta, RandomStream& rng) {
    require(beta > 0.0 && beta <= 1.0, "pCN step must lie in (0, 1]");
    FieldCoeffs xi;
    sampler.draw(rng, xi);
    require(xi.size() == psi.size(), "coefficient vector does not match geometry");
    const double a = std::sqrt(1.0 - beta * beta);
    for (std::size_t i = 0; i < xi.size(); ++i) xi[i] = a * psi[i] + beta * xi[i];
    return xi;
}

std::vector<WindowMass> window_masses(const Torus& geom, const MeasureModel& model, const std::vector<double>& eps,
                                      std::size_t reps, RandomStream& rng) {
    check_regime(geom, model);
    for (double e : eps) require(e > 0.0 && e < 1.0, "window eps must lie in (0, 1)");
    require(reps >= 2, "need at least two samples");
    const double gamma = model_gamma(geom, model);
    std::vector<WindowMass> out;
    for (double e : eps) out.push_back({e, 0.0, 0.0});
    if (gamma == 0.0) {
        // the c-direction is not integrable once M(1) = V is inside the window
        for (auto& w : out) w.value = std::log(geom.volume()) < -std::log(w.eps) ? INFINITY : 0.0;
        return out;
    }
    const double exponent = marginal_exponent(geom, model);
    const double kappa = 2.0 / (geom.dim() * model.sigma * model.sigma);
    const CgfSampler sampler(geom);
    const StatsEval stats(geom, gamma, model.f.grid);
    std::vector<RunningStats> acc(eps.size());
    FieldCoeffs psi;
    for (std::size_t r = 0; r < reps; ++r) {
        sampler.draw(rng, psi);
        const FieldStats s = stats(psi);
        for (std::size_t k = 0; k < eps.size(); ++k) {
            const double ell = -std::log(eps[k]);
            double v;
            if (model.kind == FlowKind::NQF) {
                v = 2.0 * ell * std::exp(log_target(FlowKind::NQF, exponent, kappa, s, 0.0)) / gamma;
            } else {
                auto dens = [&](double u) { return std::exp(log_target(FlowKind::LQF, exponent, kappa, s, u)); };
                v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(dens, -ell, ell, 8, 1e-12) / gamma;
            }
            acc[k].add(v);
        }
    }
    for (std::size_t k = 0; k < eps.size(); ++k) {
        out[k].value = acc[k].mean();
        out[k].se = acc[k].stderr_mean();
    }
    return out;
}

ChainRun sample_symmetrizing(const Torus& geom, const MeasureModel& model, const SamplerOptions& opts,
                             RandomStream& rng) {
    check_regime(geom, model);
    require(opts.eps > 0.0 && opts.eps < 1.0, "window eps must lie in (0, 1)");
    require(opts.thin >= 1 && opts.samples >= 1, "chain needs samples and thinning");
    require(opts.u_step > 0.0, "u step must be positive");
    const double gamma = model_gamma(geom, model);
    const double exponent = marginal_exponent(geom, model);
    const double kappa = model.sigma > 0.0 ? 2.0 / (geom.dim() * model.sigma * model.sigma) : 0.0;
    const double ell = -std::log(opts.eps);
    const bool frozen = gamma == 0.0;
    if (frozen) require(std::abs(std::log(geom.volume())) < ell, "window excludes the volume at gamma = 0");

    const CgfSampler sampler(geom);
    const StatsEval stats(geom, gamma, model.f.grid);
    RandomStream prop = rng.split(1), acc = rng.split(2);

    ChainSample cur;
    sampler.draw(prop, cur.psi);
    FieldStats s = stats(cur.psi);
    if (frozen) {
        cur.u = std::log(geom.volume());
    } else if (model.kind == FlowKind::NQF) {
        cur.u = ell * (2.0 * acc.uniform() - 1.0);
    } else {
        // mode of exp(-a u + kappa e^u p_f) when it exists
        const double t = exponent < 0.0 && s.p_f < 0.0 ? std::log(exponent / (kappa * s.p_f)) : 0.0;
        cur.u = std::clamp(t, -0.9 * ell, 0.9 * ell);
    }
    double lt = log_target(model.kind, exponent, kappa, s, cur.u);

    ChainRun run;
    std::size_t psi_tries = 0, psi_acc = 0, u_tries = 0, u_acc = 0;
    std::vector<double> us, lms;
    const std::size_t total = opts.burn_in + opts.samples * opts.thin;
    for (std::size_t step = 1; step <= total; ++step) {
        FieldCoeffs cand = pcn_propose(sampler, cur.psi, opts.pcn_beta, prop);
        const FieldStats cs = stats(cand);
        const double lc = log_target(model.kind, exponent, kappa, cs, cur.u);
        ++psi_tries;
        if (std::log(acc.uniform()) < lc - lt) {
            cur.psi = std::move(cand);
            s = cs;
            lt = lc;
            ++psi_acc;
        }
        if (!frozen) {
            const double uc = cur.u + opts.u_step * prop.normal();
            ++u_tries;
            if (std::abs(uc) < ell) {
                const double lu = log_target(model.kind, exponent, kappa, s, uc);
                if (std::log(acc.uniform()) < lu - lt) {
                    cur.u = uc;
                    lt = lu;
                    ++u_acc;
                }
            }
        }
        if (step > opts.burn_in && (step - opts.burn_in) % opts.thin == 0) {
            cur.log_m1 = s.log_m1;
            run.samples.push_back(cur);
            us.push_back(cur.u);
            lms.push_back(cur.log_m1);
        }
    }
    run.psi_accept = double(psi_acc) / double(psi_tries);
    run.u_accept = u_tries ? double(u_acc) / double(u_tries) : 0.0;
    if (us.size() >= 10) {
        run.tau_u = frozen ? 0.0 : integrated_autocorr_time(us);
        run.tau_log_m1 = integrated_autocorr_time(lms);
    }
    if (opts.mass_reps >= 2) {
        RandomStream mr = rng.split(3);
        run.window_mass = window_masses(geom, model, {opts.eps}, opts.mass_reps, mr).front();
    }
    return run;
}

GmcMeasure chain_measure(const Torus& geom, const MeasureModel& model, const ChainSample& s) {
    GmcMeasure m = build_gmc(geom, s.psi, model_gamma(geom, model));
    const double scale = std::exp(s.u - std::log(m.total()));
    for (double& v : m.cells) v *= scale;
    return m;
}

bool polyakov_liouville_rho(int n, double sigma, double rho) {
    const double target = 1.0 + a_n_constant(n) * n * sigma * sigma / 4.0;
    return std::abs(rho - target) <= 1e-12 * std::abs(target);
}

StationarityReport stationarity_check(const Torus& geom, const MeasureModel& model, const StationarityOptions& opts,
                                      RandomStream& rng) {
    const double q = geom.q_ref();
    bool f_is_q = model.f.grid.size() == geom.num_cells();
    for (double v : model.f.grid) f_is_q = f_is_q && std::abs(v - q) <= 1e-12 * std::abs(q);
    require(model.kind == FlowKind::LQF && q < 0.0 && f_is_q && model.sigma > 0.0 &&
                model.sigma * model.sigma <= -2.0 * geom.Q1(),
            "stationarity check needs LQF with q_ref < 0, f = q_ref and sigma^2 <= -2 Q_ref(1)");
    require(geom.full_band(), "stationarity check needs a full-band geometry");
    require(opts.paths >= kMinLawSamples, "insufficient samples");
    require(opts.T > 0.0 && opts.dt > 0.0, "invalid run horizon");

    StationarityReport rep;
    rep.polyakov_liouville = polyakov_liouville_rho(geom.dim(), model.sigma, model.rho);
    const CirSpec spec = make_cir_spec(geom.dim(), q, geom.volume(), model.rho, model.sigma);
    rep.feller_volume = spec.feller_volume;
    rep.gamma_law = cir_stationary(spec);

    SamplerOptions co = opts.chain;
    co.samples = 2 * opts.paths;
    RandomStream chain_rng = rng.split(1);
    rep.chain = sample_symmetrizing(geom, model, co, chain_rng);

    const std::size_t nobs = 1 + opts.observables.size();
    std::vector<std::vector<double>> at0(nobs), atT(nobs);
    auto observe = [&](const GridMeasure& cells, std::vector<std::vector<double>>& into) {
        GmcMeasure m;
        m.cells = cells;
        into[0].push_back(m.total());
        for (std::size_t j = 0; j < opts.observables.size(); ++j)
            into[j + 1].push_back(evaluate(opts.observables[j], m));
    };

    StochasticParams sp;
    sp.sigma = model.sigma;
    sp.rho = model.rho;
    sp.scheme.dt = opts.dt;
    const int steps = int(std::ceil(opts.T / opts.dt));
    for (std::size_t i = 0; i < rep.chain.samples.size(); ++i) {
        const GmcMeasure m = chain_measure(geom, model, rep.chain.samples[i]);
        if (i % 2 == 0) {
            observe(m.cells, at0);
            continue;
        }
        RandomStream path_rng = rng.split(100 + i);
        const FlowRun run = run_flow(geom, FlowKind::LQF, measure_state_from_masses(geom, m.cells), model.f, sp,
                                     opts.T, steps, {}, path_rng);
        if (run.death_time || !run.final_state.alive) ++rep.dead_paths;
        if (run.unreliable) ++rep.unreliable_paths;
        GridMeasure cells = run.final_state.masses;
        if (!run.final_state.alive) cells.assign(geom.num_cells(), 0.0);
        observe(cells, atT);
    }
    rep.chain.samples.clear();

    rep.tests.push_back({"V", ks_two_sample(at0[0], atT[0])});
    for (std::size_t j = 0; j < opts.observables.size(); ++j)
        rep.tests.push_back({"G" + std::to_string(j + 1), ks_two_sample(at0[j + 1], atT[j + 1])});
    const GammaLaw law = rep.gamma_law;
    rep.volume_vs_gamma = compare_laws(atT[0], [&](double v) { return gamma_cdf(law, v); });
    rep.volume0_vs_gamma = compare_laws(at0[0], [&](double v) { return gamma_cdf(law, v); });
    return rep;
}

}  // namespace qflow
