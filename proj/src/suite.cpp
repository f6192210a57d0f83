#include "qflow/suite.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <thread>

#include "qflow/chaos.hpp"
#include "qflow/cylinder.hpp"
#include "qflow/errors.hpp"
#include "qflow/forms.hpp"
#include "qflow/sampler.hpp"
#include "qflow/stats.hpp"
#include "qflow/stochastic.hpp"
#include "qflow/volume.hpp"

namespace qflow {

namespace {

struct Ctx {
    const ValidatedConfig& vc;
    const RunConfig& cfg;
    const std::filesystem::path& out;
    ExperimentResult& r;
    Torus geom;
    RandomStream rng;

    void exact(const std::string& n, double v) { r.values.push_back(Quantity::exact(n, v)); }
    void estimate(const std::string& n, double v, double se) { r.values.push_back(Quantity::estimate(n, v, se)); }
    void gate(bool ok, const std::string& note) {
        if (!ok) r.status = Status::fail;
        r.diagnostic += (r.diagnostic.empty() ? "" : "; ") + std::string(ok ? "" : "FAILED ") + note;
    }
    bool writing() const { return !out.empty(); }
    void snapshot(const std::string& name, const std::vector<double>& data, const std::vector<std::size_t>& shape,
                  const Json& meta = Json::object()) {
        if (!writing() || !cfg.output.snapshots) return;
        write_snapshot(out, name, data, shape, meta);
        r.artifacts.push_back(name + ".bin");
        r.artifacts.push_back(name + ".json");
    }
    std::ofstream csv(const std::string& name) {
        std::filesystem::create_directories(out);
        r.artifacts.push_back(name);
        std::ofstream f(out / name);
        f.precision(17);
        return f;
    }
    std::vector<std::size_t> grid_shape() const { return std::vector<std::size_t>(geom.dim(), geom.grid()); }
};

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", x);
    return buf;
}

StochasticParams stochastic_params(const RunConfig& cfg) {
    StochasticParams sp;
    sp.sigma = cfg.model.sigma;
    sp.rho = cfg.model.rho;
    sp.scheme.dt = cfg.scheme.dt;
    sp.scheme.noise_mode = cfg.scheme.noise;
    sp.scheme.clamp_floor = cfg.scheme.floor;
    return sp;
}

FieldCoeffs low_mode(const Torus& g, RandomStream& rng, bool with_constant) {
    FieldCoeffs h = g.zeros();
    for (std::size_t a = with_constant ? 0 : 1; a < g.num_modes(); ++a) {
        int kmax = 0;
        for (int k : g.modes()[a].k) kmax = std::max(kmax, std::abs(k));
        if (kmax <= 2) h[a] = 0.3 * rng.normal();
    }
    return h;
}

CylinderFunctional random_cylinder(const Torus& g, RandomStream& rng, double eps) {
    std::vector<FieldCoeffs> h{g.constant(1.0), low_mode(g, rng, true), low_mode(g, rng, true)};
    return make_cylinder(g, h, random_windowed_polynomial(3, 2, eps, rng));
}

bool f_is_q_ref(const Torus& g, const MeasureModel& m) {
    for (double v : m.f.grid)
        if (std::abs(v - g.q_ref()) > 1e-12 * std::abs(g.q_ref())) return false;
    return true;
}

void flow_det(Ctx& c) {
    const MeasureModel m = make_model(c.geom, c.cfg);
    DetOptions opt;
    opt.dt = c.cfg.scheme.dt;
    opt.T = c.cfg.scheme.T;
    opt.scheme = c.cfg.scheme.scheme;
    opt.cadence = c.cfg.output.cadence;
    opt.rho = c.cfg.model.rho;
    const auto tr = integrate_deterministic(c.geom, m.kind, make_field(c.geom, c.cfg.model.phi0), m.f, opt);
    const auto& p0 = tr.points.front();
    const auto& pT = tr.points.back();
    double rise = 0.0, qdrift = 0.0;
    for (std::size_t k = 0; k < tr.points.size(); ++k) {
        qdrift = std::max(qdrift, std::abs(tr.points[k].q_total - c.geom.Q1()));
        if (k) rise = std::max(rise, tr.points[k].energy - tr.points[k - 1].energy);
    }
    c.exact("steps", tr.steps);
    c.exact("V0", p0.volume);
    c.exact("VT", pT.volume);
    c.exact("rel_volume_change", std::abs(pT.volume - p0.volume) / p0.volume);
    c.exact("E0", p0.energy);
    c.exact("ET", pT.energy);
    c.exact("max_energy_rise", rise);
    c.exact("max_Q1_drift", qdrift);
    c.gate(!tr.aborted, tr.aborted ? "aborted: " + tr.diagnostic : "completed");
    c.gate(rise <= 1e-10 * std::max(1.0, std::abs(p0.energy)), "energy nonincreasing (max rise " + fmt(rise) + ")");
    if (m.kind == FlowKind::NQF)
        c.gate(std::abs(pT.volume - p0.volume) / p0.volume < 1e-8, "NQF volume conserved");
    if (c.writing()) {
        auto f = c.csv("flow_det.csv");
        f << "t,volume,energy,q_norm,q_total\n";
        for (const auto& p : tr.points) f << p.t << "," << p.volume << "," << p.energy << "," << p.q_norm << "," << p.q_total << "\n";
    }
    c.snapshot("flow_det_phi_T", tr.final_state.phi_grid, c.grid_shape(), {{"t", pT.t}});
}

void flow_sto(Ctx& c) {
    const MeasureModel m = make_model(c.geom, c.cfg);
    const auto sp = stochastic_params(c.cfg);
    const auto init = measure_state_from_phi(c.geom, make_field(c.geom, c.cfg.model.phi0));
    const std::size_t paths = c.cfg.experiment.paths;
    RunningStats vT;
    std::size_t deaths = 0, unreliable = 0, aborted = 0;
    bool bound = false;
    std::vector<std::vector<double>> kept;
    std::vector<double> times;
    for (std::size_t p = 0; p < paths; ++p) {
        RandomStream pr = c.rng.split(p);
        const auto run = run_flow(c.geom, m.kind, init, m.f, sp, c.cfg.scheme.T, c.cfg.output.cadence, {}, pr);
        deaths += run.death_time.has_value();
        unreliable += run.unreliable;
        aborted += run.aborted;
        bound = bound || run.sigma_bound_violated;
        vT.add(run.death_time ? 0.0 : run.volume.back());
        if (kept.size() < 20) {
            if (run.times.size() > times.size()) times = run.times;
            kept.push_back(run.volume);
        }
        if (p == 0) c.snapshot("flow_sto_masses_T_path0", run.final_state.masses, c.grid_shape(), {{"t", run.final_state.t}});
    }
    c.exact("paths", double(paths));
    c.exact("V0", init.volume());
    c.estimate("mean_VT", vT.mean(), vT.stderr_mean());
    c.exact("deaths", double(deaths));
    c.exact("unreliable_paths", double(unreliable));
    c.exact("sigma_bound_violated", bound);
    c.gate(aborted == 0, std::to_string(aborted) + " aborted paths");
    if (m.kind == FlowKind::NQF)
        c.gate(std::abs(vT.mean() - init.volume()) < 3 * vT.stderr_mean(), "E[V_T] = V_0 within 3 SE");
    if (c.writing()) {
        auto f = c.csv("flow_sto_volume.csv");
        f << "t";
        for (std::size_t p = 0; p < kept.size(); ++p) f << ",path" << p;
        f << "\n";
        for (std::size_t k = 0; k < times.size(); ++k) {
            f << times[k];
            for (const auto& v : kept) {
                f << ",";
                if (k < v.size()) f << v[k];
            }
            f << "\n";
        }
    }
}

void gmc_build(Ctx& c) {
    const double gamma = c.vc.derived.gamma;
    require(gamma > 0.0, "GMC needs gamma > 0 (sigma > 0)");
    const auto psi = sample_cgf(c.geom, c.rng);
    const auto m = build_gmc(c.geom, psi, gamma);
    const auto [lo, hi] = std::minmax_element(m.cells.begin(), m.cells.end());
    c.exact("gamma", gamma);
    c.exact("total_mass", m.total());
    c.exact("counterterm", m.counterterm);
    c.exact("min_cell", *lo);
    c.exact("max_cell", *hi);
    c.gate(std::isfinite(m.total()) && *lo > 0.0, "finite positive cells");
    c.snapshot("gmc_cells", m.cells, c.grid_shape(), {{"gamma", gamma}, {"seed", c.rng.seed()}});
    c.snapshot("gmc_psi", c.geom.to_grid(psi.field), c.grid_shape());
}

void gmc_moments(Ctx& c) {
    const auto& g = c.cfg.geometry;
    std::vector<int> Ns;
    for (int N : {g.trunc / 4, g.trunc / 2, g.trunc})
        if (N >= 1 && (Ns.empty() || Ns.back() != N)) Ns.push_back(N);
    const std::vector<double> ps = {1.0, 2.0};
    const auto scan = gmc_moment_scan(g.n, g.L, g.grid, Ns, c.vc.derived.gamma, ps, int(c.cfg.experiment.reps), c.rng);
    bool ok = true;
    for (std::size_t iN = 0; iN < Ns.size(); ++iN)
        for (std::size_t ip = 0; ip < ps.size(); ++ip) {
            const auto& row = scan.rows[iN * ps.size() + ip];
            c.estimate("E_M1^" + fmt(ps[ip]) + "_N" + std::to_string(Ns[iN]), row.mean, row.se);
            if (ip == 0) ok = ok && std::abs(row.mean - c.geom.volume()) < 3 * row.se;
        }
    c.exact("threshold_2n_over_gamma2", scan.threshold);
    c.exact("p2_predicted_finite", scan.predicted_finite(1));
    c.gate(ok, "E[M(1)] = L^n within 3 SE");
    if (c.writing()) {
        auto f = c.csv("gmc_moments.csv");
        f << "N,p,mean,se\n";
        for (const auto& row : scan.rows) f << row.trunc << "," << row.p << "," << row.mean << "," << row.se << "\n";
    }
}

void gmc_invert(Ctx& c) {
    const double gamma = c.vc.derived.gamma;
    require(gamma > 0.0, "inversion needs gamma > 0 (sigma > 0)");
    InversionPlan plan;
    plan.eps_list = {2.5 * c.geom.length() / c.geom.grid()};
    plan.mc_reps = 50;
    RandomStream cal = c.rng.split(1), draw = c.rng.split(2);
    calibrate(c.geom, gamma, plan, cal);
    std::vector<int> k(c.geom.dim(), 0);
    k[0] = 1;
    const auto h = c.geom.trig(k);
    std::vector<double> truth, rec;
    const std::size_t reps = std::min<std::size_t>(c.cfg.experiment.paths, 100);
    std::size_t floor_hits = 0;
    for (std::size_t r = 0; r < reps; ++r) {
        const auto psi = sample_cgf(c.geom, draw);
        const auto inv = invert_gmc(c.geom, build_gmc(c.geom, psi, gamma), plan, 0);
        floor_hits += inv.floor_hits;
        truth.push_back(l2_inner(psi.field, h));
        rec.push_back(l2_inner(inv.grounded(), h));
        if (r == 0) c.snapshot("gmc_invert_field", c.geom.to_grid(inv.grounded()), c.grid_shape());
    }
    RunningStats a, b;
    for (std::size_t i = 0; i < reps; ++i) {
        a.add(truth[i]);
        b.add(rec[i]);
    }
    double cov = 0.0;
    for (std::size_t i = 0; i < reps; ++i) cov += (truth[i] - a.mean()) * (rec[i] - b.mean());
    const double corr = cov / double(reps - 1) / std::sqrt(a.variance() * b.variance());
    c.exact("replicas", double(reps));
    c.exact("eps", plan.eps_list[0]);
    c.exact("recovery_correlation_cos_x1", corr);
    c.exact("floor_hits", double(floor_hits));
    c.gate(reps >= 2, "recovery correlation " + fmt(corr));
}

void measure_sample(Ctx& c) {
    const MeasureModel m = make_model(c.geom, c.cfg);
    SamplerOptions so;
    so.eps = c.cfg.scheme.windows.front();
    so.samples = c.cfg.experiment.paths;
    so.mass_reps = c.cfg.experiment.reps;
    const auto run = sample_symmetrizing(c.geom, m, so, c.rng);
    RunningStats V;
    std::vector<double> table;
    for (const auto& s : run.samples) {
        V.add(std::exp(s.u));
        table.push_back(s.u);
        table.push_back(s.log_m1);
    }
    c.exact("psi_accept", run.psi_accept);
    c.exact("u_accept", run.u_accept);
    c.exact("tau_u", run.tau_u);
    c.exact("tau_log_m1", run.tau_log_m1);
    const double tau = std::max(1.0, run.tau_u);
    c.estimate("mean_V", V.mean(), V.stderr_mean() * std::sqrt(tau));
    c.estimate("window_mass", run.window_mass.value, run.window_mass.se);
    c.gate(run.psi_accept > 0.0, "chain moves");
    c.snapshot("measure_sample_u_logm1", table, {run.samples.size(), 2}, {{"columns", {"u", "log_m1"}}});
}

void ibp(Ctx& c) {
    const MeasureModel m = make_model(c.geom, c.cfg);
    IbpOptions io;
    io.reps = c.cfg.experiment.reps;
    io.quad_nodes = 48;
    const double eps = c.cfg.scheme.windows.front();
    const IbpTarget weighted = m.kind == FlowKind::NQF ? IbpTarget::nqf : IbpTarget::lqf;
    int over = 0;
    for (int p = 0; p < 5; ++p) {
        RandomStream pr = c.rng.split(p);
        const auto G = random_cylinder(c.geom, pr, eps);
        const auto h = low_mode(c.geom, pr, m.kind == FlowKind::NQF);
        for (IbpTarget t : {IbpTarget::grounded, weighted}) {
            RandomStream d = pr.split(1 + int(t));
            const auto rep = ibp_check(c.geom, t, G, h, m, io, d);
            const std::string tag = std::string(t == IbpTarget::grounded ? "grounded" : "weighted") + "_pair" + std::to_string(p);
            c.estimate(tag + "_lhs", rep.lhs, rep.lhs_se);
            c.estimate(tag + "_rhs", rep.rhs, rep.rhs_se);
            c.exact(tag + "_z", rep.z);
            over += std::abs(rep.z) >= 3.0;
        }
    }
    c.gate(over == 0, std::to_string(over) + " of 10 identities at |z| >= 3");
}

void generator(Ctx& c) {
    const MeasureModel m = make_model(c.geom, c.cfg);
    const double eps = c.cfg.scheme.windows.front();
    int over = 0;
    for (int p = 0; p < 3; ++p) {
        RandomStream pr = c.rng.split(p);
        const auto F = random_cylinder(c.geom, pr, eps), G = random_cylinder(c.geom, pr, eps);
        RandomStream d1 = pr.split(1), d2 = pr.split(2);
        const auto sym = generator_symmetry(c.geom, F, G, m, c.cfg.experiment.reps, d1, 48);
        const auto form = form_identity(c.geom, F, G, m, c.cfg.experiment.reps, d2, 48);
        const std::string tag = "pair" + std::to_string(p);
        c.estimate(tag + "_E[F LG]", sym.a, sym.a_se);
        c.estimate(tag + "_E[G LF]", sym.b, sym.b_se);
        c.exact(tag + "_symmetry_z", sym.z);
        c.estimate(tag + "_E[F(-LG)]", form.a, form.a_se);
        c.estimate(tag + "_form", form.b, form.b_se);
        c.exact(tag + "_form_z", form.z);
        over += (std::abs(sym.z) >= 3.0) + (std::abs(form.z) >= 3.0);
    }
    c.gate(over == 0, std::to_string(over) + " of 6 identities at |z| >= 3");
}

void stationary(Ctx& c) {
    c.r.soft = true;
    const MeasureModel m = make_model(c.geom, c.cfg);
    StationarityOptions so;
    so.T = c.cfg.scheme.T;
    so.dt = c.cfg.scheme.dt;
    so.paths = c.cfg.experiment.paths;
    so.chain.eps = c.cfg.scheme.windows.front();
    so.chain.u_step = 0.5;
    so.chain.mass_reps = 0;
    std::vector<int> k(c.geom.dim(), 0);
    k[0] = 1;
    so.observables.push_back(make_cylinder(c.geom, {c.geom.constant(1.0), c.geom.trig(k)},
                                           std::make_shared<WindowedPolynomial>(
                                               2, so.chain.eps, std::vector<Monomial>{{1.0, {0, 1}}})));
    const auto rep = stationarity_check(c.geom, m, so, c.rng);
    double pmin = 1.0;
    for (const auto& t : rep.tests) {
        c.exact(t.name + "_ks_p", t.ks.p_value);
        pmin = std::min(pmin, t.ks.p_value);
    }
    c.exact("V_T_vs_gamma_ks_p", rep.volume_vs_gamma.p_value);
    c.exact("polyakov_liouville_rho", rep.polyakov_liouville);
    c.exact("feller_flag_volume", rep.feller_volume);
    c.exact("dead_paths", double(rep.dead_paths));
    c.exact("unreliable_paths", double(rep.unreliable_paths));
    c.gate(pmin > 0.01, "two-sample KS min p " + fmt(pmin));
}

void vol_besq(Ctx& c) {
    const double v0 = measure_state_from_phi(c.geom, make_field(c.geom, c.cfg.model.phi0)).volume();
    const double t = c.cfg.scheme.T, cc = c.geom.dim() * c.cfg.model.sigma;
    require(t > 0.0 && cc > 0.0, "BESQ0 law needs T > 0 and sigma > 0");
    std::vector<double> xs;
    RunningStats absorbed;
    for (std::size_t k = 0; k < c.cfg.experiment.reps; ++k) {
        xs.push_back(besq0_transition(v0, t, cc, c.rng));
        absorbed.add(xs.back() == 0.0);
    }
    const double p = besq0_absorption_prob(v0, t, cc);
    const auto ks = compare_laws(xs, [&](double v) { return besq0_cdf(v0, t, cc, v); });
    c.exact("V0", v0);
    c.estimate("absorbed_fraction", absorbed.mean(), absorbed.stderr_mean());
    c.exact("absorption_probability", p);
    c.exact("ks_p", ks.p_value);
    c.gate(ks.p_value > 0.01, "exact sampler vs CDF");
    if (c.writing()) {
        auto f = c.csv("vol_besq.csv");
        f << "v\n";
        for (double x : xs) f << x << "\n";
    }
}

CirSpec cir_spec(const Ctx& c) {
    require(c.geom.q_ref() < 0.0, "CIR volume law needs q_ref_const < 0");
    return make_cir_spec(c.geom.dim(), c.geom.q_ref(), c.geom.volume(), c.cfg.model.rho, c.cfg.model.sigma);
}

void vol_cir(Ctx& c) {
    const auto spec = cir_spec(c);
    const double v0 = measure_state_from_phi(c.geom, make_field(c.geom, c.cfg.model.phi0)).volume();
    const double t = c.cfg.scheme.T;
    std::vector<double> xs;
    RunningStats mean;
    for (std::size_t k = 0; k < c.cfg.experiment.reps; ++k) {
        xs.push_back(cir_transition(spec, v0, t, c.rng));
        mean.add(xs.back());
    }
    const auto ks = compare_laws(xs, [&](double v) { return cir_cdf(spec, v0, t, v); });
    c.exact("V0", v0);
    c.estimate("mean_VT", mean.mean(), mean.stderr_mean());
    c.exact("exact_mean", cir_mean(spec, v0, t));
    c.exact("feller_flag_volume", spec.feller_volume);
    c.exact("feller_flag", spec.feller);
    const auto law = cir_stationary(spec);
    c.exact("stationary_shape", law.shape);
    c.exact("stationary_scale", law.scale);
    c.exact("ks_p", ks.p_value);
    c.gate(ks.p_value > 0.01, "exact sampler vs CDF");
    c.gate(std::abs(mean.mean() - cir_mean(spec, v0, t)) < 3 * mean.stderr_mean(), "mean within 3 SE");
}

void vol_compare(Ctx& c) {
    const MeasureModel m = make_model(c.geom, c.cfg);
    if (m.kind == FlowKind::LQF)
        require(f_is_q_ref(c.geom, m), "LQF volume is CIR only for f = q_ref_const");
    const auto sp = stochastic_params(c.cfg);
    const auto init = measure_state_from_phi(c.geom, make_field(c.geom, c.cfg.model.phi0));
    const double T = c.cfg.scheme.T;
    std::vector<double> vT;
    std::size_t unreliable = 0;
    for (std::size_t p = 0; p < c.cfg.experiment.paths; ++p) {
        RandomStream pr = c.rng.split(p);
        const auto run = run_flow(c.geom, m.kind, init, m.f, sp, T, std::max<int>(1, int(std::ceil(T / sp.scheme.dt))), {}, pr);
        require(!run.aborted, "path aborted: " + run.diagnostic);
        unreliable += run.unreliable;
        vT.push_back(run.death_time ? 0.0 : run.volume.back());
    }
    const double v0 = init.volume();
    KsResult ks;
    if (m.kind == FlowKind::NQF) {
        const double cc = c.geom.dim() * sp.sigma;
        ks = compare_laws(vT, [&](double v) { return besq0_cdf(v0, T, cc, v); });
    } else {
        const auto spec = cir_spec(c);
        ks = compare_laws(vT, [&](double v) { return cir_cdf(spec, v0, T, v); });
    }
    c.exact("V0", v0);
    c.exact("unreliable_paths", double(unreliable));
    c.exact("ks_p", ks.p_value);
    c.gate(ks.p_value > 0.01, std::string("grid V_T vs exact ") + (m.kind == FlowKind::NQF ? "BESQ0" : "CIR"));
}

using ExperimentFn = void (*)(Ctx&);

ExperimentFn lookup(const std::string& name) {
    static const std::vector<std::pair<std::string, ExperimentFn>> table = {
        {"flow_det", flow_det},     {"flow_sto", flow_sto},       {"gmc_build", gmc_build},
        {"gmc_moments", gmc_moments}, {"gmc_invert", gmc_invert}, {"measure_sample", measure_sample},
        {"ibp", ibp},               {"generator", generator},     {"stationary", stationary},
        {"vol_besq", vol_besq},     {"vol_cir", vol_cir},         {"vol_compare", vol_compare}};
    for (const auto& [n, f] : table)
        if (n == name) return f;
    throw ConfigError("unknown experiment '" + name + "'");
}

std::uint64_t stream_of(const std::string& name) {
    const auto& all = experiment_names();
    return 10000 + std::uint64_t(std::find(all.begin(), all.end(), name) - all.begin());
}

}  // namespace

SuiteKind parse_suite(const std::string& s) {
    if (s == "unit") return SuiteKind::unit;
    if (s == "acceptance") return SuiteKind::acceptance;
    if (s == "full") return SuiteKind::full;
    throw ConfigError("suite must be unit, acceptance or full");
}

const char* suite_name(SuiteKind k) {
    switch (k) {
        case SuiteKind::unit: return "unit";
        case SuiteKind::acceptance: return "acceptance";
        case SuiteKind::full: return "full";
    }
    return "?";
}

ExperimentResult run_experiment(const std::string& name, const ValidatedConfig& vc, const std::filesystem::path& out_dir) {
    ExperimentResult r;
    r.name = name;
    r.title = name;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        const ExperimentFn fn = lookup(name);
        Ctx c{vc, vc.cfg, out_dir, r, make_geometry(vc.cfg), RandomStream(vc.cfg.experiment.seed, stream_of(name))};
        fn(c);
    } catch (const std::exception& e) {
        r.status = Status::error;
        r.config_error = dynamic_cast<const ConfigError*>(&e) != nullptr;
        r.diagnostic = e.what();
    }
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

std::vector<ExperimentResult> schedule(const std::vector<std::function<ExperimentResult()>>& jobs, int workers) {
    std::vector<ExperimentResult> out(jobs.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) out[i] = jobs[i]();
    };
    const int n = std::max(1, std::min<int>(workers, int(jobs.size())));
    std::vector<std::thread> pool;
    for (int w = 1; w < n; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    return out;
}

RunRecord run_experiments(const ValidatedConfig& vc, const std::filesystem::path& out_dir) {
    std::string label;
    for (const auto& n : vc.cfg.experiment.checks) label += (label.empty() ? "" : ",") + n;
    RunRecord rec = new_record(vc, label.empty() ? "experiments" : label);
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::function<ExperimentResult()>> jobs;
    for (const auto& n : vc.cfg.experiment.checks) jobs.push_back([&, n] { return run_experiment(n, vc, out_dir); });
    rec.experiments = schedule(jobs, vc.cfg.experiment.workers);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

RunRecord run_suite(const ValidatedConfig& vc, SuiteKind kind, const std::filesystem::path& out_dir) {
    RunRecord rec = new_record(vc, suite_name(kind));
    const auto t0 = std::chrono::steady_clock::now();
    AcceptanceOptions ao;
    ao.seed = vc.cfg.experiment.seed;
    ao.bundle_dir = out_dir;
    const int last = kind == SuiteKind::unit ? 3 : kNumCriteria;
    std::vector<std::function<ExperimentResult()>> jobs;
    for (int id = 1; id <= last; ++id) jobs.push_back([id, &ao] { return run_criterion(id, ao); });
    if (kind == SuiteKind::full)
        for (const auto& n : vc.cfg.experiment.checks) jobs.push_back([&, n] { return run_experiment(n, vc, out_dir); });
    rec.experiments = schedule(jobs, vc.cfg.experiment.workers);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

}  // namespace qflow
