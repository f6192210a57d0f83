#include "qflow/stochastic.hpp"

#include <cmath>
#include <numeric>

#include "qflow/errors.hpp"

namespace qflow {

namespace {

constexpr double kVolumeFloor = 1e-8;  // relative to V_ref
constexpr double kVolumeCeil = 1e8;

void refresh_phi(const Torus& g, MeasureState& s) {
    const double dV = g.cell_volume();
    s.phi_grid.resize(s.masses.size());
    for (std::size_t i = 0; i < s.masses.size(); ++i) s.phi_grid[i] = std::log(s.masses[i] / dV) / g.dim();
}

GridValues noise_cellwise(const MeasureState& s, double scale, RandomStream& rng) {
    GridValues z(s.masses.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = scale * std::sqrt(s.masses[i]) * rng.normal();
    return z;
}

// Cholesky M = L L^T of the omega-Gram matrix; y = L^{-T} xi gives
// Cov(omega(e_a) increments) = M, i.e. the exact quadratic covariation on V_N.
GridValues noise_spectral(const Torus& g, const MeasureState& s, double scale, RandomStream& rng) {
    const Eigen::MatrixXd M = g.weighted_gram(s.masses);
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() != Eigen::Success) throw NumericalError("omega-Gram matrix is not positive definite");
    Eigen::VectorXd xi(M.rows());
    for (Eigen::Index a = 0; a < xi.size(); ++a) xi[a] = rng.normal();
    const Eigen::VectorXd y = llt.matrixU().solve(xi);
    FieldCoeffs yc{std::vector<double>(y.data(), y.data() + y.size())};
    GridValues z = g.to_grid(yc);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] *= scale * s.masses[i];
    return z;
}

}  // namespace

double MeasureState::volume() const { return std::accumulate(masses.begin(), masses.end(), 0.0); }

MeasureState measure_state_from_phi(const Torus& geom, const FieldCoeffs& phi) {
    auto pg = geom.to_grid(phi);
    GridMeasure m(pg.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = geom.cell_volume() * std::exp(geom.dim() * pg[i]);
    return measure_state_from_masses(geom, std::move(m));
}

MeasureState measure_state_from_masses(const Torus& geom, GridMeasure masses, double t) {
    require(masses.size() == geom.num_cells(), "mass vector does not match the grid");
    for (double m : masses) require(m > 0.0 && std::isfinite(m), "cell masses must be positive");
    MeasureState s;
    s.masses = std::move(masses);
    s.t = t;
    refresh_phi(geom, s);
    return s;
}

double sigma_squared_bound(int n) { return 4.0 / (n * a_n_constant(n)); }

GridValues measure_drift(const Torus& geom, FlowKind which, const MeasureState& state, const PrescribingFunction& f,
                         double rho) {
    const int n = geom.dim();
    const double dV = geom.cell_volume();
    const auto Pphi = geom.apply_on_grid(Operator::P, state.phi_grid, true);
    GridValues d(Pphi.size());
    if (which == FlowKind::NQF) {
        double wf = 0.0;
        for (std::size_t i = 0; i < d.size(); ++i) wf += f.grid[i] * state.masses[i];
        if (wf == 0.0) throw ConfigError("omega(f) vanishes");
        const double lam = geom.Q1() / wf;
        for (std::size_t i = 0; i < d.size(); ++i)
            d[i] = -n * ((Pphi[i] + geom.q_ref()) * dV - lam * f.grid[i] * state.masses[i]);
    } else {
        for (std::size_t i = 0; i < d.size(); ++i)
            d[i] = -n * (Pphi[i] + rho * geom.q_ref()) * dV + n * f.grid[i] * state.masses[i];
    }
    return d;
}

MeasureState stochastic_step(const Torus& geom, FlowKind which, const MeasureState& state,
                             const PrescribingFunction& f, const StochasticParams& params, RandomStream& rng,
                             StepDiagnostics* diag) {
    require(state.alive, "stochastic step on an absorbed state");
    const auto& sc = params.scheme;
    require(sc.dt > 0.0 && sc.clamp_floor >= 0.0, "invalid SDE scheme");
    const double dt = sc.dt;
    const auto drift = measure_drift(geom, which, state, f, params.rho);

    MeasureState out;
    out.t = state.t + dt;
    out.masses.resize(state.masses.size());
    const double scale = geom.dim() * params.sigma * std::sqrt(dt);
    GridValues noise;
    if (params.sigma != 0.0)
        noise = sc.noise_mode == NoiseMode::cellwise ? noise_cellwise(state, scale, rng)
                                                     : noise_spectral(geom, state, scale, rng);
    for (std::size_t i = 0; i < out.masses.size(); ++i)
        out.masses[i] = state.masses[i] + drift[i] * dt + (noise.empty() ? 0.0 : noise[i]);

    const double V = out.volume();
    if (diag) diag->raw_volume = V;
    if (!std::isfinite(V)) throw NumericalError("non-finite cell masses at t=" + std::to_string(out.t));
    const double Vref = geom.volume();
    if (V < kVolumeFloor * Vref || V > kVolumeCeil * Vref) {
        out.alive = false;
        out.death_time = out.t;
        out.phi_grid = state.phi_grid;
        return out;
    }

    const double floor = sc.clamp_floor * geom.cell_volume();
    double deficit = 0.0, spare = 0.0;
    std::size_t clamped = 0;
    for (double m : out.masses) {
        if (m < floor) {
            deficit += floor - m;
            ++clamped;
        } else {
            spare += m - floor;
        }
    }
    if (clamped > 0) {
        const double keep = spare > 0.0 ? 1.0 - deficit / spare : 0.0;
        for (double& m : out.masses) m = m < floor ? floor : floor + (m - floor) * keep;
    }
    if (diag) diag->clamped = clamped;
    refresh_phi(geom, out);
    return out;
}

MeasureState euler_volume_form_step(const Torus& geom, FlowKind which, const MeasureState& state,
                                    const PrescribingFunction& f, double rho, double dt) {
    require(geom.full_band(), "volume-form Euler step needs a full-band geometry");
    const auto s = make_state(geom, geom.from_grid(state.phi_grid));
    const auto rhs = flow_rhs(geom, which, s, f, rho);
    GridMeasure m(state.masses.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = state.masses[i] * (1.0 + dt * geom.dim() * rhs[i]);
    return measure_state_from_masses(geom, std::move(m), state.t + dt);
}

FlowRun run_flow(const Torus& geom, FlowKind which, const MeasureState& init, const PrescribingFunction& f,
                 const StochasticParams& params, double T, int cadence, const std::vector<FieldCoeffs>& tests,
                 RandomStream& rng) {
    require(T >= 0.0 && cadence >= 1, "invalid run horizon or cadence");
    FlowRun run;
    run.seed = rng.seed();
    run.stream = rng.stream_id();
    run.sigma_bound_violated = params.sigma * params.sigma >= sigma_squared_bound(geom.dim());
    std::vector<GridValues> hg;
    for (const auto& h : tests) hg.push_back(geom.to_grid(h));
    auto record = [&](const MeasureState& s) {
        run.times.push_back(s.t);
        run.volume.push_back(s.volume());
        std::vector<double> w;
        for (const auto& h : hg) {
            double t = 0.0;
            for (std::size_t i = 0; i < h.size(); ++i) t += h[i] * s.masses[i];
            w.push_back(t);
        }
        run.omega_h.push_back(std::move(w));
    };
    MeasureState s = init;
    record(s);
    const std::size_t steps = std::size_t(std::ceil(T / params.scheme.dt - 1e-9));
    StepDiagnostics diag;
    for (std::size_t k = 1; k <= steps; ++k) {
        try {
            s = stochastic_step(geom, which, s, f, params, rng, &diag);
        } catch (const NumericalError& e) {
            run.aborted = true;
            run.diagnostic = e.what();
            break;
        }
        run.steps = k;
        if (!s.alive) {
            run.death_time = s.death_time;
            break;
        }
        run.clamped_cells += diag.clamped;
        if (k % std::size_t(cadence) == 0 || k == steps) record(s);
    }
    if (run.steps > 0) run.floor_fraction = double(run.clamped_cells) / (double(run.steps) * double(geom.num_cells()));
    run.unreliable = run.floor_fraction > 0.01;
    run.final_state = s;
    return run;
}

}  // namespace qflow
