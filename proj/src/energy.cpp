#include "qflow/energy.hpp"

#include <cmath>

#include "qflow/errors.hpp"

namespace qflow {

namespace {

Eigen::VectorXd to_eigen(const FieldCoeffs& u) { return Eigen::Map<const Eigen::VectorXd>(u.c.data(), u.c.size()); }

FieldCoeffs from_eigen(const Eigen::VectorXd& v) { return FieldCoeffs{std::vector<double>(v.data(), v.data() + v.size())}; }

GridValues scaled(const Torus& g, const GridValues& dens, const GridValues* other = nullptr) {
    GridValues w(dens.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = g.cell_volume() * dens[i] * (other ? (*other)[i] : 1.0);
    return w;
}

double linear_q(const Torus& g, FlowKind which, double rho) { return which == FlowKind::LQF ? rho * g.q_ref() : g.q_ref(); }

bool finite_state(const SmoothConformalState& s) {
    if (!std::isfinite(s.volume) || s.volume <= 0.0) return false;
    for (double v : s.phi.c)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace

PrescribingFunction make_prescribing(const Torus& geom, const FieldCoeffs& f) {
    require(f.size() == geom.num_modes(), "prescribing function outside the truncation");
    PrescribingFunction p{f, geom.to_grid(f), SignClass::strictly_positive};
    double lo = INFINITY, hi = -INFINITY;
    for (double v : p.grid) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (lo > 0.0)
        p.sign_class = SignClass::strictly_positive;
    else if (hi <= 0.0)
        p.sign_class = SignClass::nonpositive;
    else
        throw ConfigError("prescribing function changes sign");
    return p;
}

PrescribingFunction constant_prescribing(const Torus& geom, double value) {
    return make_prescribing(geom, geom.constant(value));
}

SmoothConformalState make_state(const Torus& geom, const FieldCoeffs& phi) {
    require(phi.size() == geom.num_modes(), "conformal factor outside the truncation");
    SmoothConformalState s;
    s.phi = phi;
    s.phi_grid = geom.to_grid(phi);
    s.density.resize(s.phi_grid.size());
    for (std::size_t i = 0; i < s.density.size(); ++i) s.density[i] = std::exp(geom.dim() * s.phi_grid[i]);
    s.volume = geom.quadrature(s.density);
    return s;
}

double omega(const Torus& geom, const SmoothConformalState& s, const GridValues& g) {
    double t = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) t += s.density[i] * g[i];
    return t * geom.cell_volume();
}

double q_pairing(const Torus& geom, const SmoothConformalState& s, const FieldCoeffs& h) {
    const auto Ph = geom.to_grid(apply_operator(geom, Operator::P, h));
    const auto hg = geom.to_grid(h);
    double t = 0.0;
    for (std::size_t i = 0; i < hg.size(); ++i) t += geom.q_ref() * hg[i] + s.phi_grid[i] * Ph[i];
    return t * geom.cell_volume();
}

GridValues q_curvature(const Torus& geom, const SmoothConformalState& s) {
    auto Q = geom.to_grid(apply_operator(geom, Operator::P, s.phi));
    for (std::size_t i = 0; i < Q.size(); ++i) Q[i] = (geom.q_ref() + Q[i]) / s.density[i];
    return Q;
}

double energy(const Torus& geom, Functional which, const SmoothConformalState& s, const PrescribingFunction& f,
              double rho) {
    const int n = geom.dim();
    const double quad = 0.5 * l2_inner(s.phi, apply_operator(geom, Operator::P, s.phi));
    const double mean_phi = s.phi[0] * std::sqrt(geom.volume());  // omega_ref(phi)
    const double wf = omega(geom, s, f.grid);
    if (which == Functional::E1) {
        if (!(wf > 0.0)) throw ConfigError("nonpositive log argument in E1");
        return quad + geom.q_ref() * mean_phi - geom.Q1() / n * std::log(wf);
    }
    return quad + rho * geom.q_ref() * mean_phi - wf / n;
}

GridValues flow_rhs(const Torus& geom, FlowKind which, const SmoothConformalState& s, const PrescribingFunction& f,
                    double rho) {
    auto Pphi = geom.to_grid(apply_operator(geom, Operator::P, s.phi));
    const double q = linear_q(geom, which, rho);
    double lam = 1.0;
    if (which == FlowKind::NQF) {
        const double wf = omega(geom, s, f.grid);
        if (wf == 0.0) throw ConfigError("omega(f) vanishes");
        lam = geom.Q1() / wf;
    }
    GridValues r(Pphi.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = -((q + Pphi[i]) / s.density[i] - lam * f.grid[i]);
    return r;
}

FieldCoeffs galerkin_velocity(const Torus& geom, FlowKind which, const SmoothConformalState& s,
                              const PrescribingFunction& f, double rho) {
    const auto rhs = flow_rhs(geom, which, s, f, rho);
    const Eigen::MatrixXd M = geom.weighted_gram(scaled(geom, s.density));
    const Eigen::VectorXd b = geom.weighted_moments(scaled(geom, s.density, &rhs));
    return from_eigen(M.llt().solve(b));
}

namespace {

// (M_n + dt K) phi_{n+1} = M_n phi_n - dt b + dt lam F_n; for NQF lam is chosen so
// the volume is unchanged by the step.
FieldCoeffs imex_step(const Torus& g, FlowKind which, const SmoothConformalState& s, const PrescribingFunction& f,
                      double dt, double rho) {
    const std::size_t M = g.num_modes();
    const Eigen::MatrixXd Mn = g.weighted_gram(scaled(g, s.density));
    Eigen::MatrixXd A = Mn;
    for (std::size_t a = 0; a < M; ++a) A(a, a) += dt * g.modes()[a].Lambda;
    Eigen::VectorXd r0 = Mn * to_eigen(s.phi);
    r0[0] -= dt * linear_q(g, which, rho) * std::sqrt(g.volume());
    const Eigen::VectorXd F = g.weighted_moments(scaled(g, s.density, &f.grid));
    const auto llt = A.llt();
    if (which == FlowKind::LQF) return from_eigen(llt.solve(r0 + dt * F));

    const Eigen::VectorXd u = llt.solve(r0);
    const Eigen::VectorXd w = llt.solve(dt * F);
    const auto ug = g.to_grid(from_eigen(u)), wg = g.to_grid(from_eigen(w));
    const int n = g.dim();
    const double target = s.volume, dV = g.cell_volume();
    double lam = g.Q1() / omega(g, s, f.grid);
    for (int it = 0; it < 50; ++it) {
        double V = 0.0, dVdl = 0.0;
        for (std::size_t i = 0; i < ug.size(); ++i) {
            const double e = std::exp(n * (ug[i] + lam * wg[i]));
            V += e;
            dVdl += n * wg[i] * e;
        }
        V *= dV;
        dVdl *= dV;
        const double step = (V - target) / dVdl;
        lam -= step;
        if (std::abs(step) <= 1e-15 * (1.0 + std::abs(lam))) break;
    }
    return from_eigen(u + lam * w);
}

FieldCoeffs rk4_step(const Torus& g, FlowKind which, const SmoothConformalState& s, const PrescribingFunction& f,
                     double dt, double rho) {
    auto vel = [&](const FieldCoeffs& phi) { return galerkin_velocity(g, which, make_state(g, phi), f, rho); };
    const auto k1 = galerkin_velocity(g, which, s, f, rho);
    const auto k2 = vel(s.phi + (0.5 * dt) * k1);
    const auto k3 = vel(s.phi + (0.5 * dt) * k2);
    const auto k4 = vel(s.phi + dt * k3);
    return s.phi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

Trajectory integrate_deterministic(const Torus& geom, FlowKind which, const FieldCoeffs& phi0,
                                   const PrescribingFunction& f, const DetOptions& opt) {
    require(opt.dt > 0.0 && opt.T >= 0.0, "time step and horizon must be positive");
    require(opt.cadence >= 1, "cadence must be at least 1");
    if (which == FlowKind::NQF)
        require(f.sign_class == SignClass::strictly_positive, "NQF needs a strictly positive prescribing function");
    else
        require(f.sign_class == SignClass::nonpositive, "LQF needs a nonpositive prescribing function");
    const Functional E = which == FlowKind::NQF ? Functional::E1 : Functional::E2;

    Trajectory tr;
    auto s = make_state(geom, phi0);
    if (!finite_state(s)) {
        tr.aborted = true;
        tr.diagnostic = "non-finite initial state";
        tr.final_state = s;
        return tr;
    }
    if (opt.scheme == DetScheme::rk4) {
        double dmax = 0.0;
        for (double d : s.density) dmax = std::max(dmax, 1.0 / d);
        require(opt.dt * geom.Lambda_max() * dmax <= 2.5, "rk4 step exceeds stability limit");
    }
    auto record = [&](double t) {
        const auto Q = q_curvature(geom, s);
        GridValues Q2(Q.size());
        for (std::size_t i = 0; i < Q.size(); ++i) Q2[i] = Q[i] * Q[i];
        TrajectoryPoint p{t, s.volume, energy(geom, E, s, f, opt.rho), std::sqrt(omega(geom, s, Q2)),
                          q_pairing(geom, s, geom.constant(1.0)), {}};
        if (opt.snapshots) p.phi = s.phi;
        tr.points.push_back(std::move(p));
    };
    record(0.0);
    const int steps = int(std::ceil(opt.T / opt.dt - 1e-9));
    for (int k = 1; k <= steps; ++k) {
        const double h = std::min(opt.dt, opt.T - (k - 1) * opt.dt);
        auto next = opt.scheme == DetScheme::imex ? imex_step(geom, which, s, f, h, opt.rho)
                                                  : rk4_step(geom, which, s, f, h, opt.rho);
        s = make_state(geom, next);
        tr.steps = k;
        if (!finite_state(s)) {
            tr.aborted = true;
            tr.diagnostic = "non-finite state at step " + std::to_string(k);
            break;
        }
        if (k % opt.cadence == 0 || k == steps) record(k * opt.dt > opt.T ? opt.T : k * opt.dt);
    }
    tr.final_state = s;
    return tr;
}

}  // namespace qflow
