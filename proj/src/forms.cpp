#include "qflow/forms.hpp"

#include <cmath>
#include <limits>

#include "qflow/errors.hpp"
#include "qflow/fields.hpp"
#include "qflow/stats.hpp"

namespace qflow {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

GridValues times(const GridValues& a, const GridValues& b) {
    GridValues out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

double omega_ref(const Torus& geom, const FieldCoeffs& g) { return g[0] * std::sqrt(geom.volume()); }

struct Consts {
    FlowKind kind;
    int n;
    double sigma, gamma, rho, q_ref, Q1;
};

Consts consts(const Torus& geom, const MeasureModel& model) {
    return {model.kind, geom.dim(), model.sigma, model_gamma(geom, model), model.rho, geom.q_ref(), geom.Q1()};
}

// Pairings of one functional, all measure quantities divided by `scale`.
struct GenPairs {
    int k = 0;
    const double* x = nullptr;   // M(g_i)
    const double* fg = nullptr;  // M(f g_i)
    double f = 0.0;              // M(f)
    const double* gg = nullptr;  // M(g_i g_j), row-major
    const double* e = nullptr;   // <g_i, psi>_E
    const double* w = nullptr;   // omega_ref(g_i)
};

GeneratorTerms gen_terms(const Jet& j, const GenPairs& p, double scale, const Consts& c) {
    GeneratorTerms t;
    const double n = c.n, s2 = c.sigma * c.sigma;
    double d_fg = 0.0, d_w = 0.0, d_e = 0.0, dd = 0.0;
    for (int i = 0; i < p.k; ++i) {
        const double gi = j.grad[i];
        d_fg += gi * p.fg[i];
        d_w += gi * p.w[i];
        d_e += gi * p.e[i];
        for (int l = 0; l < p.k; ++l) dd += j.hess(i, l) * p.gg[i * p.k + l];
    }
    if (c.kind == FlowKind::NQF) {
        t.drift_f = n * c.Q1 * d_fg / p.f;
        t.q_ref_term = -n * c.q_ref * d_w;
    } else {
        t.drift_f = n * scale * d_fg;
        t.q_ref_term = -n * c.rho * c.q_ref * d_w;
    }
    t.second_order = 0.5 * n * n * s2 * scale * dd;
    t.field_term = -(n * n * s2 / (2.0 * c.gamma)) * d_e;
    return t;
}

// Per-psi precomputation: grounded CGF draw, its GMC normalized to unit mass,
// and a batch of pairings against fixed grid functions and E-directions.
class Probe {
public:
    Probe(const Torus& geom, double gamma) : geom_(geom), gamma_(gamma), sampler_(geom) {
        counterterm_ = 0.5 * gamma * gamma * cgf_pointwise_variance(geom);
    }

    int add_grid(const GridValues& g) {
        grids_.push_back(g);
        return int(grids_.size()) - 1;
    }
    int add_E(const FieldCoeffs& g) {
        edirs_.push_back(apply_operator(geom_, Operator::p, g));
        return int(edirs_.size()) - 1;
    }

    void finalize() {
        A_.resize(Eigen::Index(grids_.size()), Eigen::Index(geom_.num_cells()));
        for (std::size_t r = 0; r < grids_.size(); ++r)
            for (std::size_t c = 0; c < geom_.num_cells(); ++c) A_(Eigen::Index(r), Eigen::Index(c)) = grids_[r][c];
        E_.resize(Eigen::Index(edirs_.size()), Eigen::Index(geom_.num_modes()));
        for (std::size_t r = 0; r < edirs_.size(); ++r)
            for (std::size_t c = 0; c < geom_.num_modes(); ++c) E_(Eigen::Index(r), Eigen::Index(c)) = edirs_[r][c];
        mhat_.resize(Eigen::Index(geom_.num_cells()));
    }

    void draw(RandomStream& rng) {
        sampler_.draw(rng, psi_);
        const GridValues g = geom_.to_grid(psi_);
        const double dV = geom_.cell_volume();
        double total = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double v = dV * std::exp(gamma_ * g[i] - counterterm_);
            mhat_[Eigen::Index(i)] = v;
            total += v;
        }
        mhat_ /= total;
        log_m1_ = std::log(total);
        pairs_ = A_ * mhat_;
        Eigen::Map<const Eigen::VectorXd> pv(psi_.c.data(), Eigen::Index(psi_.size()));
        epairs_ = E_ * pv;
    }

    double pair(int idx) const { return pairs_[idx]; }
    double epair(int idx) const { return epairs_[idx]; }
    const double* pairs() const { return pairs_.data(); }
    double log_m1() const { return log_m1_; }
    const FieldCoeffs& psi() const { return psi_; }

private:
    const Torus& geom_;
    double gamma_;
    CgfSampler sampler_;
    double counterterm_ = 0.0;
    std::vector<GridValues> grids_;
    std::vector<FieldCoeffs> edirs_;
    RowMatrix A_, E_;
    FieldCoeffs psi_;
    Eigen::VectorXd mhat_, pairs_, epairs_;
    double log_m1_ = 0.0;
};

// Indices of one functional's pairings inside a Probe.
struct Registered {
    int k = 0;
    std::vector<int> x, fg, gg, e;
    std::vector<double> w;
};

Registered register_functional(const Torus& geom, Probe& probe, const CylinderFunctional& G, const GridValues& f) {
    Registered r;
    r.k = G.arity();
    for (int i = 0; i < r.k; ++i) {
        r.x.push_back(probe.add_grid(G.h_grid[i]));
        r.fg.push_back(probe.add_grid(times(f, G.h_grid[i])));
        r.e.push_back(probe.add_E(G.h[i]));
        r.w.push_back(omega_ref(geom, G.h[i]));
    }
    for (int i = 0; i < r.k; ++i)
        for (int l = 0; l < r.k; ++l) r.gg.push_back(probe.add_grid(times(G.h_grid[i], G.h_grid[l])));
    return r;
}

// Snapshot of a registered functional's pairings for the current draw.
struct Snapshot {
    double x[kMaxArity], fg[kMaxArity], gg[kMaxArity * kMaxArity], e[kMaxArity], w[kMaxArity];
    GenPairs view(int k, double f) const { return {k, x, fg, f, gg, e, w}; }
};

Snapshot snapshot(const Probe& p, const Registered& r) {
    Snapshot s;
    for (int i = 0; i < r.k; ++i) {
        s.x[i] = p.pair(r.x[i]);
        s.fg[i] = p.pair(r.fg[i]);
        s.e[i] = p.epair(r.e[i]);
        s.w[i] = r.w[i];
    }
    for (std::size_t i = 0; i < r.gg.size(); ++i) s.gg[i] = p.pair(r.gg[i]);
    return s;
}

Jet jet_at(const CylinderFunctional& G, const Snapshot& s, double scale) {
    double x[kMaxArity];
    for (int i = 0; i < G.arity(); ++i) x[i] = scale * s.x[i];
    return G.q->jet(x);
}

// log density of nu per unit u at (psi, u); p_f is M(f)/M(1).
double log_density(const Consts& c, double exponent, double log_m1, double p_f, double u) {
    if (c.kind == FlowKind::NQF) {
        const double lf = exponent == 0.0 ? 0.0 : exponent * (log_m1 + std::log(p_f));
        return lf - std::log(c.gamma);
    }
    const double kappa = 2.0 / (c.n * c.sigma * c.sigma);
    return exponent * (log_m1 - u) + kappa * std::exp(u) * p_f - std::log(c.gamma);
}

struct Quadrature {
    std::vector<double> u;
    double du = 0.0;
};

// Interior trapezoid nodes of |u| < |log eps|.
Quadrature u_nodes(double eps, int nodes) {
    require(nodes >= 8, "too few quadrature nodes");
    const double ell = -std::log(eps);
    Quadrature q;
    const double ds = 2.0 / (nodes + 1);
    for (int j = 1; j <= nodes; ++j) q.u.push_back(ell * (-1.0 + j * ds));
    q.du = ell * ds;
    return q;
}

double ess(double sw, double sw2) { return sw2 > 0.0 ? sw * sw / sw2 : 0.0; }

double z_score(double mean, double se) {
    if (se > 0.0) return mean / se;
    if (mean == 0.0) return 0.0;
    return mean > 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
}

void require_ess(double e) {
    if (e < kMinEss) throw NumericalError("effective sample size below 100; refusing to report");
}

}  // namespace

double gamma_of_sigma(int n, double sigma) { return n * std::sqrt(a_n_constant(n) * sigma * sigma / 2.0); }

double model_gamma(const Torus& geom, const MeasureModel& model) { return gamma_of_sigma(geom.dim(), model.sigma); }

double marginal_exponent(const Torus& geom, const MeasureModel& model) {
    if (geom.Q1() == 0.0) return 0.0;
    require(model.sigma > 0.0, "sigma = 0 needs q_ref_const = 0");
    const double a = 2.0 * geom.Q1() / (geom.dim() * model.sigma * model.sigma);
    return model.kind == FlowKind::LQF ? model.rho * a : a;
}

void check_regime(const Torus& geom, const MeasureModel& model) {
    require(model.sigma >= 0.0 && std::isfinite(model.sigma), "sigma must be nonnegative");
    require(model.f.grid.size() == geom.num_cells(), "prescribing function does not match geometry");
    if (model.kind == FlowKind::NQF) {
        require(model.f.sign_class == SignClass::strictly_positive, "NQF needs a strictly positive prescribing function");
    } else {
        require(model.f.sign_class == SignClass::nonpositive, "LQF needs a nonpositive prescribing function");
        if (model.sigma == 0.0) {
            for (double v : model.f.grid) require(v == 0.0, "sigma = 0 in LQF needs f = 0");
        }
    }
    const double gamma = model_gamma(geom, model);
    require(gamma < gamma_critical(geom.dim()), "supercritical gamma");
    const double a = marginal_exponent(geom, model);
    if (gamma > 0.0)
        require(a < 2.0 * geom.dim() / (gamma * gamma), "marginal not normalizable (A2/A2′ violated)");
}

IbpReport ibp_check(const Torus& geom, IbpTarget target, const CylinderFunctional& G, const FieldCoeffs& h,
                    const MeasureModel& model, const IbpOptions& opts, RandomStream& rng) {
    require(h.size() == geom.num_modes(), "coefficient vector does not match geometry");
    require(opts.reps >= 2, "need at least two samples");
    const bool weighted = target == IbpTarget::nqf || target == IbpTarget::lqf;
    MeasureModel m = model;
    if (target == IbpTarget::nqf) m.kind = FlowKind::NQF;
    if (target == IbpTarget::lqf) m.kind = FlowKind::LQF;
    if (weighted) check_regime(geom, m);
    if (target == IbpTarget::lqf) require(h.grounded(), "LQF integration by parts needs a grounded direction h");
    const Consts c = consts(geom, m);
    require(c.gamma > 0.0, "integration by parts needs gamma > 0");
    require(c.gamma < gamma_critical(geom.dim()), "supercritical gamma");

    Probe probe(geom, c.gamma);
    const GridValues hg = geom.to_grid(h);
    const GridValues fg = weighted ? m.f.grid : GridValues(geom.num_cells(), 1.0);
    std::vector<int> ix, ixh;
    for (int i = 0; i < G.arity(); ++i) {
        ix.push_back(probe.add_grid(G.h_grid[i]));
        ixh.push_back(probe.add_grid(times(G.h_grid[i], hg)));
    }
    const int i_f = probe.add_grid(fg), i_fh = probe.add_grid(times(fg, hg));
    const int i_e = probe.add_E(h);
    probe.finalize();

    const double V = geom.volume(), w_h = omega_ref(geom, h);
    const double hbar = w_h / V;
    const double exponent = weighted ? marginal_exponent(geom, m) : 0.0;
    const double two_over = 2.0 / (c.n * c.sigma * c.sigma);
    const Quadrature quad = u_nodes(G.window(), opts.quad_nodes);

    RunningStats L, R, D, S;
    double sw = 0.0, sw2 = 0.0;
    double x[kMaxArity];
    for (std::size_t rep = 0; rep < opts.reps; ++rep) {
        probe.draw(rng);
        const double eh = probe.epair(i_e);
        double lhs = 0.0, rhs = 0.0, wsum = 0.0, absum = 0.0;
        if (target == IbpTarget::grounded) {
            const double m1 = std::exp(probe.log_m1());
            for (int i = 0; i < G.arity(); ++i) x[i] = m1 * probe.pair(ix[i]);
            const Jet j = G.q->jet(x);
            double dh = 0.0, dbar = 0.0;
            for (int i = 0; i < G.arity(); ++i) {
                dh += j.grad[i] * m1 * probe.pair(ixh[i]);
                dbar += j.grad[i] * x[i];
            }
            lhs = c.gamma * dh - c.gamma * hbar * dbar;
            rhs = j.value * eh;
            absum = c.gamma * (std::abs(dh) + std::abs(hbar * dbar)) + std::abs(rhs);
            wsum = 1.0;
        } else {
            const double pf = probe.pair(i_f), ratio = probe.pair(i_fh) / pf;
            for (double u : quad.u) {
                const double scale = std::exp(u);
                for (int i = 0; i < G.arity(); ++i) x[i] = scale * probe.pair(ix[i]);
                const double dens =
                    target == IbpTarget::ungrounded
                        ? 1.0 / c.gamma
                        : std::exp(log_density(c, exponent, probe.log_m1(), pf, u));
                wsum += dens * quad.du;
                const Jet j = G.q->jet(x);
                if (j.value == 0.0 && j.grad.isZero()) continue;
                double dh = 0.0;
                for (int i = 0; i < G.arity(); ++i) dh += j.grad[i] * scale * probe.pair(ixh[i]);
                dh *= c.gamma;
                double l = 0.0, r = 0.0;
                switch (target) {
                    case IbpTarget::ungrounded: {
                        const double cc = (u - probe.log_m1()) / c.gamma;
                        const double rv = std::exp(opts.r_rate * cc), rd = opts.r_rate / V * rv;
                        l = rd * w_h * j.value + rv * dh;
                        r = rv * j.value * eh;
                        break;
                    }
                    case IbpTarget::nqf:
                        l = j.value * eh;
                        r = dh + c.gamma * two_over * c.Q1 * j.value * ratio -
                            c.gamma * two_over * c.q_ref * w_h * j.value;
                        break;
                    case IbpTarget::lqf:
                        l = j.value * eh;
                        r = dh + c.gamma * two_over * j.value * scale * probe.pair(i_fh) -
                            c.rho * c.q_ref * std::sqrt(2.0 * geom.a_n() / (c.sigma * c.sigma)) * j.value * w_h;
                        break;
                    case IbpTarget::grounded:
                        break;
                }
                lhs += l * dens * quad.du;
                rhs += r * dens * quad.du;
                absum += (std::abs(l) + std::abs(r)) * dens * quad.du;
            }
        }
        L.add(lhs);
        R.add(rhs);
        D.add(lhs - rhs);
        S.add(absum);
        sw += wsum;
        sw2 += wsum * wsum;
    }
    IbpReport rep;
    rep.reps = opts.reps;
    rep.ess = ess(sw, sw2);
    if (weighted) require_ess(rep.ess);
    rep.term_scale = S.mean();
    rep.lhs = L.mean();
    rep.lhs_se = L.stderr_mean();
    rep.rhs = R.mean();
    rep.rhs_se = R.stderr_mean();
    rep.diff_se = D.stderr_mean();
    rep.z = z_score(D.mean(), rep.diff_se);
    return rep;
}

GeneratorTerms generator_terms(const Torus& geom, const CylinderFunctional& G, const FieldCoeffs& psi,
                               const MeasureModel& model) {
    const Consts c = consts(geom, model);
    require(c.gamma > 0.0, "generator needs gamma > 0");
    const GmcMeasure m = build_gmc(geom, psi, c.gamma);
    const int k = G.arity();
    Snapshot s;
    for (int i = 0; i < k; ++i) {
        s.x[i] = pair_measure(m, G.h_grid[i]);
        s.fg[i] = pair_measure(m, times(model.f.grid, G.h_grid[i]));
        s.e[i] = pairing_E(geom, G.h[i], psi);
        s.w[i] = omega_ref(geom, G.h[i]);
        for (int l = 0; l < k; ++l) s.gg[i * k + l] = pair_measure(m, times(G.h_grid[i], G.h_grid[l]));
    }
    const Jet j = G.q->jet(s.x);
    return gen_terms(j, s.view(k, pair_measure(m, model.f.grid)), 1.0, c);
}

double apply_generator(const Torus& geom, const CylinderFunctional& G, const FieldCoeffs& psi,
                       const MeasureModel& model) {
    return generator_terms(geom, G, psi, model).total();
}

double carre_du_champ(const Torus& geom, const CylinderFunctional& F, const CylinderFunctional& G,
                      const FieldCoeffs& psi, const MeasureModel& model) {
    const Consts c = consts(geom, model);
    const GmcMeasure m = build_gmc(geom, psi, c.gamma);
    const auto xf = coordinates(F, m), xg = coordinates(G, m);
    const Jet jf = F.q->jet(xf.data()), jg = G.q->jet(xg.data());
    double s = 0.0;
    for (int i = 0; i < F.arity(); ++i)
        for (int l = 0; l < G.arity(); ++l) {
            if (jf.grad[i] == 0.0 || jg.grad[l] == 0.0) continue;
            s += jf.grad[i] * jg.grad[l] * pair_measure(m, times(F.h_grid[i], G.h_grid[l]));
        }
    return c.n * c.n * c.sigma * c.sigma * s;
}

namespace {

enum class PairKind { symmetry, form };

PairEstimate pair_check(PairKind kind, const Torus& geom, const CylinderFunctional& F, const CylinderFunctional& G,
                        const MeasureModel& model, std::size_t reps, RandomStream& rng, int quad_nodes) {
    check_regime(geom, model);
    const Consts c = consts(geom, model);
    require(c.gamma > 0.0, "generator needs gamma > 0");
    require(reps >= 2, "need at least two samples");
    Probe probe(geom, c.gamma);
    const Registered rf = register_functional(geom, probe, F, model.f.grid);
    const Registered rg = register_functional(geom, probe, G, model.f.grid);
    const int i_f = probe.add_grid(model.f.grid);
    std::vector<int> cross;
    for (int i = 0; i < F.arity(); ++i)
        for (int l = 0; l < G.arity(); ++l) cross.push_back(probe.add_grid(times(F.h_grid[i], G.h_grid[l])));
    probe.finalize();

    const double exponent = marginal_exponent(geom, model);
    const Quadrature quad = u_nodes(std::min(F.window(), G.window()), quad_nodes);
    const double half_n2s2 = 0.5 * c.n * c.n * c.sigma * c.sigma;

    RunningStats A, B, D;
    double sw = 0.0, sw2 = 0.0;
    for (std::size_t rep = 0; rep < reps; ++rep) {
        probe.draw(rng);
        const Snapshot sf = snapshot(probe, rf), sg = snapshot(probe, rg);
        const double pf = probe.pair(i_f);
        double a = 0.0, b = 0.0, wsum = 0.0;
        for (double u : quad.u) {
            const double scale = std::exp(u);
            const double dens = std::exp(log_density(c, exponent, probe.log_m1(), pf, u));
            wsum += dens * quad.du;
            const Jet jf = jet_at(F, sf, scale), jg = jet_at(G, sg, scale);
            if (jf.value == 0.0 && jg.value == 0.0 && jf.grad.isZero() && jg.grad.isZero()) continue;
            const double lg = gen_terms(jg, sg.view(G.arity(), pf), scale, c).total();
            if (kind == PairKind::symmetry) {
                const double lf = gen_terms(jf, sf.view(F.arity(), pf), scale, c).total();
                a += jf.value * lg * dens * quad.du;
                b += jg.value * lf * dens * quad.du;
            } else {
                double e = 0.0;
                for (int i = 0; i < F.arity(); ++i)
                    for (int l = 0; l < G.arity(); ++l)
                        e += jf.grad[i] * jg.grad[l] * scale * probe.pair(cross[std::size_t(i * G.arity() + l)]);
                a += -jf.value * lg * dens * quad.du;
                b += half_n2s2 * e * dens * quad.du;
            }
        }
        A.add(a);
        B.add(b);
        D.add(a - b);
        sw += wsum;
        sw2 += wsum * wsum;
    }
    PairEstimate out;
    out.reps = reps;
    out.ess = ess(sw, sw2);
    require_ess(out.ess);
    out.a = A.mean();
    out.a_se = A.stderr_mean();
    out.b = B.mean();
    out.b_se = B.stderr_mean();
    out.diff_se = D.stderr_mean();
    out.z = z_score(D.mean(), out.diff_se);
    return out;
}

}  // namespace

PairEstimate generator_symmetry(const Torus& geom, const CylinderFunctional& F, const CylinderFunctional& G,
                                const MeasureModel& model, std::size_t reps, RandomStream& rng, int quad_nodes) {
    return pair_check(PairKind::symmetry, geom, F, G, model, reps, rng, quad_nodes);
}

PairEstimate form_identity(const Torus& geom, const CylinderFunctional& F, const CylinderFunctional& G,
                           const MeasureModel& model, std::size_t reps, RandomStream& rng, int quad_nodes) {
    return pair_check(PairKind::form, geom, F, G, model, reps, rng, quad_nodes);
}

}  // namespace qflow
