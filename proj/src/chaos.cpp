#include "qflow/chaos.hpp"

#include <cmath>
#include <numeric>

#include "qflow/errors.hpp"
#include "qflow/stats.hpp"

namespace qflow {

namespace {

constexpr double kLogFloor = 1e-300;

// Integer offsets of the nonzero entries of a mollifier row, with weights.
struct Stencil {
    std::vector<std::vector<int>> offsets;
    std::vector<double> weights;
};

Stencil make_stencil(const Torus& g, const MollifierFamily& fam) {
    Stencil s;
    const auto& row = fam.kernel_row();
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (row[i] == 0.0) continue;
        std::vector<int> o(g.dim());
        std::size_t r = i;
        for (int d = g.dim() - 1; d >= 0; --d) {
            o[d] = int(r % g.grid());
            r /= g.grid();
        }
        s.offsets.push_back(std::move(o));
        s.weights.push_back(row[i]);
    }
    return s;
}

// (eta * m)(x_i) = sum_o row(o) m(x_i - o), a density.
GridValues smooth(const Torus& g, const Stencil& st, const GridMeasure& m) {
    const int n = g.dim(), G = g.grid();
    GridValues out(m.size(), 0.0);
    std::vector<int> xi(n);
    for (std::size_t i = 0; i < m.size(); ++i) {
        std::size_t r = i;
        for (int d = n - 1; d >= 0; --d) {
            xi[d] = int(r % G);
            r /= G;
        }
        double s = 0.0;
        for (std::size_t t = 0; t < st.offsets.size(); ++t) {
            std::size_t j = 0;
            for (int d = 0; d < n; ++d) j = j * G + std::size_t((xi[d] - st.offsets[t][d] + G) % G);
            s += st.weights[t] * m[j];
        }
        out[i] = s;
    }
    return out;
}

MollifierFamily inversion_family(const Torus& g, const InversionPlan& plan, double eps) {
    require(eps > 2.0 * g.length() / g.grid(), "mollification radius below two grid cells");
    return MollifierFamily(g, 1.0 / eps, plan.eta);
}

void check_gamma(int n, double gamma) {
    require(std::isfinite(gamma) && gamma >= 0.0, "gamma must be nonnegative");
    require(gamma < gamma_critical(n), "supercritical gamma");
}

}  // namespace

double GmcMeasure::total() const { return std::accumulate(cells.begin(), cells.end(), 0.0); }

double gamma_critical(int n) { return std::sqrt(2.0 * n); }

GmcMeasure build_gmc(const Torus& geom, const FieldCoeffs& psi, double gamma, double shift_c) {
    check_gamma(geom.dim(), gamma);
    GmcMeasure m;
    m.gamma = gamma;
    m.trunc = geom.trunc();
    m.counterterm = 0.5 * gamma * gamma * cgf_pointwise_variance(geom);
    m.cells = geom.to_grid(psi);
    const double dV = geom.cell_volume();
    for (double& v : m.cells) v = dV * std::exp(gamma * (v + shift_c) - m.counterterm);
    return m;
}

GmcMeasure build_gmc(const Torus& geom, const CgfSample& psi, double gamma, double shift_c) {
    return build_gmc(geom, psi.field, gamma, shift_c);
}

GmcMeasure build_gmc_weighted(const Torus& geom, const FieldCoeffs& psi, double gamma, const GridValues& density,
                              double shift_c) {
    check_gamma(geom.dim(), gamma);
    require(density.size() == geom.num_cells(), "ground density has the wrong size");
    double rho = 0.0;
    for (double l : density) rho = std::max(rho, std::abs(l - 1.0));
    const double bound = gamma > 0.0 ? std::min(1.0, gamma_critical(geom.dim()) / gamma - 1.0) : 1.0;
    require(rho < bound, "ground density outside the admissible band");
    GmcMeasure m;
    m.gamma = gamma;
    m.trunc = geom.trunc();
    const double var = cgf_pointwise_variance(geom);
    m.counterterm = 0.5 * gamma * gamma * var;
    m.cells = geom.to_grid(psi);
    const double dV = geom.cell_volume();
    for (std::size_t i = 0; i < m.cells.size(); ++i) {
        const double l = density[i];
        m.cells[i] = dV * l * std::exp(gamma * (l * m.cells[i] + shift_c) - l * l * m.counterterm);
    }
    return m;
}

GmcMeasure gmc_shift(const Torus& geom, const GmcMeasure& m, const FieldCoeffs& h) {
    require(h.size() == geom.num_modes(), "shift outside the truncation");
    GmcMeasure out = m;
    const auto hg = geom.to_grid(h);
    for (std::size_t i = 0; i < out.cells.size(); ++i) out.cells[i] *= std::exp(m.gamma * hg[i]);
    return out;
}

MomentScan gmc_moment_scan(int n, double L, int G, const std::vector<int>& N_list, double gamma,
                           const std::vector<double>& p_list, int reps, RandomStream& rng) {
    require(reps >= 1000, "moment scan needs at least 1000 replicas");
    require(!N_list.empty() && !p_list.empty(), "empty moment scan");
    check_gamma(n, gamma);
    MomentScan scan;
    scan.p_list = p_list;
    scan.N_list = N_list;
    scan.threshold = gamma > 0.0 ? 2.0 * n / (gamma * gamma) : INFINITY;
    for (std::size_t iN = 0; iN < N_list.size(); ++iN) {
        Torus g(n, L, G, N_list[iN]);
        CgfSampler sampler(g);
        std::vector<RunningStats> acc(p_list.size());
        FieldCoeffs psi;
        for (int r = 0; r < reps; ++r) {
            RandomStream sub = rng.split(iN * std::uint64_t(reps) + r);
            sampler.draw(sub, psi);
            const double M1 = build_gmc(g, psi, gamma).total();
            for (std::size_t ip = 0; ip < p_list.size(); ++ip) acc[ip].add(std::pow(M1, p_list[ip]));
        }
        for (std::size_t ip = 0; ip < p_list.size(); ++ip)
            scan.rows.push_back({N_list[iN], p_list[ip], acc[ip].mean(), acc[ip].stderr_mean()});
    }
    const std::size_t P = p_list.size(), K = N_list.size();
    scan.log_slope.assign(P, 0.0);
    if (K >= 2) {
        for (std::size_t ip = 0; ip < P; ++ip) {
            double sx = 0, sy = 0, sxx = 0, sxy = 0;
            for (std::size_t iN = 0; iN < K; ++iN) {
                const double x = std::log(double(N_list[iN]));
                const double y = std::log(scan.rows[iN * P + ip].mean);
                sx += x;
                sy += y;
                sxx += x * x;
                sxy += x * y;
            }
            scan.log_slope[ip] = (K * sxy - sx * sy) / (K * sxx - sx * sx);
        }
    }
    return scan;
}

CountertermEstimate estimate_counterterm(const Torus& geom, double gamma, const InversionPlan& plan, RandomStream& rng,
                                         std::optional<std::size_t> base_cell) {
    require(gamma > 0.0, "inversion needs gamma > 0");
    require(plan.mc_reps >= 2, "counterterm estimate needs replicas");
    require(!base_cell || *base_cell < geom.num_cells(), "base cell outside the grid");
    std::vector<Stencil> stencils;
    for (double eps : plan.eps_list) stencils.push_back(make_stencil(geom, inversion_family(geom, plan, eps)));
    CgfSampler sampler(geom);
    std::vector<RunningStats> acc(plan.eps_list.size());
    FieldCoeffs psi;
    for (int r = 0; r < plan.mc_reps; ++r) {
        RandomStream sub = rng.split(std::uint64_t(r));
        sampler.draw(sub, psi);
        const auto m = build_gmc(geom, psi, gamma);
        for (std::size_t e = 0; e < stencils.size(); ++e) {
            const auto s = smooth(geom, stencils[e], m.cells);
            if (base_cell) {
                acc[e].add(std::log(std::max(s[*base_cell], kLogFloor)) / gamma);
            } else {
                double tot = 0.0;
                for (double v : s) tot += std::log(std::max(v, kLogFloor));
                acc[e].add(tot / (gamma * double(s.size())));
            }
        }
    }
    CountertermEstimate out;
    for (const auto& a : acc) {
        out.F.push_back(a.mean());
        out.se.push_back(a.stderr_mean());
    }
    return out;
}

void calibrate(const Torus& geom, double gamma, InversionPlan& plan, RandomStream& rng) {
    auto est = estimate_counterterm(geom, gamma, plan, rng);
    plan.F_const = std::move(est.F);
    plan.F_se = std::move(est.se);
}

FieldCoeffs InversionResult::grounded() const {
    FieldCoeffs g = field;
    if (!g.c.empty()) g[0] = 0.0;
    return g;
}

InversionResult invert_gmc(const Torus& geom, const GmcMeasure& m, const InversionPlan& plan, std::size_t eps_index) {
    require(m.gamma > 0.0, "inversion needs gamma > 0");
    require(eps_index < plan.eps_list.size(), "eps index out of range");
    require(plan.F_const.size() == plan.eps_list.size(), "inversion plan is not calibrated");
    require(m.cells.size() == geom.num_cells(), "measure does not match the grid");
    const double eps = plan.eps_list[eps_index];
    const auto st = make_stencil(geom, inversion_family(geom, plan, eps));
    auto s = smooth(geom, st, m.cells);
    InversionResult res;
    res.eps = eps;
    for (double& v : s) {
        if (!(v > 0.0)) throw ConfigError("degenerate measure for inversion");
        if (v < kLogFloor) ++res.floor_hits;
        v = std::log(std::max(v, kLogFloor)) / m.gamma - plan.F_const[eps_index];
    }
    res.field = geom.from_grid(s);
    return res;
}

}  // namespace qflow
