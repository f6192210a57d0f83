#include "qflow/fields.hpp"

#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "qflow/errors.hpp"

namespace qflow {

namespace {

constexpr double kPi = std::numbers::pi;

double basis_at(const Torus& g, const Mode& m, const std::vector<double>& x) {
    double th = 0.0;
    for (int d = 0; d < g.dim(); ++d) th += 2.0 * kPi * m.k[d] * x[d] / g.length();
    const double V = g.volume();
    switch (m.kind) {
        case ModeKind::constant: return 1.0 / std::sqrt(V);
        case ModeKind::nyquist: return std::cos(th) / std::sqrt(V);
        case ModeKind::cosine: return std::sqrt(2.0 / V) * std::cos(th);
        case ModeKind::sine: return std::sqrt(2.0 / V) * std::sin(th);
    }
    return 0.0;
}

}  // namespace

CgfSampler::CgfSampler(const Torus& geom) : geom_(&geom), sd_(geom.num_modes(), 0.0) {
    const auto& modes = geom.modes();
    for (std::size_t a = 1; a < modes.size(); ++a) sd_[a] = 1.0 / std::sqrt(geom.a_n() * modes[a].Lambda);
}

void CgfSampler::draw(RandomStream& rng, FieldCoeffs& out) const {
    out.c.resize(sd_.size());
    out[0] = 0.0;
    for (std::size_t a = 1; a < sd_.size(); ++a) out[a] = sd_[a] * rng.normal();
}

CgfSample CgfSampler::sample(RandomStream& rng) const {
    CgfSample s;
    s.seed = rng.seed();
    s.stream = rng.stream_id();
    s.trunc = geom_->trunc();
    draw(rng, s.field);
    return s;
}

CgfSample sample_cgf(const Torus& geom, RandomStream& rng) { return CgfSampler(geom).sample(rng); }

double pair_with_E(const Torus& geom, const FieldCoeffs& h, const CgfSample& psi) {
    return pairing_E(geom, h, psi.field);
}

double cgf_pointwise_variance(const Torus& geom) {
    const auto& modes = geom.modes();
    const double V = geom.volume();
    double s = 0.0;
    for (std::size_t a = 1; a < modes.size(); ++a) {
        // |e_cos|^2 + |e_sin|^2 = 2/V pointwise; a self-conjugate mode gives 1/V on the grid
        s += 1.0 / (V * geom.a_n() * modes[a].Lambda);
    }
    return s;
}

double truncated_kernel(const Torus& geom, const std::vector<double>& x, const std::vector<double>& y) {
    const auto& modes = geom.modes();
    double s = 0.0;
    for (std::size_t a = 1; a < modes.size(); ++a)
        s += basis_at(geom, modes[a], x) * basis_at(geom, modes[a], y) / (geom.a_n() * modes[a].Lambda);
    return s;
}

GridValues truncated_kernel_row(const Torus& geom) {
    const auto& modes = geom.modes();
    const std::vector<double> origin(geom.dim(), 0.0);
    FieldCoeffs c = geom.zeros();
    for (std::size_t a = 1; a < modes.size(); ++a)
        c[a] = basis_at(geom, modes[a], origin) / (geom.a_n() * modes[a].Lambda);
    return geom.to_grid(c);
}

double mollifier_profile(MollifierProfile p, double r) {
    switch (p) {
        case MollifierProfile::tent: return r < 1.0 ? 1.0 - r : 0.0;
    }
    return 0.0;
}

MollifierFamily::MollifierFamily(const Torus& geom, double j, MollifierProfile profile)
    : MollifierFamily(geom, j, profile, true) {}

MollifierFamily MollifierFamily::continuum_only(const Torus& geom, double j, MollifierProfile profile) {
    return MollifierFamily(geom, j, profile, false);
}

MollifierFamily::MollifierFamily(const Torus& geom, double j, MollifierProfile profile, bool grid_kernel)
    : geom_(&geom), j_(j), profile_(profile) {
    require(j > 0.0 && std::isfinite(j), "mollifier scale must be positive");
    require(1.0 / j < geom.length() / 2.0, "mollifier support exceeds half the period");
    if (!grid_kernel) return;
    const double cell = geom.length() / geom.grid();
    require(1.0 / j > cell, "mollifier support smaller than grid resolution");

    const std::vector<double> origin(geom.dim(), 0.0);
    row_.assign(geom.num_cells(), 0.0);
    double mass = 0.0;
    for (std::size_t i = 0; i < geom.num_cells(); ++i) {
        const double w = mollifier_profile(profile, j * geom.distance(origin, geom.point(i)));
        row_[i] = w;
        mass += w;
    }
    norm_ = mass * geom.cell_volume();
    for (double& w : row_) w /= norm_;

    // grid convolution multiplier: dV * DFT(row), real since the row is even
    const auto spec = geom.forward_dft(row_);
    mult_.resize(geom.num_cells());
    for (std::size_t idx = 0; idx < mult_.size(); ++idx) mult_[idx] = geom.cell_volume() * spec[idx].real();
    for (std::size_t i = 0; i < row_.size(); ++i)
        if (row_[i] != 0.0) support_.push_back({geom.point(i), row_[i]});
}

double MollifierFamily::grid_multiplier_at(const std::vector<int>& k) const {
    require(has_grid_kernel(), "mollifier family has no grid kernel");
    const Torus& g = *geom_;
    double s = 0.0;
    for (const auto& [x, w] : support_) {
        double th = 0.0;
        for (int d = 0; d < g.dim(); ++d) th += 2.0 * kPi * k[d] * x[d] / g.length();
        s += w * std::cos(th);
    }
    return s * g.cell_volume();
}

double MollifierFamily::continuum_multiplier(double xi) const {
    const int n = geom_->dim();
    const double R = 1.0 / j_;
    using boost::math::quadrature::gauss;
    const double sphere = 2.0 * std::pow(kPi, n / 2.0) / boost::math::tgamma(n / 2.0);
    auto eta = [&](double r) { return mollifier_profile(profile_, j_ * r); };
    const double mass = sphere * gauss<double, 30>::integrate([&](double r) { return eta(r) * std::pow(r, n - 1); }, 0.0, R);
    if (xi == 0.0) return 1.0;
    const double nu = n / 2.0 - 1.0;
    const double integral = gauss<double, 30>::integrate(
        [&](double r) { return eta(r) * boost::math::cyl_bessel_j(nu, xi * r) * std::pow(r, n / 2.0); }, 0.0, R);
    return std::pow(2.0 * kPi, n / 2.0) * std::pow(xi, 1.0 - n / 2.0) * integral / mass;
}

GridValues mollified_field(const Torus& geom, const MollifierFamily& fam, const CgfSample& psi) {
    require(fam.has_grid_kernel(), "mollifier family has no grid kernel");
    return geom.convolve_multiplier(geom.to_grid(psi.field), fam.grid_multiplier());
}

GridValues mollified_kernel_diag(const Torus& geom, const MollifierFamily& fam) {
    const auto& modes = geom.modes();
    std::vector<double> weight(modes.size(), 0.0);
    for (std::size_t a = 1; a < modes.size(); ++a) {
        const double q = fam.grid_multiplier_at(modes[a].k);
        weight[a] = q * q / (geom.a_n() * modes[a].Lambda);
    }
    GridValues out(geom.num_cells(), 0.0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto x = geom.point(i);
        double s = 0.0;
        for (std::size_t a = 1; a < modes.size(); ++a) {
            const double e = basis_at(geom, modes[a], x);
            s += weight[a] * e * e;
        }
        out[i] = s;
    }
    return out;
}

double mollified_kernel(const Torus& geom, const MollifierFamily& fam, const std::vector<double>& x,
                        const std::vector<double>& y, KernelDiscretization disc) {
    const auto& modes = geom.modes();
    double s = 0.0;
    for (std::size_t a = 1; a < modes.size(); ++a) {
        const double q = disc == KernelDiscretization::grid ? fam.grid_multiplier_at(modes[a].k)
                                                            : fam.continuum_multiplier(std::sqrt(modes[a].lambda));
        s += q * q * basis_at(geom, modes[a], x) * basis_at(geom, modes[a], y) / (geom.a_n() * modes[a].Lambda);
    }
    return s;
}

}  // namespace qflow
