#include "qflow/cylinder.hpp"

#include <algorithm>
#include <cmath>

#include "qflow/errors.hpp"

namespace qflow {

namespace {

// b, b', b'' at s.
void bump_jet(double s, double& b0, double& b1, double& b2) {
    if (std::abs(s) >= 1.0) {
        b0 = b1 = b2 = 0.0;
        return;
    }
    const double t = 1.0 - s * s;
    b0 = std::exp(-1.0 / t);
    const double g = -2.0 * s / (t * t);
    b1 = b0 * g;
    b2 = b0 * (g * g - 2.0 / (t * t) - 8.0 * s * s / (t * t * t));
}

double int_pow(double x, int e) {
    double r = 1.0;
    for (int i = 0; i < e; ++i) r *= x;
    return r;
}

double grid_sup(const GridValues& v) {
    double s = 0.0;
    for (double x : v) s = std::max(s, std::abs(x));
    return s;
}

void enumerate_exponents(int arity, int degree, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
    if (int(cur.size()) == arity) {
        out.push_back(cur);
        return;
    }
    int used = 0;
    for (int e : cur) used += e;
    for (int e = 0; e + used <= degree; ++e) {
        cur.push_back(e);
        enumerate_exponents(arity, degree, cur, out);
        cur.pop_back();
    }
}

}  // namespace

double bump(double s) {
    double b0, b1, b2;
    bump_jet(s, b0, b1, b2);
    return b0;
}

double bump_slope_sup() {
    static const double sup = [] {
        double m = 0.0;
        for (int i = 1; i < 200000; ++i) {
            double b0, b1, b2;
            bump_jet(-1.0 + i * 1e-5, b0, b1, b2);
            m = std::max(m, std::abs(b1));
        }
        return 1.01 * m;
    }();
    return sup;
}

WindowedPolynomial::WindowedPolynomial(int arity, double eps, std::vector<Monomial> terms)
    : arity_(arity), eps_(eps), ell_(-std::log(eps)), terms_(std::move(terms)) {
    require(arity >= 1 && arity <= kMaxArity, "cylinder arity out of range");
    require(eps > 0.0 && eps < 1.0, "window eps must lie in (0, 1)");
    for (const auto& t : terms_) {
        require(int(t.exps.size()) == arity, "monomial arity mismatch");
        for (int e : t.exps) require(e >= 0, "negative monomial exponent");
    }
}

Jet WindowedPolynomial::jet(const double* x) const {
    const int k = arity_;
    Jet out;
    out.grad = JetVec::Zero(k);
    out.hess = JetMat::Zero(k, k);
    if (!(x[0] > eps_ && x[0] < 1.0 / eps_)) return out;

    // polynomial part
    double p = 0.0;
    JetVec dp = JetVec::Zero(k);
    JetMat hp = JetMat::Zero(k, k);
    for (const auto& t : terms_) {
        double full = t.coef;
        for (int i = 0; i < k; ++i) full *= int_pow(x[i], t.exps[i]);
        p += full;
        for (int i = 0; i < k; ++i) {
            if (t.exps[i] == 0) continue;
            double di = t.coef * t.exps[i];
            for (int l = 0; l < k; ++l) di *= int_pow(x[l], t.exps[l] - (l == i));
            dp[i] += di;
            for (int j = 0; j < k; ++j) {
                const int ej = t.exps[j] - (j == i);
                if (ej <= 0) continue;
                double dij = t.coef * t.exps[i] * ej;
                for (int l = 0; l < k; ++l) dij *= int_pow(x[l], t.exps[l] - (l == i) - (l == j));
                hp(i, j) += dij;
            }
        }
    }

    // bump in x_0: B' = b'/(ell x0), B'' = (b'' - ell b')/(ell x0)^2
    double b0, b1, b2;
    bump_jet(std::log(x[0]) / ell_, b0, b1, b2);
    const double lx = ell_ * x[0];
    const double B = b0, dB = b1 / lx, ddB = (b2 - ell_ * b1) / (lx * lx);

    out.value = p * B;
    out.grad = B * dp;
    out.grad[0] += p * dB;
    out.hess = B * hp;
    for (int i = 0; i < k; ++i) {
        out.hess(0, i) += dB * dp[i];
        out.hess(i, 0) += dB * dp[i];
    }
    out.hess(0, 0) += p * ddB;
    return out;
}

double WindowedPolynomial::value_bound(const std::vector<double>& radius) const {
    double s = 0.0;
    for (const auto& t : terms_) {
        double m = std::abs(t.coef) * int_pow(1.0 / eps_, t.exps[0]);
        for (int i = 1; i < arity_; ++i) m *= int_pow(radius[i], t.exps[i]);
        s += m;
    }
    return std::exp(-1.0) * s;
}

double WindowedPolynomial::gradient_bound(const std::vector<double>& radius) const {
    std::vector<double> r(radius.begin(), radius.end());
    r.resize(arity_, 0.0);
    r[0] = 1.0 / eps_;
    double best = 0.0;
    for (int i = 0; i < arity_; ++i) {
        double s = 0.0;
        for (const auto& t : terms_) {
            if (t.exps[i] == 0) continue;
            double m = std::abs(t.coef) * t.exps[i];
            for (int l = 0; l < arity_; ++l) m *= int_pow(r[l], t.exps[l] - (l == i));
            s += m;
        }
        s *= std::exp(-1.0);
        if (i == 0) s += value_bound(radius) * std::exp(1.0) * bump_slope_sup() / (ell_ * eps_);
        best = std::max(best, s);
    }
    return best;
}

ProductFn::ProductFn(std::shared_ptr<const ScalarFn> a, std::vector<int> idx_a, std::shared_ptr<const ScalarFn> b,
                     std::vector<int> idx_b)
    : a_(std::move(a)), b_(std::move(b)), ia_(std::move(idx_a)), ib_(std::move(idx_b)) {
    require(int(ia_.size()) == a_->arity() && int(ib_.size()) == b_->arity(), "product index map mismatch");
    require(!ia_.empty() && !ib_.empty() && ia_[0] == 0 && ib_[0] == 0, "product factors must share coordinate 0");
    arity_ = 1 + std::max(*std::max_element(ia_.begin(), ia_.end()), *std::max_element(ib_.begin(), ib_.end()));
    require(arity_ <= kMaxArity, "cylinder arity out of range");
}

double ProductFn::window() const { return std::max(a_->window(), b_->window()); }

Jet ProductFn::jet(const double* x) const {
    double xa[kMaxArity], xb[kMaxArity];
    for (std::size_t i = 0; i < ia_.size(); ++i) xa[i] = x[ia_[i]];
    for (std::size_t i = 0; i < ib_.size(); ++i) xb[i] = x[ib_[i]];
    const Jet ja = a_->jet(xa), jb = b_->jet(xb);
    JetVec ga = JetVec::Zero(arity_), gb = JetVec::Zero(arity_);
    JetMat ha = JetMat::Zero(arity_, arity_), hb = JetMat::Zero(arity_, arity_);
    for (std::size_t i = 0; i < ia_.size(); ++i) {
        ga[ia_[i]] += ja.grad[i];
        for (std::size_t j = 0; j < ia_.size(); ++j) ha(ia_[i], ia_[j]) += ja.hess(i, j);
    }
    for (std::size_t i = 0; i < ib_.size(); ++i) {
        gb[ib_[i]] += jb.grad[i];
        for (std::size_t j = 0; j < ib_.size(); ++j) hb(ib_[i], ib_[j]) += jb.hess(i, j);
    }
    Jet out;
    out.value = ja.value * jb.value;
    out.grad = ja.value * gb + jb.value * ga;
    out.hess = ja.value * hb + jb.value * ha + ga * gb.transpose() + gb * ga.transpose();
    return out;
}

double ProductFn::value_bound(const std::vector<double>& radius) const {
    std::vector<double> ra, rb;
    for (int i : ia_) ra.push_back(radius[i]);
    for (int i : ib_) rb.push_back(radius[i]);
    return a_->value_bound(ra) * b_->value_bound(rb);
}

double ProductFn::gradient_bound(const std::vector<double>& radius) const {
    std::vector<double> ra, rb;
    for (int i : ia_) ra.push_back(radius[i]);
    for (int i : ib_) rb.push_back(radius[i]);
    return a_->value_bound(ra) * b_->gradient_bound(rb) + b_->value_bound(rb) * a_->gradient_bound(ra);
}

CylinderFunctional make_cylinder(const Torus& geom, std::vector<FieldCoeffs> h, std::shared_ptr<const ScalarFn> q) {
    require(q != nullptr, "cylinder functional needs q");
    require(!h.empty() && int(h.size()) == q->arity(), "test-function list does not match the arity of q");
    for (const auto& hi : h) require(hi.size() == geom.num_modes(), "coefficient vector does not match geometry");
    const FieldCoeffs one = geom.constant(1.0);
    for (std::size_t a = 0; a < one.size(); ++a)
        require(std::abs(h[0][a] - one[a]) < 1e-12, "h_0 must be the constant function 1");
    CylinderFunctional G;
    for (const auto& hi : h) G.h_grid.push_back(geom.to_grid(hi));
    G.h = std::move(h);
    G.q = std::move(q);
    return G;
}

CylinderFunctional product(const CylinderFunctional& a, const CylinderFunctional& b) {
    CylinderFunctional G;
    G.h = a.h;
    G.h_grid = a.h_grid;
    std::vector<int> ia, ib{0};
    for (int i = 0; i < a.arity(); ++i) ia.push_back(i);
    for (int i = 1; i < b.arity(); ++i) {
        ib.push_back(int(G.h.size()));
        G.h.push_back(b.h[i]);
        G.h_grid.push_back(b.h_grid[i]);
    }
    G.q = std::make_shared<ProductFn>(a.q, ia, b.q, ib);
    return G;
}

std::shared_ptr<const ScalarFn> random_windowed_polynomial(int arity, int degree, double eps, RandomStream& rng) {
    std::vector<std::vector<int>> exps;
    std::vector<int> cur;
    enumerate_exponents(arity, degree, cur, exps);
    std::vector<Monomial> terms;
    for (auto& e : exps) terms.push_back({rng.normal(), e});
    return std::make_shared<WindowedPolynomial>(arity, eps, std::move(terms));
}

double pair_measure(const GmcMeasure& m, const GridValues& g) {
    require(g.size() == m.cells.size(), "grid function does not match the measure");
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) s += m.cells[i] * g[i];
    return s;
}

std::vector<double> coordinates(const CylinderFunctional& G, const GmcMeasure& m) {
    std::vector<double> x;
    for (const auto& g : G.h_grid) x.push_back(pair_measure(m, g));
    return x;
}

double evaluate(const CylinderFunctional& G, const GmcMeasure& m) {
    const auto x = coordinates(G, m);
    return G.q->jet(x.data()).value;
}

double frechet_derivative(const Torus& geom, const CylinderFunctional& G, const GmcMeasure& m, const FieldCoeffs& h) {
    const auto x = coordinates(G, m);
    const Jet j = G.q->jet(x.data());
    const GridValues hg = geom.to_grid(h);
    double s = 0.0;
    for (int i = 0; i < G.arity(); ++i) {
        if (j.grad[i] == 0.0) continue;
        double mh = 0.0;
        for (std::size_t c = 0; c < hg.size(); ++c) mh += m.cells[c] * G.h_grid[i][c] * hg[c];
        s += j.grad[i] * mh;
    }
    return m.gamma * s;
}

double frechet_derivative(const Torus& geom, const CylinderFunctional& G, const FieldCoeffs& psi, double gamma,
                          const FieldCoeffs& h) {
    return frechet_derivative(geom, G, build_gmc(geom, psi, gamma), h);
}

double frechet_bound(const Torus& geom, const CylinderFunctional& G, double gamma, const FieldCoeffs& h) {
    const double eps = G.window();
    std::vector<double> radius;
    double hmax = 0.0;
    for (const auto& g : G.h_grid) {
        const double s = grid_sup(g);
        radius.push_back(s / eps);
        hmax = std::max(hmax, s);
    }
    return gamma * G.arity() * G.q->gradient_bound(radius) * hmax * grid_sup(geom.to_grid(h)) / eps;
}

}  // namespace qflow
