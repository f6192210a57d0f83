#pragma once

#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "qflow/chaos.hpp"
#include "qflow/spectral.hpp"

namespace qflow {

inline constexpr int kMaxArity = 8;
using JetVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxArity, 1>;
using JetMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxArity, kMaxArity>;

struct Jet {
    double value = 0.0;
    JetVec grad;
    JetMat hess;
};

// Smooth q: R^{k+1} -> R with exact first and second partials.  Coordinate 0
// is the total mass; q vanishes unless x_0 lies in (eps, 1/eps).
class ScalarFn {
public:
    virtual ~ScalarFn() = default;
    virtual int arity() const = 0;
    virtual double window() const = 0;
    virtual Jet jet(const double* x) const = 0;
    // Upper bounds on sup|q| and max_i sup|d_i q| over x_0 in (eps, 1/eps),
    // |x_i| <= radius[i] for i >= 1 (radius[0] is ignored).
    virtual double value_bound(const std::vector<double>& radius) const = 0;
    virtual double gradient_bound(const std::vector<double>& radius) const = 0;
};

// b(s) = exp(-1/(1 - s^2)) on (-1, 1), zero outside.
double bump(double s);
// sup |b'| on (-1, 1).
double bump_slope_sup();

struct Monomial {
    double coef = 0.0;
    std::vector<int> exps;
};

// (sum of monomials) * b(log x_0 / |log eps|).
class WindowedPolynomial final : public ScalarFn {
public:
    WindowedPolynomial(int arity, double eps, std::vector<Monomial> terms);

    int arity() const override { return arity_; }
    double window() const override { return eps_; }
    Jet jet(const double* x) const override;
    double value_bound(const std::vector<double>& radius) const override;
    double gradient_bound(const std::vector<double>& radius) const override;

    const std::vector<Monomial>& terms() const { return terms_; }

private:
    int arity_;
    double eps_, ell_;
    std::vector<Monomial> terms_;
};

// q_a(x restricted to idx_a) * q_b(x restricted to idx_b).
class ProductFn final : public ScalarFn {
public:
    ProductFn(std::shared_ptr<const ScalarFn> a, std::vector<int> idx_a, std::shared_ptr<const ScalarFn> b,
              std::vector<int> idx_b);

    int arity() const override { return arity_; }
    double window() const override;
    Jet jet(const double* x) const override;
    double value_bound(const std::vector<double>& radius) const override;
    double gradient_bound(const std::vector<double>& radius) const override;

private:
    std::shared_ptr<const ScalarFn> a_, b_;
    std::vector<int> ia_, ib_;
    int arity_;
};

// G(psi) = q(M(h_0), ..., M(h_k)) with h_0 = 1.
struct CylinderFunctional {
    std::vector<FieldCoeffs> h;
    std::vector<GridValues> h_grid;
    std::shared_ptr<const ScalarFn> q;

    int arity() const { return int(h.size()); }
    double window() const { return q->window(); }
};

CylinderFunctional make_cylinder(const Torus& geom, std::vector<FieldCoeffs> h, std::shared_ptr<const ScalarFn> q);
// Merged test-function list h_0, a.h_1.., b.h_1..; q = q_a q_b.
CylinderFunctional product(const CylinderFunctional& a, const CylinderFunctional& b);

// Random windowed polynomial of the given degree in every coordinate.
std::shared_ptr<const ScalarFn> random_windowed_polynomial(int arity, int degree, double eps, RandomStream& rng);

// M(g) for a grid function g.
double pair_measure(const GmcMeasure& m, const GridValues& g);
std::vector<double> coordinates(const CylinderFunctional& G, const GmcMeasure& m);
double evaluate(const CylinderFunctional& G, const GmcMeasure& m);

// D_h G = gamma sum_i d_i q M(h_i h), gamma taken from the measure.
double frechet_derivative(const Torus& geom, const CylinderFunctional& G, const GmcMeasure& m, const FieldCoeffs& h);
double frechet_derivative(const Torus& geom, const CylinderFunctional& G, const FieldCoeffs& psi, double gamma,
                          const FieldCoeffs& h);
// gamma (k+1) sup|dq| max_i sup|h_i| sup|h| / eps, sups over grid points.
double frechet_bound(const Torus& geom, const CylinderFunctional& G, double gamma, const FieldCoeffs& h);

}  // namespace qflow
