#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "qflow/rng.hpp"
#include "qflow/spectral.hpp"

namespace qflow {

struct CgfSample {
    FieldCoeffs field;  // grounded
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
    int trunc = 0;
};

// Draws grounded fields with mode variances 1/(a_n Lambda_k); caches the
// per-mode standard deviations for hot loops.
class CgfSampler {
public:
    explicit CgfSampler(const Torus& geom);
    void draw(RandomStream& rng, FieldCoeffs& out) const;
    CgfSample sample(RandomStream& rng) const;
    const std::vector<double>& stddev() const { return sd_; }

private:
    const Torus* geom_;
    std::vector<double> sd_;
};

CgfSample sample_cgf(const Torus& geom, RandomStream& rng);

// <h, psi>_E; the constant part of h drops out.
double pair_with_E(const Torus& geom, const FieldCoeffs& h, const CgfSample& psi);

// Var psi_N(x) = sum_k |e_k(x)|^2 / (a_n Lambda_k); the same at every x.
double cgf_pointwise_variance(const Torus& geom);
// k_N(x, y) by the spectral sum.
double truncated_kernel(const Torus& geom, const std::vector<double>& x, const std::vector<double>& y);
// k_N(0, x_i) for every grid point.
GridValues truncated_kernel_row(const Torus& geom);

enum class MollifierProfile { tent };  // eta(r) = (1 - r)_+

double mollifier_profile(MollifierProfile p, double r);

// q^j(x, y) = eta(j d(x, y)) / N^j(x), sampled on the grid and normalized so
// each row integrates to one under grid quadrature.
class MollifierFamily {
public:
    MollifierFamily(const Torus& geom, double j, MollifierProfile profile = MollifierProfile::tent);
    // No grid kernel: only the continuum multiplier is available, so the
    // support may be finer than a cell.
    static MollifierFamily continuum_only(const Torus& geom, double j,
                                          MollifierProfile profile = MollifierProfile::tent);

    bool has_grid_kernel() const { return !row_.empty(); }

    double j() const { return j_; }
    double radius() const { return 1.0 / j_; }
    // q^j(0, x_i) on the grid (row through the origin).
    const GridValues& kernel_row() const { return row_; }
    double normalizer() const { return norm_; }
    // Fourier multiplier of the grid convolution, per grid FFT index.
    const std::vector<double>& grid_multiplier() const { return mult_; }
    // Multiplier at wavevector |xi| of the continuum mollifier on R^n.
    double continuum_multiplier(double xi_norm) const;
    // Multiplier of the grid kernel at an arbitrary integer frequency.
    double grid_multiplier_at(const std::vector<int>& k) const;

private:
    MollifierFamily(const Torus& geom, double j, MollifierProfile profile, bool grid_kernel);

    const Torus* geom_;
    double j_;
    MollifierProfile profile_;
    double norm_ = 0.0;
    GridValues row_;
    std::vector<double> mult_;
    std::vector<std::pair<std::vector<double>, double>> support_;
};

enum class KernelDiscretization { grid, continuum };

GridValues mollified_field(const Torus& geom, const MollifierFamily& fam, const CgfSample& psi);
GridValues mollified_kernel_diag(const Torus& geom, const MollifierFamily& fam);
double mollified_kernel(const Torus& geom, const MollifierFamily& fam, const std::vector<double>& x,
                        const std::vector<double>& y, KernelDiscretization disc);

}  // namespace qflow
