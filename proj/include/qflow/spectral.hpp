#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <vector>

#include <Eigen/Dense>

namespace qflow {

enum class ModeKind { constant, cosine, sine, nyquist };

// One real basis function: sqrt(2/V) cos/sin(2 pi k.x / L), or 1/sqrt(V) for
// the constant and for self-conjugate grid frequencies.
struct Mode {
    std::vector<int> k;
    ModeKind kind;
    double lambda;  // |2 pi k / L|^2, eigenvalue of -Laplacian
    double Lambda;  // lambda^(n/2), eigenvalue of P
};

// Coefficients in the L2-orthonormal real basis of the owning Torus.
// Index 0 is always the constant mode.
struct FieldCoeffs {
    std::vector<double> c;

    bool grounded() const { return c.empty() || c[0] == 0.0; }
    std::size_t size() const { return c.size(); }
    double& operator[](std::size_t i) { return c[i]; }
    double operator[](std::size_t i) const { return c[i]; }
};

using GridValues = std::vector<double>;

enum class Operator { laplacian, P, p, green };

// Flat torus T^n of side L, sampled on G^n points, fields truncated to |k|_inf <= N.
// N == G/2 selects the full grid band (every DFT frequency, Nyquist included).
// Immutable once built; transforms use per-thread scratch.
class Torus {
public:
    Torus(int n, double L, int G, int N, double q_ref_const = 0.0);

    int dim() const { return n_; }
    double length() const { return L_; }
    int grid() const { return G_; }
    int trunc() const { return N_; }
    bool full_band() const { return 2 * N_ == G_; }
    double q_ref() const { return q_ref_; }
    double Q1() const { return q_ref_ * volume_; }  // Q_ref(1)

    double a_n() const { return a_n_; }
    double volume() const { return volume_; }
    double cell_volume() const { return cell_volume_; }
    std::size_t num_cells() const { return num_cells_; }
    std::size_t num_modes() const { return modes_->size(); }
    const std::vector<Mode>& modes() const { return *modes_; }
    // Largest P eigenvalue among truncated modes / on the whole grid.
    double Lambda_max() const;
    double Lambda_max_grid() const;

    // Index of the mode with frequency k and the given kind; -1 if absent.
    int mode_index(const std::vector<int>& k, ModeKind kind) const;

    FieldCoeffs zeros() const;
    FieldCoeffs constant(double value) const;
    // cos(2 pi k.x/L) or sin(...) as an exact coefficient vector.
    FieldCoeffs trig(const std::vector<int>& k, bool sine = false) const;

    GridValues to_grid(const FieldCoeffs& u) const;
    FieldCoeffs from_grid(const GridValues& v) const;
    double quadrature(const GridValues& v) const;
    // Point coordinates of grid cell idx (row-major, last axis fastest).
    std::vector<double> point(std::size_t idx) const;
    double distance(const std::vector<double>& x, const std::vector<double>& y) const;

    // Multiplier of `op` at frequency k (green: 0 at k = 0).
    double multiplier(Operator op, double lambda) const;
    // Apply a diagonal operator to an arbitrary grid function.  With
    // full_band=false modes beyond the truncation are dropped first.
    GridValues apply_on_grid(Operator op, const GridValues& v, bool full_band) const;
    // Fourier multiplier m(k) applied on the grid; `mult` is indexed like the grid.
    GridValues convolve_multiplier(const GridValues& v, const std::vector<double>& mult) const;
    // Wrapped integer frequency of each grid FFT index, flattened (num_cells x n).
    const std::vector<int>& fft_frequencies() const { return *fft_k_; }

    // Unnormalized forward DFT, sum_j v_j exp(-2 pi i k.j / G).
    std::vector<std::complex<double>> forward_dft(const GridValues& v) const;

    // Gram matrix sum_i w_i e_a(x_i) e_b(x_i) over the truncated basis.
    Eigen::MatrixXd weighted_gram(const GridValues& w) const;
    // Vector sum_i w_i e_a(x_i), i.e. from_grid(w) without the cell-volume factor.
    Eigen::VectorXd weighted_moments(const GridValues& w) const;

private:
    struct Fft;
    int n_, G_, N_;
    double L_, q_ref_;
    double a_n_, volume_, cell_volume_;
    std::size_t num_cells_;
    std::shared_ptr<const std::vector<Mode>> modes_;
    std::shared_ptr<const std::vector<std::size_t>> pos_idx_;  // fft index of k
    std::shared_ptr<const std::vector<std::size_t>> neg_idx_;  // fft index of -k
    std::shared_ptr<const std::vector<int>> fft_k_;
    std::shared_ptr<Fft> fft_;
};

double a_n_constant(int n);

FieldCoeffs apply_operator(const Torus& geom, Operator which, const FieldCoeffs& u);
double sobolev_norm(const Torus& geom, const FieldCoeffs& u, double s);
double pairing_E(const Torus& geom, const FieldCoeffs& h, const FieldCoeffs& u);
double l2_inner(const FieldCoeffs& a, const FieldCoeffs& b);

FieldCoeffs operator+(const FieldCoeffs& a, const FieldCoeffs& b);
FieldCoeffs operator-(const FieldCoeffs& a, const FieldCoeffs& b);
FieldCoeffs operator*(double s, const FieldCoeffs& a);

}  // namespace qflow
