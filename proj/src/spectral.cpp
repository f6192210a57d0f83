#include "qflow/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <numbers>

#include <fftw3.h>

#include "qflow/errors.hpp"

namespace qflow {

namespace {

constexpr double kPi = std::numbers::pi;

bool is_power_of_two(int g) { return g > 0 && (g & (g - 1)) == 0; }

double int_pow(double x, int e) {
    double r = 1.0;
    for (int i = 0; i < e; ++i) r *= x;
    return r;
}

std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

// Per-thread FFT scratch, one buffer per transform size.
fftw_complex* scratch(std::size_t size) {
    struct Buf {
        fftw_complex* p = nullptr;
        ~Buf() {
            if (p) fftw_free(p);
        }
    };
    thread_local std::map<std::size_t, Buf> bufs;
    Buf& b = bufs[size];
    if (!b.p) b.p = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * size));
    return b.p;
}

}  // namespace

double a_n_constant(int n) {
    require(n >= 2 && n % 2 == 0, "dimension must be even and >= 2");
    double fact = 1.0;
    for (int i = 2; i <= n / 2 - 1; ++i) fact *= i;
    return 2.0 / (fact * std::pow(4.0 * kPi, n / 2));
}

struct Torus::Fft {
    fftw_plan fwd = nullptr;
    fftw_plan bwd = nullptr;
    std::size_t size = 0;
    ~Fft() {
        std::lock_guard<std::mutex> lock(planner_mutex());
        if (fwd) fftw_destroy_plan(fwd);
        if (bwd) fftw_destroy_plan(bwd);
    }
};

Torus::Torus(int n, double L, int G, int N, double q_ref_const)
    : n_(n), G_(G), N_(N), L_(L), q_ref_(q_ref_const) {
    require(n >= 2 && n % 2 == 0, "dimension n must be even and >= 2");
    require(L > 0.0 && std::isfinite(L), "period L must be positive");
    require(is_power_of_two(G) && G >= 4, "grid G must be a power of two >= 4");
    require(N >= 1, "truncation N must be >= 1");
    require(2 * N <= G, "grid smaller than twice the truncation");
    require(2 * N == G || G >= 2 * N + 2, "truncation must satisfy N <= G/2 - 1 (or N = G/2 for the full band)");
    require(std::isfinite(q_ref_const), "q_ref_const must be finite");

    a_n_ = a_n_constant(n);
    volume_ = int_pow(L, n);
    cell_volume_ = int_pow(L / G, n);
    num_cells_ = 1;
    for (int d = 0; d < n; ++d) num_cells_ *= static_cast<std::size_t>(G);

    const bool full = 2 * N == G;
    const int lo = full ? -G / 2 : -N;
    const int hi = full ? G / 2 - 1 : N;
    const int span = hi - lo + 1;

    auto neg = [&](const std::vector<int>& k) {
        std::vector<int> r(k.size());
        for (std::size_t d = 0; d < k.size(); ++d) r[d] = (full && k[d] == -G / 2) ? k[d] : -k[d];
        return r;
    };
    auto fft_index = [&](const std::vector<int>& k) {
        std::size_t idx = 0;
        for (int d = 0; d < n; ++d) idx = idx * G + static_cast<std::size_t>(((k[d] % G) + G) % G);
        return idx;
    };
    auto lambda_of = [&](const std::vector<int>& k) {
        double s = 0.0;
        for (int v : k) s += (2.0 * kPi * v / L) * (2.0 * kPi * v / L);
        return s;
    };
    auto cube_index = [&](const std::vector<int>& k) {
        std::size_t idx = 0;
        for (int d = 0; d < n; ++d) idx = idx * span + static_cast<std::size_t>(k[d] - lo);
        return idx;
    };

    std::size_t cube = 1;
    for (int d = 0; d < n; ++d) cube *= static_cast<std::size_t>(span);

    auto modes = std::make_shared<std::vector<Mode>>();
    auto pos = std::make_shared<std::vector<std::size_t>>();
    auto negi = std::make_shared<std::vector<std::size_t>>();
    std::vector<char> seen(cube, 0);

    std::vector<int> zero(n, 0);
    modes->push_back({zero, ModeKind::constant, 0.0, 0.0});
    pos->push_back(0);
    negi->push_back(0);
    seen[cube_index(zero)] = 1;

    std::vector<int> k(n, lo);
    for (std::size_t c = 0; c < cube; ++c) {
        if (!seen[cube_index(k)]) {
            const auto nk = neg(k);
            seen[cube_index(k)] = 1;
            seen[cube_index(nk)] = 1;
            const double lam = lambda_of(k);
            const double Lam = int_pow(lam, n / 2);
            if (nk == k) {
                modes->push_back({k, ModeKind::nyquist, lam, Lam});
                pos->push_back(fft_index(k));
                negi->push_back(fft_index(k));
            } else {
                const auto& rep = std::max(k, nk);
                const auto& other = std::min(k, nk);
                modes->push_back({rep, ModeKind::cosine, lam, Lam});
                pos->push_back(fft_index(rep));
                negi->push_back(fft_index(other));
                modes->push_back({rep, ModeKind::sine, lam, Lam});
                pos->push_back(fft_index(rep));
                negi->push_back(fft_index(other));
            }
        }
        for (int d = n - 1; d >= 0; --d) {
            if (++k[d] <= hi) break;
            k[d] = lo;
        }
    }
    modes_ = modes;
    pos_idx_ = pos;
    neg_idx_ = negi;

    auto fk = std::make_shared<std::vector<int>>(num_cells_ * n);
    for (std::size_t idx = 0; idx < num_cells_; ++idx) {
        std::size_t r = idx;
        for (int d = n - 1; d >= 0; --d) {
            int j = static_cast<int>(r % G);
            r /= G;
            (*fk)[idx * n + d] = j >= G / 2 ? j - G : j;
        }
    }
    fft_k_ = fk;

    auto fft = std::make_shared<Fft>();
    fft->size = num_cells_;
    std::vector<int> dims(n, G);
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        fftw_complex* buf = scratch(num_cells_);
        fft->fwd = fftw_plan_dft(n, dims.data(), buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
        fft->bwd = fftw_plan_dft(n, dims.data(), buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    fft_ = fft;
}

double Torus::Lambda_max() const {
    double m = 0.0;
    for (const auto& md : *modes_) m = std::max(m, md.Lambda);
    return m;
}

double Torus::Lambda_max_grid() const {
    double m = 0.0;
    for (std::size_t idx = 0; idx < num_cells_; ++idx) {
        double lam = 0.0;
        for (int d = 0; d < n_; ++d) {
            const double w = 2.0 * kPi * (*fft_k_)[idx * n_ + d] / L_;
            lam += w * w;
        }
        m = std::max(m, int_pow(lam, n_ / 2));
    }
    return m;
}

int Torus::mode_index(const std::vector<int>& k, ModeKind kind) const {
    for (std::size_t i = 0; i < modes_->size(); ++i)
        if ((*modes_)[i].kind == kind && (*modes_)[i].k == k) return static_cast<int>(i);
    return -1;
}

FieldCoeffs Torus::zeros() const { return FieldCoeffs{std::vector<double>(num_modes(), 0.0)}; }

FieldCoeffs Torus::constant(double value) const {
    FieldCoeffs u = zeros();
    u[0] = value * std::sqrt(volume_);
    return u;
}

FieldCoeffs Torus::trig(const std::vector<int>& k, bool sine) const {
    require(static_cast<int>(k.size()) == n_, "frequency vector has wrong dimension");
    FieldCoeffs u = zeros();
    if (std::all_of(k.begin(), k.end(), [](int v) { return v == 0; })) {
        if (!sine) u[0] = std::sqrt(volume_);
        return u;
    }
    std::vector<int> nk(k.size());
    for (std::size_t d = 0; d < k.size(); ++d) nk[d] = -k[d];
    int i = mode_index(k, sine ? ModeKind::sine : ModeKind::cosine);
    double sign = 1.0;
    if (i < 0) {
        i = mode_index(nk, sine ? ModeKind::sine : ModeKind::cosine);
        if (sine) sign = -1.0;
    }
    if (i < 0 && !sine) {
        i = mode_index(k, ModeKind::nyquist);
        require(i >= 0, "frequency outside truncation");
        u[i] = std::sqrt(volume_);
        return u;
    }
    require(i >= 0, "frequency outside truncation");
    u[i] = sign * std::sqrt(volume_ / 2.0);
    return u;
}

GridValues Torus::to_grid(const FieldCoeffs& u) const {
    require(u.size() == num_modes(), "coefficient vector does not match geometry");
    fftw_complex* buf = scratch(num_cells_);
    std::fill(reinterpret_cast<double*>(buf), reinterpret_cast<double*>(buf) + 2 * num_cells_, 0.0);
    const double s1 = 1.0 / std::sqrt(volume_);
    const double s2 = 1.0 / std::sqrt(2.0 * volume_);
    const auto& modes = *modes_;
    for (std::size_t a = 0; a < modes.size(); ++a) {
        const double c = u[a];
        if (c == 0.0) continue;
        const std::size_t p = (*pos_idx_)[a], q = (*neg_idx_)[a];
        switch (modes[a].kind) {
            case ModeKind::constant:
            case ModeKind::nyquist:
                buf[p][0] += c * s1;
                break;
            case ModeKind::cosine:
                buf[p][0] += c * s2;
                buf[q][0] += c * s2;
                break;
            case ModeKind::sine:
                buf[p][1] -= c * s2;
                buf[q][1] += c * s2;
                break;
        }
    }
    fftw_execute_dft(fft_->bwd, buf, buf);
    GridValues v(num_cells_);
    for (std::size_t i = 0; i < num_cells_; ++i) v[i] = buf[i][0];
    return v;
}

FieldCoeffs Torus::from_grid(const GridValues& v) const {
    require(v.size() == num_cells_, "grid size mismatch");
    fftw_complex* buf = scratch(num_cells_);
    for (std::size_t i = 0; i < num_cells_; ++i) {
        buf[i][0] = v[i];
        buf[i][1] = 0.0;
    }
    fftw_execute_dft(fft_->fwd, buf, buf);
    FieldCoeffs u = zeros();
    const double s1 = cell_volume_ / std::sqrt(volume_);
    const double s2 = cell_volume_ * std::sqrt(2.0 / volume_);
    const auto& modes = *modes_;
    for (std::size_t a = 0; a < modes.size(); ++a) {
        const std::size_t p = (*pos_idx_)[a];
        switch (modes[a].kind) {
            case ModeKind::constant:
            case ModeKind::nyquist:
                u[a] = s1 * buf[p][0];
                break;
            case ModeKind::cosine:
                u[a] = s2 * buf[p][0];
                break;
            case ModeKind::sine:
                u[a] = -s2 * buf[p][1];
                break;
        }
    }
    return u;
}

double Torus::quadrature(const GridValues& v) const {
    require(v.size() == num_cells_, "grid size mismatch");
    double s = 0.0;
    for (double x : v) s += x;
    return s * cell_volume_;
}

std::vector<double> Torus::point(std::size_t idx) const {
    std::vector<double> x(n_);
    for (int d = n_ - 1; d >= 0; --d) {
        x[d] = static_cast<double>(idx % G_) * L_ / G_;
        idx /= G_;
    }
    return x;
}

double Torus::distance(const std::vector<double>& x, const std::vector<double>& y) const {
    double s = 0.0;
    for (int d = 0; d < n_; ++d) {
        double t = std::fmod(std::abs(x[d] - y[d]), L_);
        t = std::min(t, L_ - t);
        s += t * t;
    }
    return std::sqrt(s);
}

double Torus::multiplier(Operator op, double lambda) const {
    switch (op) {
        case Operator::laplacian:
            return lambda;
        case Operator::P:
            return int_pow(lambda, n_ / 2);
        case Operator::p:
            return a_n_ * int_pow(lambda, n_ / 2);
        case Operator::green:
            return lambda == 0.0 ? 0.0 : 1.0 / (a_n_ * int_pow(lambda, n_ / 2));
    }
    return 0.0;
}

GridValues Torus::apply_on_grid(Operator op, const GridValues& v, bool full_band) const {
    std::vector<double> mult(num_cells_);
    for (std::size_t idx = 0; idx < num_cells_; ++idx) {
        double lam = 0.0;
        bool inside = true;
        for (int d = 0; d < n_; ++d) {
            const int kd = (*fft_k_)[idx * n_ + d];
            if (!full_band && std::abs(kd) > N_) inside = false;
            const double w = 2.0 * kPi * kd / L_;
            lam += w * w;
        }
        mult[idx] = inside ? multiplier(op, lam) : 0.0;
    }
    return convolve_multiplier(v, mult);
}

GridValues Torus::convolve_multiplier(const GridValues& v, const std::vector<double>& mult) const {
    require(v.size() == num_cells_ && mult.size() == num_cells_, "grid size mismatch");
    fftw_complex* buf = scratch(num_cells_);
    for (std::size_t i = 0; i < num_cells_; ++i) {
        buf[i][0] = v[i];
        buf[i][1] = 0.0;
    }
    fftw_execute_dft(fft_->fwd, buf, buf);
    const double inv = 1.0 / static_cast<double>(num_cells_);
    for (std::size_t i = 0; i < num_cells_; ++i) {
        buf[i][0] *= mult[i] * inv;
        buf[i][1] *= mult[i] * inv;
    }
    fftw_execute_dft(fft_->bwd, buf, buf);
    GridValues out(num_cells_);
    for (std::size_t i = 0; i < num_cells_; ++i) out[i] = buf[i][0];
    return out;
}

std::vector<std::complex<double>> Torus::forward_dft(const GridValues& v) const {
    require(v.size() == num_cells_, "grid size mismatch");
    fftw_complex* buf = scratch(num_cells_);
    for (std::size_t i = 0; i < num_cells_; ++i) {
        buf[i][0] = v[i];
        buf[i][1] = 0.0;
    }
    fftw_execute_dft(fft_->fwd, buf, buf);
    std::vector<std::complex<double>> out(num_cells_);
    for (std::size_t i = 0; i < num_cells_; ++i) out[i] = {buf[i][0], buf[i][1]};
    return out;
}

Eigen::MatrixXd Torus::weighted_gram(const GridValues& w) const {
    const auto W = forward_dft(w);

    const auto& modes = *modes_;
    const std::size_t M = modes.size();
    std::vector<double> norm(M);
    std::vector<char> is_sin(M);
    for (std::size_t a = 0; a < M; ++a) {
        const bool single = modes[a].kind == ModeKind::constant || modes[a].kind == ModeKind::nyquist;
        norm[a] = single ? 1.0 / std::sqrt(volume_) : std::sqrt(2.0 / volume_);
        is_sin[a] = modes[a].kind == ModeKind::sine;
    }
    auto idx_of = [&](const std::vector<int>& ka, const std::vector<int>& kb, int sgn) {
        std::size_t idx = 0;
        for (int d = 0; d < n_; ++d) {
            const int v = ka[d] + sgn * kb[d];
            idx = idx * G_ + static_cast<std::size_t>(((v % G_) + G_) % G_);
        }
        return idx;
    };
    Eigen::MatrixXd Gm(M, M);
    for (std::size_t a = 0; a < M; ++a) {
        for (std::size_t b = a; b < M; ++b) {
            const auto& Wp = W[idx_of(modes[a].k, modes[b].k, +1)];
            const auto& Wm = W[idx_of(modes[a].k, modes[b].k, -1)];
            double val;
            if (!is_sin[a] && !is_sin[b])
                val = 0.5 * (Wm.real() + Wp.real());
            else if (is_sin[a] && is_sin[b])
                val = 0.5 * (Wm.real() - Wp.real());
            else if (is_sin[a])
                val = 0.5 * (-Wp.imag() - Wm.imag());
            else
                val = 0.5 * (-Wp.imag() + Wm.imag());
            val *= norm[a] * norm[b];
            Gm(a, b) = val;
            Gm(b, a) = val;
        }
    }
    return Gm;
}

Eigen::VectorXd Torus::weighted_moments(const GridValues& w) const {
    const FieldCoeffs u = from_grid(w);
    Eigen::VectorXd out(u.size());
    for (std::size_t a = 0; a < u.size(); ++a) out[a] = u[a] / cell_volume_;
    return out;
}

FieldCoeffs apply_operator(const Torus& geom, Operator which, const FieldCoeffs& u) {
    require(u.size() == geom.num_modes(), "coefficient vector does not match geometry");
    if (which == Operator::green && !u.grounded())
        throw ConfigError("Green kernel undefined on constants");
    FieldCoeffs out = geom.zeros();
    const auto& modes = geom.modes();
    for (std::size_t a = 0; a < modes.size(); ++a) out[a] = geom.multiplier(which, modes[a].lambda) * u[a];
    return out;
}

double sobolev_norm(const Torus& geom, const FieldCoeffs& u, double s) {
    require(u.size() == geom.num_modes(), "coefficient vector does not match geometry");
    const auto& modes = geom.modes();
    const double e = 2.0 * s / geom.dim();
    double sum = 0.0;
    for (std::size_t a = 0; a < modes.size(); ++a)
        sum += std::pow(1.0 + geom.a_n() * modes[a].Lambda, e) * u[a] * u[a];
    return std::sqrt(sum);
}

double pairing_E(const Torus& geom, const FieldCoeffs& h, const FieldCoeffs& u) {
    require(h.size() == geom.num_modes() && u.size() == geom.num_modes(),
            "coefficient vector does not match geometry");
    const auto& modes = geom.modes();
    double sum = 0.0;
    for (std::size_t a = 1; a < modes.size(); ++a) sum += modes[a].Lambda * h[a] * u[a];
    return geom.a_n() * sum;
}

double l2_inner(const FieldCoeffs& a, const FieldCoeffs& b) {
    require(a.size() == b.size(), "coefficient size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

FieldCoeffs operator+(const FieldCoeffs& a, const FieldCoeffs& b) {
    require(a.size() == b.size(), "coefficient size mismatch");
    FieldCoeffs r = a;
    for (std::size_t i = 0; i < r.size(); ++i) r[i] += b[i];
    return r;
}

FieldCoeffs operator-(const FieldCoeffs& a, const FieldCoeffs& b) {
    require(a.size() == b.size(), "coefficient size mismatch");
    FieldCoeffs r = a;
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= b[i];
    return r;
}

FieldCoeffs operator*(double s, const FieldCoeffs& a) {
    FieldCoeffs r = a;
    for (double& v : r.c) v *= s;
    return r;
}

}  // namespace qflow
