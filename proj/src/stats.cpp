#include "qflow/stats.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/special_functions/gamma.hpp>

#include "qflow/errors.hpp"

namespace qflow {

void RunningStats::add(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
}

double RunningStats::variance() const {
    return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0;
}

double RunningStats::stderr_mean() const {
    return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
}

// P(D_n < d), Marsaglia, Tsang & Wang (2003).
double kolmogorov_cdf_exact(int n, double d) {
    if (d <= 0.0) return 0.0;
    if (d >= 1.0) return 1.0;
    const int k = static_cast<int>(n * d) + 1;
    const int m = 2 * k - 1;
    const double h = k - n * d;
    std::vector<double> H(static_cast<std::size_t>(m * m));
    auto at = [&](std::vector<double>& A, int i, int j) -> double& { return A[i * m + j]; };
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) at(H, i, j) = (i - j + 1 >= 0) ? 1.0 : 0.0;
    for (int i = 0; i < m; ++i) {
        at(H, i, 0) -= std::pow(h, i + 1);
        at(H, m - 1, i) -= std::pow(h, m - i);
    }
    if (2 * h - 1 > 0) at(H, m - 1, 0) += std::pow(2 * h - 1, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            if (i - j + 1 > 0)
                for (int g = 1; g <= i - j + 1; ++g) at(H, i, j) /= g;

    auto mul = [&](const std::vector<double>& A, const std::vector<double>& B) {
        std::vector<double> C(A.size(), 0.0);
        for (int i = 0; i < m; ++i)
            for (int l = 0; l < m; ++l) {
                const double a = A[i * m + l];
                if (a == 0.0) continue;
                for (int j = 0; j < m; ++j) C[i * m + j] += a * B[l * m + j];
            }
        return C;
    };
    // binary power with a running decimal exponent to avoid overflow
    std::vector<double> Q(static_cast<std::size_t>(m * m), 0.0);
    for (int i = 0; i < m; ++i) at(Q, i, i) = 1.0;
    int eQ = 0;
    std::vector<double> P = H;
    int eP = 0;
    for (int e = n; e > 0; e >>= 1) {
        if (e & 1) {
            Q = mul(Q, P);
            eQ += eP;
            if (at(Q, k - 1, k - 1) > 1e140) {
                for (double& v : Q) v *= 1e-140;
                eQ += 140;
            }
        }
        if (e > 1) {
            P = mul(P, P);
            eP *= 2;
            if (at(P, k - 1, k - 1) > 1e140) {
                for (double& v : P) v *= 1e-140;
                eP += 140;
            }
        }
    }
    double s = at(Q, k - 1, k - 1);
    for (int i = 1; i <= n; ++i) {
        s = s * i / n;
        if (s < 1e-140) {
            s *= 1e140;
            eQ -= 140;
        }
    }
    return std::clamp(s * std::pow(10.0, eQ), 0.0, 1.0);
}

double kolmogorov_survival(double lambda) {
    if (lambda < 0.2) return 1.0;
    double sum = 0.0;
    double sign = 1.0;
    for (int j = 1; j <= 200; ++j) {
        const double term = std::exp(-2.0 * j * j * lambda * lambda);
        sum += sign * term;
        if (term < 1e-18) break;
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

namespace {

double asymptotic_p(double ne, double D) {
    const double s = std::sqrt(ne);
    return kolmogorov_survival((s + 0.12 + 0.11 / s) * D);
}

}  // namespace

KsResult ks_one_sample(std::vector<double> xs, const std::function<double(double)>& cdf) {
    require(!xs.empty(), "ks test needs samples");
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double D = 0.0;
    // tied samples form one step; the lower side uses the left limit F(x-) so atoms are handled
    for (std::size_t i = 0; i < xs.size();) {
        std::size_t j = i;
        while (j < xs.size() && xs[j] == xs[i]) ++j;
        const double F = cdf(xs[i]);
        const double F_left = cdf(std::nextafter(xs[i], -INFINITY));
        D = std::max({D, j / n - F, F_left - i / n});
        i = j;
    }
    KsResult r;
    r.statistic = D;
    r.n_a = xs.size();
    if (xs.size() < kKsExactCrossover) {
        r.exact = true;
        r.p_value = 1.0 - kolmogorov_cdf_exact(static_cast<int>(xs.size()), D);
    } else {
        r.p_value = asymptotic_p(n, D);
    }
    return r;
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
    require(!a.empty() && !b.empty(), "ks test needs samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double D = 0.0;
    // advance through ties together so atoms are handled correctly
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == x) ++i;
        while (j < b.size() && b[j] == x) ++j;
        D = std::max(D, std::abs(i / na - j / nb));
    }
    KsResult r;
    r.statistic = D;
    r.n_a = a.size();
    r.n_b = b.size();
    r.p_value = asymptotic_p(na * nb / (na + nb), D);
    if (D == 0.0) r.p_value = 1.0;
    return r;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double chi_square_uniform_p(const std::vector<std::size_t>& counts) {
    require(counts.size() >= 2, "chi-square needs at least two cells");
    double total = 0.0;
    for (auto c : counts) total += static_cast<double>(c);
    const double e = total / static_cast<double>(counts.size());
    double chi2 = 0.0;
    for (auto c : counts) chi2 += (c - e) * (c - e) / e;
    const double dof = static_cast<double>(counts.size() - 1);
    return boost::math::gamma_q(dof / 2.0, chi2 / 2.0);
}

double integrated_autocorr_time(const std::vector<double>& xs) {
    const std::size_t n = xs.size();
    if (n < 4) return 1.0;
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(n);
    double c0 = 0.0;
    for (double x : xs) c0 += (x - mean) * (x - mean);
    c0 /= static_cast<double>(n);
    if (c0 <= 0.0) return 1.0;
    double tau = 1.0;
    for (std::size_t lag = 1; lag < n / 2; ++lag) {
        double c = 0.0;
        for (std::size_t i = 0; i + lag < n; ++i) c += (xs[i] - mean) * (xs[i + lag] - mean);
        c /= static_cast<double>(n) * c0;
        tau += 2.0 * c;
        if (static_cast<double>(lag) >= 5.0 * tau) break;
    }
    return std::max(tau, 1.0);
}

}  // namespace qflow
