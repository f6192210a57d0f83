#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace qflow {

// Welford accumulator.
class RunningStats {
public:
    void add(double x);
    std::size_t count() const { return n_; }
    double mean() const { return mean_; }
    double variance() const;  // unbiased
    double stderr_mean() const;

private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
    std::size_t n_a = 0;
    std::size_t n_b = 0;  // 0 for the one-sample test
    bool exact = false;
};

// Below this effective size the one-sample p-value uses the exact
// Marsaglia-Tsang-Wang recursion; at or above it the Kolmogorov limit law
// with Stephens' finite-n correction.
inline constexpr std::size_t kKsExactCrossover = 35;

double kolmogorov_cdf_exact(int n, double d);
double kolmogorov_survival(double lambda);

KsResult ks_one_sample(std::vector<double> xs, const std::function<double(double)>& cdf);
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

double normal_cdf(double x);

// Pearson chi-square test of equal cell probabilities; returns the p-value.
double chi_square_uniform_p(const std::vector<std::size_t>& counts);

// Integrated autocorrelation time with Sokal's adaptive window (c = 5).
double integrated_autocorr_time(const std::vector<double>& xs);

}  // namespace qflow
