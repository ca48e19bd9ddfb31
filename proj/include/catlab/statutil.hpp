#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "catlab/rng.hpp"

namespace catlab {

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    std::size_t n = 0;
};

// ordinary least squares; throws std::invalid_argument for fewer than 2 points
LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);

struct Interval {
    double lo = 0.0;
    double hi = 1.0;
};

// Wilson score interval for a binomial proportion
Interval wilson_interval(std::uint64_t successes, std::uint64_t trials, double z);

double mean(const std::vector<double>& v);
double sample_stddev(const std::vector<double>& v);

// Standard error of sum(sums)/sum(counts) under resampling whole blocks with
// replacement. Pass counts of all 1 for a plain mean of block values.
double bootstrap_se(const std::vector<double>& block_sums,
                    const std::vector<double>& block_counts,
                    int n_resamples, Rng& rng);

using Pt2 = std::array<double, 2>;

// Two-sample two-dimensional Kolmogorov-Smirnov statistic: the largest
// empirical-probability discrepancy over the four families of axis-aligned
// quadrants anchored at sample points. O((n+m) log(n+m)) per orientation.
double ks2d_two_sample(const std::vector<Pt2>& a, const std::vector<Pt2>& b);

// One-sample variant against the uniform law on the unit square.
double ks2d_uniform(const std::vector<Pt2>& a);

struct PowerResult {
    double eigenvalue = 0.0;
    std::vector<double> vec;
    std::size_t iters = 0;
};

// Power iteration for the dominant eigenvalue of a nonnegative square matrix.
PowerResult power_iteration(const std::vector<std::vector<double>>& m,
                            double tol, std::size_t max_iters);

}
