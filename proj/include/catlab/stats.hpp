#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "catlab/coupling.hpp"
#include "catlab/markov.hpp"
#include "catlab/refmeas.hpp"
#include "catlab/rng.hpp"
#include "catlab/skew.hpp"
#include "catlab/statutil.hpp"

namespace catlab {

// Closed-form observables with certified Holder data. Keeping the catalog
// closed under explicit harmonics (plus the fiber log-derivative) is what
// makes sup and Lipschitz constants exact instead of sampled guesses.
enum class Harmonic {
    One,        // constant 1
    CosX1,      // cos 2 pi x1
    SinX1,      // sin 2 pi x1
    CosX2,      // cos 2 pi x2
    SinX2,      // sin 2 pi x2
    CosTheta,   // cos 2 pi theta
    SinTheta,   // sin 2 pi theta
    LogCsNorm,  // log of the center-stable norm at theta
};

struct HolderTerm {
    double coef = 0.0;
    Harmonic h = Harmonic::One;
};

// Distance used by all Holder constants: Euclidean on the base torus paired
// with arc distance on the fiber.
double metric_dist(const MPoint& a, const MPoint& b);

struct HolderObservable {
    std::string name;
    std::vector<HolderTerm> terms;
    double gamma = 1.0;      // Holder exponent; the catalog is Lipschitz
    double sup_abs = 0.0;    // certified sup |phi|
    double seminorm = 0.0;   // certified gamma-seminorm
    double holder_norm = 0.0;  // sup_abs + seminorm

    double eval(const SkewSystem& sys, const MPoint& p) const;
};

// Computes the norm data. For pure trig combinations sup and seminorm are
// exact (amplitudes per variable, gradient aligned across variables); terms
// involving the fiber log-derivative use a fine-grid bound instead.
HolderObservable make_observable(const SkewSystem& sys, std::string name,
                                 std::vector<HolderTerm> terms);

// The fixed catalog: single harmonics in each variable, one mixed
// combination, and the fiber log-derivative.
std::vector<HolderObservable> observable_catalog(const SkewSystem& sys);

// Catalog lookup by name; throws std::domain_error for unknown names.
HolderObservable catalog_observable(const SkewSystem& sys, const std::string& name);

// Empirical tail of |S_n phi / n| over independent starts drawn from the
// plaque measure and pushed burn_in steps (burn_in = 0 starts on the plaque
// itself; positive burn_in approximates the invariant state).
struct DeviationReport {
    double alpha = 0.0;
    std::vector<int> n_values;
    std::vector<double> tail;            // point estimates of the exceedance
    std::vector<Interval> wilson;        // 95% intervals
    std::vector<std::uint64_t> hits;
    std::uint64_t trials = 0;
    std::vector<char> used;              // entered the log-linear fit
    bool alpha_too_large = false;        // zero tail already at the smallest n
    bool fit_ok = false;
    double C_alpha = std::numeric_limits<double>::quiet_NaN();
    double c_alpha = std::numeric_limits<double>::quiet_NaN();
    double r2 = std::numeric_limits<double>::quiet_NaN();
};

DeviationReport birkhoff_tail(const SkewSystem& sys, const MarkovPartition& P,
                              const ReferenceMeasure& source, int burn_in,
                              const HolderObservable& phi, double alpha,
                              const std::vector<int>& n_values, std::size_t n_samples,
                              Rng& rng);

// True when no consecutive increase is significant at 95% and the overall
// first-to-last drop is.
bool monotone_trend_95(const DeviationReport& rep);

// Exact cylinder cumulant rows: lhs = sum over depth-n cylinders of the
// plaque of mass * exp(s1 * certified max of S_n phi); bound = theta1^(s1 n).
struct CumulantRow {
    int n = 0;
    double lhs = 0.0;
    double bound = 0.0;
};

std::vector<CumulantRow> cumulant_bound(const SkewSystem& sys, const MarkovPartition& P,
                                        const ContractionProfile& prof,
                                        const HolderObservable& phi,
                                        const ReferenceMeasure& plaque, int n_max,
                                        std::size_t cap = 4000000);

// Correlation series between phi at time n and psi at time 0 over the same
// start family as birkhoff_tail, with bootstrap errors and a log-linear fit
// restricted to the above-noise range.
struct CorrelationReport {
    std::vector<int> n_values;
    std::vector<double> corr;  // signed C_n
    std::vector<double> se;    // bootstrap standard errors
    std::vector<char> used;    // |C_n| > 3 se
    bool below_noise = false;  // nothing exceeded noise: mixing faster than resolution
    bool fit_ok = false;
    double K = std::numeric_limits<double>::quiet_NaN();
    double tau = std::numeric_limits<double>::quiet_NaN();
    double r2 = std::numeric_limits<double>::quiet_NaN();
    double phi_mean = 0.0;
    double psi_mean = 0.0;
};

CorrelationReport correlation_decay(const SkewSystem& sys, const MarkovPartition& P,
                                    const ReferenceMeasure& source, int burn_in,
                                    const HolderObservable& phi, const HolderObservable& psi,
                                    const std::vector<int>& n_values, std::size_t n_samples,
                                    Rng& rng);

}
