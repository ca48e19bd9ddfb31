#pragma once

#include <cstddef>
#include <vector>

#include "catlab/markov.hpp"
#include "catlab/refmeas.hpp"
#include "catlab/rng.hpp"
#include "catlab/skew.hpp"

namespace catlab {

// Contraction data certifying that the fiber direction is mostly contracting,
// strong enough to drive the recursive coupling:
//   n0, lambda0  plaque-averaged log center-stable norm over n0 steps <= lambda0 < 0
//   s1, theta1   exact cylinder sums sum_cyl c * (prod_t max cs-norm)^s1 <= theta1^(s1 n)
//   lambda       >= max(lambda0/2, log(theta1)/2), still negative
//   K, q1        orbits whose partial products ever exceed K e^(lambda n) have
//                plaque mass <= q1 < 1
//   epsilon      cs-distance at which one-step norms of paired orbits differ by
//                at most a factor e^(-lambda/2), from the modulus of log g'
struct ContractionProfile {
    int n0 = 0;
    double lambda0 = 0.0;
    double lambda = 0.0;
    double K = 1.0;
    double s1 = 0.0;
    double theta1 = 1.0;
    double q1 = 1.0;
    double epsilon = 0.0;
};

// Certified per-step maxima of the center-stable norm over the forward images
// of one subcylinder of the plaque: 33 samples per step plus a Lipschitz
// inflation term covering the sample gaps. maxima[t] bounds step t, t < depth.
std::vector<double> cylinder_cs_step_maxima(const SkewSystem& sys, const MarkovPartition& P,
                                            const ReferenceMeasure& m,
                                            const SymbolicCylinder& c);

// Estimates the full profile from sampled plaques; depth_cap bounds both the
// n0 search and the cylinder-sum depth. Throws std::domain_error("not
// contracting enough...") when no negative plaque average exists within the
// budget (for example when the fiber map is an isometry).
ContractionProfile estimate_profile(const SkewSystem& sys, const MarkovPartition& P,
                                    int depth_cap, int n_samples, Rng& rng);

// Plaque mass of the union of stopping sets: fraction of n_grid points whose
// orbit partial products exceed K e^(lambda n) within scan_cap steps.
double u_set_mass(const SkewSystem& sys, const MarkovPartition& P, const ReferenceMeasure& m,
                  const ContractionProfile& prof, int n_grid, int scan_cap);

// One matched pair of image plaques inside a common rectangle: the two source
// cylinders, the image heights, and the certified sup of the center-stable
// displacement between the image leaves over the shared chart.
struct AnchorPair {
    int rect = 0;
    double s1 = 0.0;
    double s2 = 0.0;
    SymbolicCylinder cyl1;
    SymbolicCylinder cyl2;
    double displacement = 0.0;
};

struct AnchorSelection {
    int n0p = 0;                    // common iterate count for every pair
    std::vector<AnchorPair> pairs;  // disjoint on both sides, >= 1
};

// Searches forward iterates 1..budget for image plaques of the two source
// plaques that sit in a common rectangle with cs-displacement <= epsilon, and
// returns the maximal greedy family of disjoint matched pairs at the first
// depth where one exists. Throws std::domain_error("u-minimality budget...")
// when the budget is exhausted.
AnchorSelection select_anchor_plaques(const SkewSystem& sys, const MarkovPartition& P,
                                      const ReferenceMeasure& m1, const ReferenceMeasure& m2,
                                      const ContractionProfile& prof, int budget = 12);

struct CouplingRecord {
    std::size_t pair_id = 0;
    bool matched = false;
    int R = -1;      // stopping time in iterates; -1 when unmatched
    int stages = 0;  // recursion stages consumed
    double t_in = 0.0;
    double t_out = 0.0;          // partner height inside the original [0,1]
    double u_out = 0.0;          // partner pulled back to the original second plaque
    double final_distance = 0.0; // last recorded shadow distance
    std::vector<double> shadow;  // d(f^n x, f^n y), n = R .. R + shadow.size() - 1
};

struct CouplingRun {
    std::vector<CouplingRecord> records;
    std::size_t matched_total = 0;
    std::size_t budget_failures = 0;  // anchor selection failed mid-recursion

    // first-stage bookkeeping, shared by every particle
    int stage1_n0p = 0;
    double stage1_b = 0.0;  // exact mass of the selected blocks, fraction of Y1
    std::size_t stage1_entered = 0;
    std::size_t stage1_matched = 0;
    std::vector<int> stage1_stop_ns;       // stopping depths of first-stage V pieces
    std::vector<double> stage1_stop_mass;  // empirical fractions, same indexing

    // same-component shadowing tallies over all recorded shadow steps
    std::size_t component_checks = 0;
    std::size_t component_violations = 0;  // disagreements away from s-boundaries
};

// Simulates the recursive coupling particle-wise between Y1 = plaque(y1) x
// [0,1] and Y2 = plaque(y2) x [0,1]. Each particle follows its own piece of
// the recursion: at every stage it either couples (records R, the partner
// point through the center-stable holonomy, and forward shadow distances) or
// recurses on the sub-rectangle pair containing it. `horizon` caps the total
// iterate count; particles past it are recorded unmatched.
CouplingRun run_coupling(const SkewSystem& sys, const MarkovPartition& P,
                         const ReferenceMeasure& y1, const ReferenceMeasure& y2,
                         const ContractionProfile& prof, std::size_t n_pairs, int horizon,
                         Rng& rng);

// Log-linear fit of the empirical survival function P(R > n); unmatched
// records count toward every tail bucket. Requires >= 1000 records and >= 1000
// matched ones, else std::domain_error.
struct TailFit {
    double c2 = 0.0;
    double rho2 = 1.0;
    double r2 = 0.0;
    std::size_t matched = 0;
    std::size_t total = 0;
};
TailFit tail_fit(const std::vector<CouplingRecord>& records);

// Log-linear fit of the median shadow distance against n - R, plus the
// fraction of all recorded shadow samples inside the theoretical envelope
// K epsilon e^(-lambda (n-R) / 2). Requires >= 1000 matched records.
struct ShadowFit {
    double c1 = 0.0;
    double rho1 = 1.0;
    double r2 = 0.0;
    double envelope_fraction = 0.0;
};
ShadowFit shadow_fit(const std::vector<CouplingRecord>& records, const ContractionProfile& prof);

}
