#pragma once

#include <cstddef>
#include <vector>

#include "catlab/gibbs.hpp"
#include "catlab/markov.hpp"
#include "catlab/refmeas.hpp"
#include "catlab/rng.hpp"
#include "catlab/skew.hpp"

namespace catlab {

// A cross-section transverse to the unstable direction: the full-height stable
// segment of rectangle `rect` at chart coordinate u.
struct CrossSection {
    int rect = 0;
    double u = 0.0;
};

// Point where the strong-unstable plaque through z (which must lie in S.rect)
// meets the section: same chart s, u slid to S.u, fiber read off the leaf graph.
MPoint section_hit(const SkewSystem& sys, const MarkovPartition& P,
                   const CrossSection& S, const MPoint& z);

// One entry per time n: the average of phi over every intersection of the
// n-step image of the source plaque with the section, and the intersection count.
struct HittingSeries {
    std::vector<int> n_values;
    std::vector<double> averages;   // NaN where the count is zero
    std::vector<double> counts;
    std::vector<double> stderrs;    // zero for the exact method
    bool exact = true;
};

// Exact enumeration over admissible words from src.rect to S.rect. Each word of
// length n contributes exactly one intersection; its preimage on the source
// plaque is computed from the cylinder strip, then pushed forward n steps.
// Throws std::invalid_argument past depth 16 (the count grows like 2.618^n).
HittingSeries hit_exact(const SkewSystem& sys, const MarkovPartition& P,
                        const ReferenceMeasure& src, const CrossSection& S,
                        const Observable& phi, int n_lo, int n_hi);

// The intersection points themselves for a single n (exact method).
std::vector<MPoint> hit_points_exact(const SkewSystem& sys, const MarkovPartition& P,
                                     const ReferenceMeasure& src, const CrossSection& S,
                                     int n);

struct McEstimate {
    double average = 0.0;
    double se = 0.0;
    std::size_t hits = 0;
    std::size_t samples = 0;
};

// Monte Carlo version: sample the source plaque uniformly, push n steps, keep
// landings in S.rect, project each landing to the section along its own plaque.
// Landing frequency per image plaque is proportional to that plaque's mass, so
// the plain mean over kept samples is unbiased for the hitting average.
// Throws std::domain_error when nothing lands (n below the first-connection depth).
McEstimate hit_mc(const SkewSystem& sys, const MarkovPartition& P,
                  const ReferenceMeasure& src, const CrossSection& S,
                  const Observable& phi, int n, std::size_t n_samples, Rng& rng);

struct RateFit {
    double slope = 0.0;      // per-step decimal-log decay rate of |avg - limit|
    double intercept = 0.0;
    double r2 = 0.0;
    bool already_converged = false;  // every gap sits below the noise floor
    int n_used = 0;
};

// Least squares on (n, log10 |avg_n - limit|), skipping entries whose gap is
// under the noise floor. All below floor: already_converged. Fewer than five
// usable points but not converged: throws std::invalid_argument.
RateFit rate_fit(const std::vector<int>& n_values, const std::vector<double>& averages,
                 double limit, double noise_floor);

// Transverse measure on a section, estimated by projecting every cloud particle
// of the ambient estimate that lies in S.rect onto S along its own plaque.
// c is the plaque-mass normalization 1/Lu(S.rect); total_mass approximates the
// ambient mass of the rectangle.
struct TransverseEstimate {
    CrossSection section;
    std::vector<MPoint> points;
    std::vector<double> s_coords;   // chart s of each point
    std::vector<double> weights;
    double c = 0.0;
    double total_mass = 0.0;
};

TransverseEstimate estimate_transverse(const SkewSystem& sys, const MarkovPartition& P,
                                       const EmpiricalMeasure& m, const CrossSection& S);

double transverse_mean(const TransverseEstimate& est, const Observable& phi);

// Crossing of the unstable line through base point b with the section's stable
// segment, at signed leaf time t (arc length along the unit unstable vector)
// and section coordinate s.
struct LeafCrossing {
    double t = 0.0;
    double s = 0.0;
};

// All crossings with t in [t_lo, t_hi], found by scanning integer translates
// of the section segment in the universal cover; sorted by t.
std::vector<LeafCrossing> crossings_along_leaf(const MarkovPartition& P,
                                               const TorusPoint& b, const CrossSection& S,
                                               double t_lo, double t_hi);

struct HolonomyCheck {
    double ks = 1.0;             // 2d KS between slid (s, theta) cloud and target cloud
    double ratio_spread = 1.0;   // max |c1 m1(bin) / (c2 m2(bin)) - 1| over s-bins
    std::vector<double> ratios;
    std::size_t pairs_pushed = 0;
    std::size_t pairs_kept = 0;
};

// Invariance of the transverse family under unstable holonomy between two
// sections. A point of est1 belongs to the holonomy domain when the first
// section crossing ahead on its leaf (within t_max) is of type S2; a point of
// est2 belongs to the image when the nearest crossing behind is of type S1.
// Densities are compared bin by bin in absolute normalization, so a wrong
// c constant is detected, not normalized away. scale1/scale2 override the
// stored c constants when positive (fault injection for self-tests).
// Throws std::domain_error when the common domain is essentially empty.
HolonomyCheck check_holonomy_invariance(const SkewSystem& sys, const MarkovPartition& P,
                                        const TransverseEstimate& est1,
                                        const TransverseEstimate& est2,
                                        double t_max, int n_bins,
                                        double scale1 = 0.0, double scale2 = 0.0);

struct ClusterReport {
    int clusters = 0;
    std::vector<double> sizes;     // fraction of slab particles per cluster
    double covered = 0.0;          // total circle length occupied by clusters
    bool atomic = false;           // covered <= 0.5: fiber mass concentrated
    std::size_t in_slab = 0;
};

// Fiber distribution over a thin u-slab of one rectangle: particles with
// |chart u - u0| <= slab_halfwidth, fibers clustered by circular gaps > eps.
// Throws std::domain_error when fewer than 50 particles fall in the slab.
ClusterReport center_atom_probe(const SkewSystem& sys, const MarkovPartition& P,
                                const EmpiricalMeasure& m, int rect, double u0,
                                double slab_halfwidth, double eps);

}
