#pragma once

#include <vector>

#include "catlab/markov.hpp"
#include "catlab/rng.hpp"
#include "catlab/skew.hpp"

namespace catlab {

// Normalized reference measure on one strong-unstable plaque: the pullback of
// uniform arc length on the base unstable segment of rectangle `rect` at
// height `s`, lifted to the leaf graph through the anchor point.
struct ReferenceMeasure {
    int rect = 0;
    double s = 0.0;
    LeafFrame leaf;
};

ReferenceMeasure make_reference_measure(const SkewSystem& sys, const MarkovPartition& P,
                                        int i, const MPoint& anchor);

// Point of the plaque at arc-length coordinate u in [0, L_u(rect)].
MPoint reference_point_at(const SkewSystem& sys, const MarkovPartition& P,
                          const ReferenceMeasure& m, double u);

// i.i.d. draws: uniform base coordinate, fiber from the leaf graph.
std::vector<MPoint> sample(const SkewSystem& sys, const MarkovPartition& P,
                           const ReferenceMeasure& m, Rng& rng, std::size_t count);

// Mass of the subcylinder with itinerary `word` (word[0] must be m.rect):
// the exact product of transition weights, no sampling involved.
double cylinder_mass(const MarkovPartition& P, const ReferenceMeasure& m,
                     const std::vector<int>& word);

// Pushes samples of the plaque measure at x through the center-stable
// partner map onto the plaque of y and compares them with direct samples of
// the plaque measure at y, as a two-sample 2D KS statistic on (u, fiber).
double check_cs_invariance(const SkewSystem& sys, const MarkovPartition& P, int i,
                           const MPoint& x, const MPoint& y, std::size_t n_samples,
                           Rng& rng);

struct ConstantJacobianReport {
    double mass_lo = 0.0;
    double mass_hi = 0.0;
    double expected = 0.0;  // the transition weight
    double spread() const { return mass_hi - mass_lo; }
};

// Measures, for n_plaques random plaques of rectangle i, the fraction of the
// plaque that the map sends into rectangle j. The edges of that fraction are
// located by bisection on the image, so the spread over plaques is an honest
// probe of the constant-Jacobian geometry.
ConstantJacobianReport check_constant_jacobian(const SkewSystem& sys,
                                               const MarkovPartition& P, int i, int j,
                                               int n_plaques, Rng& rng);

}
