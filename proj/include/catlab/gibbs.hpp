#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "catlab/markov.hpp"
#include "catlab/refmeas.hpp"
#include "catlab/rng.hpp"
#include "catlab/skew.hpp"

namespace catlab {

using Observable = std::function<double(const MPoint&)>;

// Weighted particle cloud standing in for the invariant measure with uniform
// conditionals on strong-unstable plaques. Particles come in orbit blocks
// (block_bounds are [begin, end) indices) so integration errors can be
// bootstrapped over whole orbits instead of pretending independence.
struct EmpiricalMeasure {
    std::vector<MPoint> points;
    std::vector<double> weights;
    std::vector<std::size_t> block_bounds;
    std::uint64_t seed = 0;
    int n_iterates = 0;
    int burn_in = 0;
    int source_rect = -1;

    std::size_t size() const { return points.size(); }
};

// Long-run Birkhoff clouds: ceil(n_particles / (n_iterates - burn_in)) starts
// drawn from the source plaque measure, each contributing the consecutive
// orbit section after burn-in. Default estimator (lowest variance per step).
EmpiricalMeasure estimate_mu(const SkewSystem& sys, const MarkovPartition& P,
                             const ReferenceMeasure& source, std::size_t n_particles,
                             int n_iterates, int burn_in, Rng& rng);

// Literal averaged-pushforward variant: each particle is an independent draw
// from the source plaque pushed a uniformly random number of steps in
// [burn_in, n_iterates]. Dearer per particle; kept as a cross-check.
EmpiricalMeasure estimate_mu_cesaro(const SkewSystem& sys, const MarkovPartition& P,
                                    const ReferenceMeasure& source,
                                    std::size_t n_particles, int n_iterates,
                                    int burn_in, Rng& rng);

struct IntegralEstimate {
    double value = 0.0;
    double se = 0.0;
};

// Weighted mean with a standard error from resampling orbit blocks.
IntegralEstimate integrate(const EmpiricalMeasure& m, const Observable& phi, Rng& rng,
                           int n_resamples = 200);

// Mass of the cloud inside rectangle i (boundary-ambiguous points resolved by
// locate's first claim).
double rectangle_mass(const EmpiricalMeasure& m, const MarkovPartition& P, int i);

// Log-density with respect to the plaque reference measure, piecewise
// constant on the depth-`depth` cylinder mesh of one rectangle. The distance
// underlying the regularity bound is base arc length between cell midpoints.
struct HolderDensityState {
    int rect = 0;
    int depth = 0;
    std::vector<SymbolicCylinder> mesh;
    std::vector<double> log_density;
    double holder_bound = 0.0;
    double gamma = 1.0;
};

// Builds a state from log-density values at cell midpoints and normalizes it
// so that the cell-sum of mass * exp(log-density) is one.
HolderDensityState make_density_state(const MarkovPartition& P, int rect, int depth,
                                      const std::function<double(double)>& log_rho_of_u,
                                      double holder_bound, double gamma = 1.0);

// Largest |rho(c1)-rho(c2)| / d(c1,c2)^gamma over mesh cell midpoints.
double measured_holder_constant(const HolderDensityState& s);

// Total exp-mass of the state (should be 1 after normalization).
double density_mass(const MarkovPartition& P, const HolderDensityState& s);

// One pushforward step. The image splits over the rectangles reachable from
// s.rect; each branch is renormalized (its weight is returned alongside) and
// its regularity bound contracts by omega^gamma. Throws when the mesh has no
// depth left to reindex.
std::vector<std::pair<double, HolderDensityState>> push_density(
    const SkewSystem& sys, const MarkovPartition& P, const HolderDensityState& s);

}
