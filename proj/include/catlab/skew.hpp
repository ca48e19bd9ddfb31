#pragma once

#include <cstdint>
#include <vector>

#include "catlab/markov.hpp"
#include "catlab/rng.hpp"
#include "catlab/torus.hpp"

namespace catlab {

struct FiberParams {
    double kappa = 0.0;  // circle nonlinearity, must stay in [0,1) for invertibility
    double delta = 0.0;  // base-to-fiber coupling strength
    double alpha = 0.0;  // rigid rotation part
};

struct MPoint {
    TorusPoint x;
    double theta = 0.0;
};

// Largest pullback depth whose backward base orbits remain meaningful in
// double precision: initial rounding of a point grows like lambda_u^t under
// the inverse map, so depths past log(1e12)/log(lambda_u) produce noise.
int holonomy_depth_horizon(const ToralAutomorphism& base);

// Skew product over a hyperbolic automorphism: (x, theta) -> (A x, g_x(theta))
// with g_x(theta) = theta + alpha + delta sin(2 pi x1) - (kappa/2 pi) sin(2 pi theta).
class SkewSystem {
public:
    SkewSystem(const ToralAutomorphism& base, FiberParams fp, int holonomy_depth = 20);

    const ToralAutomorphism& base() const { return base_; }
    const FiberParams& params() const { return fp_; }
    int holonomy_depth() const { return depth_; }

    double g(const TorusPoint& x, double theta) const;
    double gprime(double theta) const;  // fiber derivative; independent of x by design
    double g_inv(const TorusPoint& x, double y) const;
    double cs_norm(double theta) const;  // max(|g'(theta)|, 1/lambda_u)

    MPoint step(const MPoint& p) const;
    // n of any sign; the base coordinate is apply_auto(base, p.x, n) bit for bit
    MPoint apply(const MPoint& p, std::int64_t n) const;
    // orbit[t] == apply(p, t) bit for bit, t = 0..n
    std::vector<MPoint> orbit(const MPoint& p, int n) const;

    double omega() const;  // (1 + kappa) / |lambda_u|, the holonomy contraction rate
    bool dominated() const { return omega() < 1.0; }
    // slope bound for strong-unstable leaves as graphs over the base
    double leaf_lipschitz() const;
    // truncation error of depth-limited holonomies started du apart
    double holonomy_error_bound(double du) const;

private:
    ToralAutomorphism base_;
    FiberParams fp_;
    int depth_;
};

// Strong-unstable leaf through a marked point, cached by the fiber coordinate
// of its pullback `depth` steps into the past.
struct LeafFrame {
    MPoint marked;
    int depth = 0;
    double theta_back = 0.0;
};

LeafFrame make_leaf_frame(const SkewSystem& sys, const MPoint& marked);
// fiber over y of the leaf; y should lie on the local unstable manifold of marked.x
double leaf_fiber_at(const SkewSystem& sys, const LeafFrame& f, const TorusPoint& y);

// Partner of z on the strong-unstable leaf `leaf` inside rectangle i: the two
// points share the chart u-coordinate, hence a center-stable leaf, so their
// forward orbits collapse together whenever the fiber contracts along them.
// The partner base sits on the marked point's plaque; its fiber is the leaf
// graph value there.
MPoint cs_partner(const SkewSystem& sys, const MarkovPartition& P, int i,
                  const MPoint& z, const LeafFrame& leaf);

struct ExponentEstimate {
    double value = 0.0;
    double se = 0.0;
    std::size_t n = 0;
};

// Fiber Lyapunov exponent along typical forward orbits after burn-in.
ExponentEstimate center_exponent(const SkewSystem& sys, std::size_t n_samples,
                                 int burn_in, int n_iter, Rng& rng);

}
