#include "catlab/skew.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "catlab/statutil.hpp"

namespace catlab {

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

void require_dominated(const SkewSystem& sys) {
    if (!sys.dominated())
        throw std::domain_error(
            "center direction is not dominated (1 + kappa >= |lambda_u|)");
}

}  // namespace

int holonomy_depth_horizon(const ToralAutomorphism& base) {
    const int h = static_cast<int>(
        std::floor(std::log(1e12) / std::log(std::abs(base.lambda_u))));
    return std::min(h, 64);
}

SkewSystem::SkewSystem(const ToralAutomorphism& base, FiberParams fp, int holonomy_depth)
    : base_(base), fp_(fp), depth_(holonomy_depth) {
    if (!(fp_.kappa >= 0.0) || fp_.kappa >= 1.0)
        throw std::invalid_argument("kappa must lie in [0,1) for an invertible fiber map");
    if (!std::isfinite(fp_.delta) || !std::isfinite(fp_.alpha))
        throw std::invalid_argument("non-finite fiber parameters");
    if (depth_ < 1 || depth_ > holonomy_depth_horizon(base_))
        throw std::invalid_argument(
            "holonomy depth exceeds the double-precision pullback horizon");
}

double SkewSystem::g(const TorusPoint& x, double theta) const {
    const double t = wrap(theta);
    return wrap(t + fp_.alpha + fp_.delta * std::sin(kTau * x.x1) -
                fp_.kappa / kTau * std::sin(kTau * t));
}

double SkewSystem::gprime(double theta) const {
    return 1.0 - fp_.kappa * std::cos(kTau * theta);
}

double SkewSystem::g_inv(const TorusPoint& x, double y) const {
    const double c = fp_.alpha + fp_.delta * std::sin(kTau * x.x1);
    const double target = wrap(y) - c;
    const double r = fp_.kappa / kTau;
    // solve theta - r sin(2 pi theta) = target on the bracket target -+ r;
    // fixed iteration counts keep the evaluation bit-reproducible
    auto h = [&](double th) { return th - r * std::sin(kTau * th) - target; };
    double lo = target - r, hi = target + r;
    for (int it = 0; it < 8; ++it) {
        const double mid = (lo + hi) / 2.0;
        if (h(mid) < 0.0)
            lo = mid;
        else
            hi = mid;
    }
    double th = (lo + hi) / 2.0;
    for (int it = 0; it < 4; ++it) {
        const double hp = 1.0 - fp_.kappa * std::cos(kTau * th);
        th -= h(th) / hp;
        th = std::clamp(th, lo - 1e-3, hi + 1e-3);
    }
    return wrap(th);
}

double SkewSystem::cs_norm(double theta) const {
    return std::max(std::abs(gprime(theta)), 1.0 / std::abs(base_.lambda_u));
}

MPoint SkewSystem::step(const MPoint& p) const {
    const MPoint q{wrap_point(p.x), wrap(p.theta)};
    return {apply_auto(base_, q.x, 1), g(q.x, q.theta)};
}

MPoint SkewSystem::apply(const MPoint& p, std::int64_t n) const {
    const MPoint q{wrap_point(p.x), wrap(p.theta)};
    if (n == 0) return q;
    double th = q.theta;
    if (n > 0) {
        for (std::int64_t t = 0; t < n; ++t) th = g(apply_auto(base_, q.x, t), th);
    } else {
        for (std::int64_t t = 1; t <= -n; ++t) th = g_inv(apply_auto(base_, q.x, -t), th);
    }
    return {apply_auto(base_, q.x, n), th};
}

std::vector<MPoint> SkewSystem::orbit(const MPoint& p, int n) const {
    if (n < 0) throw std::invalid_argument("orbit length must be nonnegative");
    const MPoint q{wrap_point(p.x), wrap(p.theta)};
    std::vector<MPoint> out;
    out.reserve(static_cast<std::size_t>(n) + 1);
    out.push_back(q);
    double th = q.theta;
    for (int t = 1; t <= n; ++t) {
        th = g(apply_auto(base_, q.x, t - 1), th);
        out.push_back({apply_auto(base_, q.x, t), th});
    }
    return out;
}

double SkewSystem::omega() const { return (1.0 + fp_.kappa) / std::abs(base_.lambda_u); }

double SkewSystem::leaf_lipschitz() const {
    require_dominated(*this);
    return kTau * fp_.delta / (std::abs(base_.lambda_u) - 1.0 - fp_.kappa);
}

double SkewSystem::holonomy_error_bound(double du) const {
    require_dominated(*this);
    const double w = omega();
    return kTau * fp_.delta * std::abs(du) * std::pow(w, depth_) / (1.0 - w);
}

LeafFrame make_leaf_frame(const SkewSystem& sys, const MPoint& marked) {
    require_dominated(sys);
    LeafFrame f;
    f.marked = {wrap_point(marked.x), wrap(marked.theta)};
    f.depth = sys.holonomy_depth();
    f.theta_back = sys.apply(f.marked, -static_cast<std::int64_t>(f.depth)).theta;
    return f;
}

double leaf_fiber_at(const SkewSystem& sys, const LeafFrame& f, const TorusPoint& y) {
    require_dominated(sys);
    const TorusPoint yw = wrap_point(y);
    double th = f.theta_back;
    for (int t = f.depth; t >= 1; --t) th = sys.g(apply_auto(sys.base(), yw, -t), th);
    return th;
}

MPoint cs_partner(const SkewSystem& sys, const MarkovPartition& P, int i,
                  const MPoint& z, const LeafFrame& leaf) {
    require_dominated(sys);
    const EigenCoords cz = P.chart_coords(i, z.x);
    const EigenCoords cm = P.chart_coords(i, leaf.marked.x);
    const TorusPoint b = P.chart_point(i, cz.u, cm.s);
    return {b, leaf_fiber_at(sys, leaf, b)};
}

ExponentEstimate center_exponent(const SkewSystem& sys, std::size_t n_samples,
                                 int burn_in, int n_iter, Rng& rng) {
    if (n_samples == 0 || n_iter <= 0)
        throw std::invalid_argument("center_exponent: empty sampling plan");
    std::vector<double> vals;
    vals.reserve(n_samples);
    for (std::size_t k = 0; k < n_samples; ++k) {
        MPoint p{{rng.next_unit(), rng.next_unit()}, rng.next_unit()};
        MPoint cur = sys.apply(p, burn_in);
        double acc = 0.0;
        for (int t = 0; t < n_iter; ++t) {
            acc += std::log(sys.gprime(cur.theta));
            cur = sys.step(cur);
        }
        vals.push_back(acc / n_iter);
    }
    ExponentEstimate e;
    e.value = mean(vals);
    e.se = vals.size() > 1
               ? sample_stddev(vals) / std::sqrt(static_cast<double>(vals.size()))
               : 0.0;
    e.n = n_samples;
    return e;
}

}
