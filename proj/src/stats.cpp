#include "catlab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>

#include "catlab/torus.hpp"

namespace catlab {

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

struct CsNormData {
    double sup_abs = 0.0;   // sup |log cs|
    double slope = 0.0;     // sup |d/dtheta log cs|
};

// fine-grid bound; the derivative is analytic where the norm is not clamped
CsNormData cs_norm_data(const SkewSystem& sys) {
    const double kappa = sys.params().kappa;
    const double clamp = 1.0 / sys.base().lambda_u;
    CsNormData out;
    const int n = 1 << 16;
    for (int k = 0; k < n; ++k) {
        const double th = static_cast<double>(k) / n;
        const double gp = 1.0 - kappa * std::cos(kTau * th);
        const double cs = std::max(std::fabs(gp), clamp);
        out.sup_abs = std::max(out.sup_abs, std::fabs(std::log(cs)));
        if (std::fabs(gp) > clamp)
            out.slope = std::max(out.slope, kTau * kappa * std::fabs(std::sin(kTau * th)) /
                                                std::fabs(gp));
    }
    return out;
}

double term_value(const SkewSystem& sys, Harmonic h, const MPoint& p) {
    switch (h) {
        case Harmonic::One: return 1.0;
        case Harmonic::CosX1: return std::cos(kTau * p.x.x1);
        case Harmonic::SinX1: return std::sin(kTau * p.x.x1);
        case Harmonic::CosX2: return std::cos(kTau * p.x.x2);
        case Harmonic::SinX2: return std::sin(kTau * p.x.x2);
        case Harmonic::CosTheta: return std::cos(kTau * p.theta);
        case Harmonic::SinTheta: return std::sin(kTau * p.theta);
        case Harmonic::LogCsNorm: return std::log(sys.cs_norm(p.theta));
    }
    return 0.0;
}

}  // namespace

double metric_dist(const MPoint& a, const MPoint& b) {
    return std::hypot(torus_dist(a.x, b.x), circ_dist(a.theta, b.theta));
}

double HolderObservable::eval(const SkewSystem& sys, const MPoint& p) const {
    double s = 0.0;
    for (const auto& t : terms) s += t.coef * term_value(sys, t.h, p);
    return s;
}

HolderObservable make_observable(const SkewSystem& sys, std::string name,
                                 std::vector<HolderTerm> terms) {
    HolderObservable obs;
    obs.name = std::move(name);
    obs.terms = std::move(terms);

    double c_one = 0.0, c_cx1 = 0.0, c_sx1 = 0.0, c_cx2 = 0.0, c_sx2 = 0.0;
    double c_cth = 0.0, c_sth = 0.0, c_cs = 0.0;
    for (const auto& t : obs.terms) {
        switch (t.h) {
            case Harmonic::One: c_one += t.coef; break;
            case Harmonic::CosX1: c_cx1 += t.coef; break;
            case Harmonic::SinX1: c_sx1 += t.coef; break;
            case Harmonic::CosX2: c_cx2 += t.coef; break;
            case Harmonic::SinX2: c_sx2 += t.coef; break;
            case Harmonic::CosTheta: c_cth += t.coef; break;
            case Harmonic::SinTheta: c_sth += t.coef; break;
            case Harmonic::LogCsNorm: c_cs += t.coef; break;
        }
    }
    // per-variable amplitudes: cos/sin pairs combine into one shifted wave,
    // so sup and gradient bounds are attained, not just bounded
    const double r1 = std::hypot(c_cx1, c_sx1);
    const double r2 = std::hypot(c_cx2, c_sx2);
    const double rt = std::hypot(c_cth, c_sth);
    double th_slope = kTau * rt;
    double sup = std::fabs(c_one) + r1 + r2 + rt;
    if (c_cs != 0.0) {
        const CsNormData d = cs_norm_data(sys);
        sup += std::fabs(c_cs) * d.sup_abs;
        th_slope += std::fabs(c_cs) * d.slope;
    }
    obs.sup_abs = sup;
    const double s1 = kTau * r1, s2 = kTau * r2;
    obs.seminorm = std::sqrt(s1 * s1 + s2 * s2 + th_slope * th_slope);
    obs.holder_norm = obs.sup_abs + obs.seminorm;
    obs.gamma = 1.0;
    return obs;
}

std::vector<HolderObservable> observable_catalog(const SkewSystem& sys) {
    std::vector<HolderObservable> cat;
    cat.push_back(make_observable(sys, "cos2pix1", {{1.0, Harmonic::CosX1}}));
    cat.push_back(make_observable(sys, "sin2pix1", {{1.0, Harmonic::SinX1}}));
    cat.push_back(make_observable(sys, "cos2pix2", {{1.0, Harmonic::CosX2}}));
    cat.push_back(make_observable(sys, "cos2pitheta", {{1.0, Harmonic::CosTheta}}));
    cat.push_back(make_observable(sys, "sin2pitheta", {{1.0, Harmonic::SinTheta}}));
    cat.push_back(make_observable(sys, "mixed_x1_theta",
                                  {{1.0, Harmonic::CosX1}, {0.5, Harmonic::CosTheta}}));
    cat.push_back(make_observable(sys, "log_cs_norm", {{1.0, Harmonic::LogCsNorm}}));
    return cat;
}

HolderObservable catalog_observable(const SkewSystem& sys, const std::string& name) {
    for (auto& obs : observable_catalog(sys))
        if (obs.name == name) return obs;
    throw std::domain_error("unknown observable: " + name +
                            " (expected one of cos2pix1, sin2pix1, cos2pix2, cos2pitheta, "
                            "sin2pitheta, mixed_x1_theta, log_cs_norm)");
}

DeviationReport birkhoff_tail(const SkewSystem& sys, const MarkovPartition& P,
                              const ReferenceMeasure& source, int burn_in,
                              const HolderObservable& phi, double alpha,
                              const std::vector<int>& n_values, std::size_t n_samples,
                              Rng& rng) {
    if (n_values.empty()) throw std::invalid_argument("no window lengths given");
    if (alpha <= 0.0) throw std::invalid_argument("alpha must be positive");
    DeviationReport rep;
    rep.alpha = alpha;
    rep.n_values = n_values;
    rep.trials = n_samples;
    rep.hits.assign(n_values.size(), 0);

    // checkpoints sorted once; results reported in the caller's order
    std::vector<std::size_t> order(n_values.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return n_values[a] < n_values[b]; });
    const int n_max = n_values[order.back()];
    if (n_values[order.front()] < 1) throw std::invalid_argument("window lengths start at 1");

    const auto starts = sample(sys, P, source, rng, n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        MPoint z = burn_in > 0 ? sys.apply(starts[i], burn_in) : starts[i];
        double s = 0.0;
        std::size_t next = 0;
        for (int t = 1; t <= n_max; ++t) {
            s += phi.eval(sys, z);
            z = sys.step(z);
            while (next < order.size() && n_values[order[next]] == t) {
                if (std::fabs(s / t) > alpha) ++rep.hits[order[next]];
                ++next;
            }
        }
    }

    rep.tail.resize(n_values.size());
    rep.wilson.resize(n_values.size());
    rep.used.assign(n_values.size(), 0);
    for (std::size_t k = 0; k < n_values.size(); ++k) {
        const double p = static_cast<double>(rep.hits[k]) / static_cast<double>(n_samples);
        rep.tail[k] = p;
        rep.wilson[k] = wilson_interval(rep.hits[k], n_samples, 1.96);
        const double se = std::sqrt(p * (1.0 - p) / static_cast<double>(n_samples));
        if (rep.hits[k] > 0 && p > 3.0 * se) rep.used[k] = 1;
    }
    rep.alpha_too_large = rep.hits[order.front()] == 0;

    std::vector<double> xs, ys;
    for (std::size_t k = 0; k < n_values.size(); ++k)
        if (rep.used[k]) {
            xs.push_back(n_values[k]);
            ys.push_back(std::log(rep.tail[k]));
        }
    if (xs.size() >= 2) {
        const LinearFit fit = linear_fit(xs, ys);
        rep.c_alpha = -fit.slope;
        rep.C_alpha = std::exp(fit.intercept);
        rep.r2 = fit.r2;
        rep.fit_ok = true;
    }
    return rep;
}

bool monotone_trend_95(const DeviationReport& rep) {
    if (rep.wilson.size() < 2) return false;
    // order the intervals by window length
    std::vector<std::size_t> order(rep.n_values.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return rep.n_values[a] < rep.n_values[b]; });
    for (std::size_t k = 1; k < order.size(); ++k)
        if (rep.wilson[order[k]].lo > rep.wilson[order[k - 1]].hi) return false;
    return rep.wilson[order.front()].lo > rep.wilson[order.back()].hi;
}

namespace {

// certified per-step maxima of phi over one subcylinder of the plaque:
// 33 samples per step plus a Lipschitz inflation across the sample gaps,
// capped at the global sup
std::vector<double> observable_step_maxima(const SkewSystem& sys, const MarkovPartition& P,
                                           const ReferenceMeasure& m, const SymbolicCylinder& c,
                                           const HolderObservable& phi, int depth) {
    constexpr int kSamples = 33;
    const double lam_u = sys.base().lambda_u;
    const double lip_leaf = sys.leaf_lipschitz();
    std::vector<double> maxima(static_cast<std::size_t>(depth),
                               -std::numeric_limits<double>::infinity());
    std::vector<MPoint> pts;
    pts.reserve(kSamples);
    for (int k = 0; k < kSamples; ++k) {
        const double u = c.u_lo + c.u_len * static_cast<double>(k) / (kSamples - 1);
        pts.push_back(reference_point_at(sys, P, m, u));
    }
    double gap = 0.5 * c.u_len / (kSamples - 1);  // half the sample spacing
    for (int t = 0; t < depth; ++t) {
        double mx = -std::numeric_limits<double>::infinity();
        for (auto& z : pts) {
            mx = std::max(mx, phi.eval(sys, z));
            z = sys.step(z);
        }
        const double inflation = phi.seminorm * gap * (1.0 + lip_leaf);
        maxima[static_cast<std::size_t>(t)] = std::min(mx + inflation, phi.sup_abs);
        gap *= lam_u;
    }
    return maxima;
}

}  // namespace

std::vector<CumulantRow> cumulant_bound(const SkewSystem& sys, const MarkovPartition& P,
                                        const ContractionProfile& prof,
                                        const HolderObservable& phi,
                                        const ReferenceMeasure& plaque, int n_max,
                                        std::size_t cap) {
    if (n_max < 1) throw std::invalid_argument("need at least one cylinder depth");
    std::vector<CumulantRow> rows;
    rows.reserve(static_cast<std::size_t>(n_max));
    for (int n = 1; n <= n_max; ++n) {
        CumulantRow row;
        row.n = n;
        row.bound = std::pow(prof.theta1, prof.s1 * n);
        double lhs = 0.0;
        enumerate_cylinders(P, plaque.rect, n, cap, [&](const SymbolicCylinder& c) {
            const auto maxima = observable_step_maxima(sys, P, plaque, c, phi, n);
            double s = 0.0;
            for (double v : maxima) s += v;
            lhs += c.mass * std::exp(prof.s1 * s);
        });
        row.lhs = lhs;
        rows.push_back(row);
    }
    return rows;
}

CorrelationReport correlation_decay(const SkewSystem& sys, const MarkovPartition& P,
                                    const ReferenceMeasure& source, int burn_in,
                                    const HolderObservable& phi, const HolderObservable& psi,
                                    const std::vector<int>& n_values, std::size_t n_samples,
                                    Rng& rng) {
    if (n_values.empty()) throw std::invalid_argument("no lags given");
    CorrelationReport rep;
    rep.n_values = n_values;

    std::vector<std::size_t> order(n_values.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return n_values[a] < n_values[b]; });
    if (n_values[order.front()] < 0) throw std::invalid_argument("lags start at 0");
    const int n_max = n_values[order.back()];

    std::vector<double> b(n_samples);
    std::vector<std::vector<double>> a(n_values.size());
    for (auto& col : a) col.resize(n_samples);

    const auto starts = sample(sys, P, source, rng, n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        MPoint z = burn_in > 0 ? sys.apply(starts[i], burn_in) : starts[i];
        b[i] = psi.eval(sys, z);
        std::size_t next = 0;
        for (int t = 0; t <= n_max; ++t) {
            while (next < order.size() && n_values[order[next]] == t) {
                a[order[next]][i] = phi.eval(sys, z);
                ++next;
            }
            if (t < n_max) z = sys.step(z);
        }
    }

    const double nd = static_cast<double>(n_samples);
    double mb = 0.0;
    for (double v : b) mb += v;
    mb /= nd;
    rep.psi_mean = mb;

    rep.corr.resize(n_values.size());
    rep.se.resize(n_values.size());
    rep.used.assign(n_values.size(), 0);
    const int n_resamples = 160;
    std::vector<double> boots(n_resamples);
    for (std::size_t k = 0; k < n_values.size(); ++k) {
        const auto& col = a[k];
        double ma = 0.0, mab = 0.0;
        for (std::size_t i = 0; i < n_samples; ++i) {
            ma += col[i];
            mab += col[i] * b[i];
        }
        ma /= nd;
        mab /= nd;
        rep.corr[k] = mab - ma * mb;
        if (k == order.back()) rep.phi_mean = ma;

        for (int r = 0; r < n_resamples; ++r) {
            double sa = 0.0, sb = 0.0, sab = 0.0;
            for (std::size_t i = 0; i < n_samples; ++i) {
                const std::size_t j = static_cast<std::size_t>(rng.next_unit() * nd) % n_samples;
                sa += col[j];
                sb += b[j];
                sab += col[j] * b[j];
            }
            boots[r] = sab / nd - (sa / nd) * (sb / nd);
        }
        rep.se[k] = sample_stddev(boots);
        // absolute floor: an exactly-zero series still carries rounding dust
        // smaller than its bootstrap error
        if (std::fabs(rep.corr[k]) > std::max(3.0 * rep.se[k], 1e-12)) rep.used[k] = 1;
    }

    std::vector<double> xs, ys;
    for (std::size_t k = 0; k < n_values.size(); ++k)
        if (rep.used[k]) {
            xs.push_back(n_values[k]);
            ys.push_back(std::log(std::fabs(rep.corr[k])));
        }
    rep.below_noise = xs.empty();
    if (xs.size() >= 3) {
        const LinearFit fit = linear_fit(xs, ys);
        rep.tau = std::exp(fit.slope);
        rep.K = std::exp(fit.intercept);
        rep.r2 = fit.r2;
        rep.fit_ok = true;
    }
    return rep;
}

}
