#include "catlab/statutil.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace catlab {

namespace {

struct Fenwick {
    std::vector<int> t;
    explicit Fenwick(std::size_t n) : t(n + 1, 0) {}
    void add(std::size_t i) {
        for (++i; i < t.size(); i += i & (~i + 1)) ++t[i];
    }
    int prefix(std::size_t i) const {  // count of inserted ranks <= i
        int s = 0;
        for (++i; i > 0; i -= i & (~i + 1)) s += t[i];
        return s;
    }
};

struct TaggedPt {
    double x, y;
    int which;  // 0 = first sample, 1 = second
};

// largest |F_a - F_b| over quadrants {x <= px, y <= py} after the given sign
// flips, evaluated at every sample point
double ks_orientation(const std::vector<Pt2>& a, const std::vector<Pt2>& b,
                      double sx, double sy) {
    std::vector<TaggedPt> pts;
    pts.reserve(a.size() + b.size());
    for (const auto& p : a) pts.push_back({sx * p[0], sy * p[1], 0});
    for (const auto& p : b) pts.push_back({sx * p[0], sy * p[1], 1});
    std::vector<double> ys(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) ys[i] = pts[i].y;
    std::sort(ys.begin(), ys.end());
    ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
    auto yrank = [&](double y) {
        return static_cast<std::size_t>(
            std::upper_bound(ys.begin(), ys.end(), y) - ys.begin() - 1);
    };
    std::sort(pts.begin(), pts.end(), [](const TaggedPt& l, const TaggedPt& r) {
        return l.x < r.x;
    });
    Fenwick ta(ys.size()), tb(ys.size());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    double d = 0.0;
    std::size_t i = 0;
    while (i < pts.size()) {
        std::size_t j = i;
        while (j < pts.size() && pts[j].x == pts[i].x) {
            if (pts[j].which == 0) ta.add(yrank(pts[j].y));
            else tb.add(yrank(pts[j].y));
            ++j;
        }
        for (std::size_t k = i; k < j; ++k) {
            std::size_t r = yrank(pts[k].y);
            double fa = ta.prefix(r) / na;
            double fb = tb.prefix(r) / nb;
            d = std::max(d, std::abs(fa - fb));
        }
        i = j;
    }
    return d;
}

}  // namespace

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("linear_fit: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("linear_fit: need at least 2 points");
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0) throw std::invalid_argument("linear_fit: degenerate abscissae");
    LinearFit f;
    f.n = x.size();
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ssres = 0, sstot = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - (f.intercept + f.slope * x[i]);
        ssres += r * r;
        sstot += (y[i] - my) * (y[i] - my);
    }
    f.r2 = sstot == 0.0 ? (ssres == 0.0 ? 1.0 : 0.0) : 1.0 - ssres / sstot;
    return f;
}

Interval wilson_interval(std::uint64_t successes, std::uint64_t trials, double z) {
    if (trials == 0) throw std::invalid_argument("wilson_interval: no trials");
    if (successes > trials) throw std::invalid_argument("wilson_interval: successes > trials");
    const double n = static_cast<double>(trials);
    const double p = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = p + z2 / (2.0 * n);
    const double rad = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
    return {std::max(0.0, (center - rad) / denom), std::min(1.0, (center + rad) / denom)};
}

double mean(const std::vector<double>& v) {
    if (v.empty()) throw std::invalid_argument("mean: empty");
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_stddev(const std::vector<double>& v) {
    if (v.size() < 2) throw std::invalid_argument("sample_stddev: need at least 2 values");
    const double m = mean(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double bootstrap_se(const std::vector<double>& block_sums,
                    const std::vector<double>& block_counts,
                    int n_resamples, Rng& rng) {
    const std::size_t k = block_sums.size();
    if (k == 0 || block_counts.size() != k)
        throw std::invalid_argument("bootstrap_se: bad block arrays");
    if (n_resamples < 2) throw std::invalid_argument("bootstrap_se: need >= 2 resamples");
    std::vector<double> stats;
    stats.reserve(static_cast<std::size_t>(n_resamples));
    for (int b = 0; b < n_resamples; ++b) {
        double s = 0, c = 0;
        int attempts = 0;
        do {
            s = 0;
            c = 0;
            for (std::size_t i = 0; i < k; ++i) {
                const std::size_t j = static_cast<std::size_t>(rng.next_below(k));
                s += block_sums[j];
                c += block_counts[j];
            }
            if (++attempts > 100)
                throw std::domain_error("bootstrap_se: resamples keep hitting zero mass");
        } while (c == 0.0);
        stats.push_back(s / c);
    }
    return sample_stddev(stats);
}

double ks2d_two_sample(const std::vector<Pt2>& a, const std::vector<Pt2>& b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("ks2d_two_sample: empty sample");
    double d = 0.0;
    for (double sx : {1.0, -1.0})
        for (double sy : {1.0, -1.0}) d = std::max(d, ks_orientation(a, b, sx, sy));
    return d;
}

double ks2d_uniform(const std::vector<Pt2>& a) {
    if (a.empty()) throw std::invalid_argument("ks2d_uniform: empty sample");
    const double n = static_cast<double>(a.size());
    double d = 0.0;
    // reflections keep the reference law uniform on the unit square
    for (int ox = 0; ox < 2; ++ox) {
        for (int oy = 0; oy < 2; ++oy) {
            std::vector<Pt2> pts(a);
            for (auto& p : pts) {
                if (ox) p[0] = 1.0 - p[0];
                if (oy) p[1] = 1.0 - p[1];
            }
            std::vector<double> ys(pts.size());
            for (std::size_t i = 0; i < pts.size(); ++i) ys[i] = pts[i][1];
            std::sort(ys.begin(), ys.end());
            ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
            auto yrank = [&](double y) {
                return static_cast<std::size_t>(
                    std::upper_bound(ys.begin(), ys.end(), y) - ys.begin() - 1);
            };
            std::sort(pts.begin(), pts.end(),
                      [](const Pt2& l, const Pt2& r) { return l[0] < r[0]; });
            Fenwick t(ys.size());
            std::size_t i = 0;
            while (i < pts.size()) {
                std::size_t j = i;
                while (j < pts.size() && pts[j][0] == pts[i][0]) {
                    t.add(yrank(pts[j][1]));
                    ++j;
                }
                for (std::size_t k = i; k < j; ++k) {
                    const double femp = t.prefix(yrank(pts[k][1])) / n;
                    const double fu = pts[k][0] * pts[k][1];
                    d = std::max(d, std::abs(femp - fu));
                    d = std::max(d, std::abs(femp - 1.0 / n - fu));
                }
                i = j;
            }
        }
    }
    return d;
}

PowerResult power_iteration(const std::vector<std::vector<double>>& m,
                            double tol, std::size_t max_iters) {
    const std::size_t n = m.size();
    if (n == 0) throw std::invalid_argument("power_iteration: empty matrix");
    for (const auto& row : m)
        if (row.size() != n) throw std::invalid_argument("power_iteration: not square");
    std::vector<double> v(n, 1.0), w(n, 0.0);
    PowerResult res;
    for (std::size_t it = 1; it <= max_iters; ++it) {
        double nrm = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += m[i][j] * v[j];
            w[i] = s;
            nrm = std::max(nrm, std::abs(s));
        }
        if (nrm == 0.0) {
            res.eigenvalue = 0.0;
            res.vec.assign(n, 0.0);
            res.iters = it;
            return res;
        }
        double delta = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            w[i] /= nrm;
            delta = std::max(delta, std::abs(w[i] - v[i]));
        }
        v = w;
        res.eigenvalue = nrm;
        res.iters = it;
        if (delta < tol) break;
    }
    res.vec = v;
    return res;
}

}
