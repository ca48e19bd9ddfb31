#include "catlab/torus.hpp"

#include <cmath>
#include <stdexcept>

namespace catlab {

double wrap(double v) {
    if (!std::isfinite(v)) throw std::invalid_argument("wrap: non-finite coordinate");
    double r = v - std::floor(v);
    return r >= 1.0 ? 0.0 : r;  // floor rounding can leave exactly 1.0
}

TorusPoint wrap_point(const TorusPoint& p) { return {wrap(p.x1), wrap(p.x2)}; }

double circ_dist(double a, double b) {
    double r = wrap(a - b);
    return r <= 0.5 ? r : 1.0 - r;
}

double circ_delta(double a, double b) {
    double r = wrap(a - b);
    return r < 0.5 ? r : r - 1.0;
}

double torus_dist(const TorusPoint& a, const TorusPoint& b) {
    const double d1 = circ_dist(a.x1, b.x1);
    const double d2 = circ_dist(a.x2, b.x2);
    return std::sqrt(d1 * d1 + d2 * d2);
}

double mul_mod1(std::int64_t m, double x) {
    if (!(x >= 0.0 && x < 1.0))
        throw std::invalid_argument("mul_mod1: x outside [0,1)");
    if (m == 0 || x == 0.0) return 0.0;
    int e = 0;
    const double f = std::frexp(x, &e);  // x = f * 2^e, f in [0.5, 1)
    const auto mant = static_cast<std::uint64_t>(std::ldexp(f, 53));  // exact
    const int k = 53 - e;  // x = mant / 2^k, k >= 53 since x < 1
    const bool neg = m < 0;
    const unsigned __int128 mm =
        neg ? static_cast<unsigned __int128>(-static_cast<__int128>(m))
            : static_cast<unsigned __int128>(m);
    const unsigned __int128 prod = mm * mant;  // < 2^63 * 2^53 = 2^116
    long double val;
    if (k <= 126) {
        const unsigned __int128 mod = static_cast<unsigned __int128>(1) << k;
        unsigned __int128 r = prod & (mod - 1);
        if (neg && r != 0) r = mod - r;
        val = ldexpl(static_cast<long double>(r), -k);
    } else {
        // x is so small that |m| * x < 1 and nothing reduces
        val = ldexpl(static_cast<long double>(prod), -k);
        if (neg && prod != 0) val = 1.0L - val;
    }
    double out = static_cast<double>(val);
    return out >= 1.0 ? 0.0 : out;
}

std::int64_t mat_det(const Mat2i& m) {
    const __int128 d = static_cast<__int128>(m.a) * m.d - static_cast<__int128>(m.b) * m.c;
    if (d > INT64_MAX || d < INT64_MIN) throw std::overflow_error("mat_det: overflow");
    return static_cast<std::int64_t>(d);
}

namespace {

std::int64_t checked_mul(std::int64_t x, std::int64_t y) {
    std::int64_t r;
    if (__builtin_mul_overflow(x, y, &r))
        throw std::overflow_error("integer matrix arithmetic overflows int64");
    return r;
}

std::int64_t checked_add(std::int64_t x, std::int64_t y) {
    std::int64_t r;
    if (__builtin_add_overflow(x, y, &r))
        throw std::overflow_error("integer matrix arithmetic overflows int64");
    return r;
}

}  // namespace

Mat2i mat_mul(const Mat2i& x, const Mat2i& y) {
    Mat2i r;
    r.a = checked_add(checked_mul(x.a, y.a), checked_mul(x.b, y.c));
    r.b = checked_add(checked_mul(x.a, y.b), checked_mul(x.b, y.d));
    r.c = checked_add(checked_mul(x.c, y.a), checked_mul(x.d, y.c));
    r.d = checked_add(checked_mul(x.c, y.b), checked_mul(x.d, y.d));
    return r;
}

Mat2i mat_pow(const Mat2i& m, std::int64_t n) {
    Mat2i base = m;
    if (n < 0) {
        const std::int64_t det = mat_det(m);
        if (det != 1 && det != -1)
            throw std::domain_error("mat_pow: matrix not invertible over the integers");
        // adjugate over det, which is +-1
        base = {det * m.d, -det * m.b, -det * m.c, det * m.a};
        n = -n;  // n == INT64_MIN is not reachable in practice here
    }
    Mat2i acc;  // identity
    while (n > 0) {
        if (n & 1) acc = mat_mul(acc, base);
        n >>= 1;
        if (n > 0) base = mat_mul(base, base);
    }
    return acc;
}

EigenCoords ToralAutomorphism::to_eigen(double px, double py) const {
    const double det = eu[0] * es[1] - eu[1] * es[0];
    return {(px * es[1] - py * es[0]) / det, (eu[0] * py - eu[1] * px) / det};
}

std::array<double, 2> ToralAutomorphism::from_eigen(const EigenCoords& c) const {
    return {c.u * eu[0] + c.s * es[0], c.u * eu[1] + c.s * es[1]};
}

namespace {

std::array<double, 2> unit_eigenvector(const Mat2i& m, double lambda) {
    double vx, vy;
    if (m.b != 0) {
        vx = static_cast<double>(m.b);
        vy = lambda - static_cast<double>(m.a);
    } else if (m.c != 0) {
        vx = lambda - static_cast<double>(m.d);
        vy = static_cast<double>(m.c);
    } else {
        throw std::domain_error("not Anosov: diagonal unimodular matrix");
    }
    const double nrm = std::sqrt(vx * vx + vy * vy);
    vx /= nrm;
    vy /= nrm;
    if (vx < 0.0 || (vx == 0.0 && vy < 0.0)) {
        vx = -vx;
        vy = -vy;
    }
    return {vx, vy};
}

}  // namespace

ToralAutomorphism make_automorphism(const Mat2i& m) {
    const std::int64_t det = mat_det(m);
    if (det != 1 && det != -1)
        throw std::invalid_argument("matrix is not unimodular (|det| must be 1)");
    const double tr = static_cast<double>(m.a) + static_cast<double>(m.d);
    const double disc = tr * tr - 4.0 * static_cast<double>(det);
    if (disc <= 0.0) throw std::domain_error("not Anosov: eigenvalues are not real and distinct");
    const double root = std::sqrt(disc);
    const double l1 = (tr + root) / 2.0;
    const double l2 = (tr - root) / 2.0;
    double lu = l1, ls = l2;
    if (std::abs(l2) > std::abs(l1)) {
        lu = l2;
        ls = l1;
    }
    if (std::abs(lu) <= 1.0 + 1e-9)
        throw std::domain_error("not Anosov: no eigenvalue outside the unit circle");
    ToralAutomorphism A;
    A.m = m;
    A.det = det;
    A.lambda_u = lu;
    A.lambda_s = ls;
    A.eu = unit_eigenvector(m, lu);
    A.es = unit_eigenvector(m, ls);
    return A;
}

namespace {

TorusPoint apply_mat(const Mat2i& M, const TorusPoint& p) {
    const double y1 = wrap(mul_mod1(M.a, p.x1) + mul_mod1(M.b, p.x2));
    const double y2 = wrap(mul_mod1(M.c, p.x1) + mul_mod1(M.d, p.x2));
    return {y1, y2};
}

}  // namespace

TorusPoint apply_auto(const ToralAutomorphism& A, const TorusPoint& p, std::int64_t n) {
    TorusPoint q = wrap_point(p);
    if (n == 0) return q;
    const std::int64_t sign = n < 0 ? -1 : 1;
    std::uint64_t left = n < 0 ? -static_cast<std::uint64_t>(n) : static_cast<std::uint64_t>(n);
    while (left > 0) {
        std::uint64_t k = std::min<std::uint64_t>(left, 32);
        for (;;) {
            try {
                const Mat2i M = mat_pow(A.m, sign * static_cast<std::int64_t>(k));
                q = apply_mat(M, q);
                break;
            } catch (const std::overflow_error&) {
                if (k == 1) throw;
                k /= 2;
            }
        }
        left -= k;
    }
    return q;
}

}
