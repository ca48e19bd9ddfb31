#pragma once

#include <array>
#include <cstdint>

namespace catlab {

struct TorusPoint {
    double x1 = 0.0;
    double x2 = 0.0;
};

// representative in [0,1); throws std::invalid_argument for non-finite input
double wrap(double v);
TorusPoint wrap_point(const TorusPoint& p);

// shortest distance on R/Z
double circ_dist(double a, double b);
double torus_dist(const TorusPoint& a, const TorusPoint& b);

// signed representative of a-b in [-1/2, 1/2)
double circ_delta(double a, double b);

// Exact m*x mod 1 for x in [0,1): the product is formed on the integer
// mantissa, reduced mod 2^k exactly, and rounded once at the end, so the
// result is within 1 ulp regardless of |m|.
double mul_mod1(std::int64_t m, double x);

struct Mat2i {
    std::int64_t a = 1, b = 0;
    std::int64_t c = 0, d = 1;
};

// overflow-checked; throw std::overflow_error when an entry leaves int64
Mat2i mat_mul(const Mat2i& x, const Mat2i& y);
// binary exponentiation; negative n requires |det| = 1
Mat2i mat_pow(const Mat2i& m, std::int64_t n);
std::int64_t mat_det(const Mat2i& m);

struct EigenCoords {
    double u = 0.0;
    double s = 0.0;
};

struct ToralAutomorphism {
    Mat2i m;
    std::int64_t det = 1;
    double lambda_u = 0.0;               // expanding eigenvalue, |lambda_u| > 1
    double lambda_s = 0.0;               // contracting eigenvalue, may be negative
    std::array<double, 2> eu{1.0, 0.0};  // unit eigenvectors
    std::array<double, 2> es{0.0, 1.0};

    // plane coordinates in the eigenbasis (not reduced mod anything)
    EigenCoords to_eigen(double px, double py) const;
    std::array<double, 2> from_eigen(const EigenCoords& c) const;
};

// Validates hyperbolicity. Throws std::invalid_argument when |det| != 1 and
// std::domain_error ("not Anosov ...") when an eigenvalue sits on the unit
// circle or the pair is complex.
ToralAutomorphism make_automorphism(const Mat2i& m);

// A^n p on the torus, computed through exact integer matrix powers and
// mul_mod1. Long n is split into chunks that fit int64, so error stays at a
// few ulp per chunk instead of growing with n, and the computation path
// depends only on (A, n): repeated calls are bit-identical.
TorusPoint apply_auto(const ToralAutomorphism& A, const TorusPoint& p, std::int64_t n);

}
