#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "catlab/rng.hpp"
#include "catlab/torus.hpp"

namespace catlab {

// Axis-aligned box in the eigenframe chart: p(u,s) = anchor + u*eu + s*es
// with (u,s) in [0,Lu] x [0,Ls]. Chart coordinates are true arclengths.
struct Rectangle {
    TorusPoint anchor;
    double Lu = 0.0;
    double Ls = 0.0;
};

// One full crossing of rectangle `to` by the image of rectangle `from`.
// In the source chart the preimage strip is u in [u_off, u_off + Lu_to/lambda_u];
// a point (u,s) of that strip lands at u' = lambda_u*(u - u_off), s' = lambda_s*s + s_off.
struct Crossing {
    int from = 0;
    int to = 0;
    double u_off = 0.0;
    double s_off = 0.0;
    double weight = 0.0;  // Lu_to / (lambda_u * Lu_from)
};

struct MarkovReport {
    std::size_t n_rects = 0;
    std::size_t size_violations = 0;          // chart too large for unambiguous membership
    std::size_t markov_violations = 0;        // image strips that cross a boundary partially
    std::size_t multiplicity_violations = 0;  // rectangle pairs joined by several strips
    std::size_t covering_violations = 0;
    std::size_t disjointness_violations = 0;
    std::size_t affine_violations = 0;        // sampled one-step images off the strip maps
    bool sampling_skipped = false;            // set when chart membership would be unsound
    double area_defect = 0.0;
    double weight_row_defect = 0.0;
    double strip_tiling_defect = 0.0;
    double perron = 0.0;

    bool valid() const {
        return size_violations == 0 && markov_violations == 0 &&
               multiplicity_violations == 0 && covering_violations == 0 &&
               disjointness_violations == 0 && affine_violations == 0 &&
               !sampling_skipped && area_defect < 1e-9 && weight_row_defect < 1e-9 &&
               strip_tiling_defect < 1e-9;
    }
};

class MarkovPartition {
public:
    MarkovPartition(const ToralAutomorphism& A, std::vector<Rectangle> rects);

    const ToralAutomorphism& automorphism() const { return A_; }
    int size() const { return static_cast<int>(rects_.size()); }
    const Rectangle& rect(int i) const { return rects_.at(static_cast<std::size_t>(i)); }
    const std::vector<Crossing>& crossings() const { return crossings_; }
    bool ambiguous() const { return ambiguous_; }

    bool trans(int i, int j) const;
    // throws std::domain_error when the pair has no strip or several strips
    const Crossing& crossing(int i, int j) const;
    double subcylinder_weight(int i, int j) const { return crossing(i, j).weight; }

    // chart geometry; chart_coords uses the shortest lift from the chart center,
    // which is unambiguous exactly when the size check passes
    EigenCoords chart_coords(int i, const TorusPoint& p) const;
    TorusPoint chart_point(int i, double u, double s) const;
    bool contains(int i, const TorusPoint& p, double tol = 0.0) const;
    int locate(const TorusPoint& p) const;  // -1 when no rectangle claims p

    // canonical local product: u-coordinate of a, s-coordinate of b
    TorusPoint bracket(int i, const TorusPoint& a, const TorusPoint& b) const;

    // least n >= 1 with a length-n admissible path i -> j
    int first_connection(int i, int j, int n_max) const;

private:
    ToralAutomorphism A_;
    std::vector<Rectangle> rects_;
    std::vector<Crossing> crossings_;
    std::vector<int> cross_idx_;    // size*size, -1 when absent
    std::vector<int> cross_count_;  // strips found per (from, to) pair
    bool ambiguous_ = false;
    std::size_t geom_markov_violations_ = 0;

    friend MarkovReport verify_markov(const MarkovPartition& P, std::size_t n_samples, Rng& rng);
};

MarkovPartition build_partition(const ToralAutomorphism& A, std::vector<Rectangle> rects);

// Five-rectangle refinement of the golden two-box construction for [[2,1],[1,1]].
MarkovPartition builtin_cat_partition();

MarkovReport verify_markov(const MarkovPartition& P, std::size_t n_samples, Rng& rng);

// Depth-n cylinder [w0 ... wn] viewed in the chart of w0: a full-height strip
// u in [u_lo, u_lo + u_len]. After n steps the image is a full-width strip of
// the final rectangle with s' = s_scale * s + s_shift.
struct SymbolicCylinder {
    std::vector<int> word;
    double u_lo = 0.0;
    double u_len = 0.0;
    double mass = 0.0;  // u_len / Lu(word.front())
    double s_scale = 1.0;
    double s_shift = 0.0;
};

// All admissible words of the given depth from `start`, lexicographic, pushed
// to `sink`. Throws std::length_error ("cylinder explosion") past `cap` leaves.
void enumerate_cylinders(const MarkovPartition& P, int start, int depth, std::size_t cap,
                         const std::function<void(const SymbolicCylinder&)>& sink);
std::vector<SymbolicCylinder> enumerate_cylinders(const MarkovPartition& P, int start,
                                                  int depth, std::size_t cap);

// Itinerary of p for n steps (word length n+1); throws when a point cannot be located.
std::vector<int> word_of(const MarkovPartition& P, const TorusPoint& p, int n);

// Cylinder data for an explicit word; throws std::domain_error on inadmissible words.
SymbolicCylinder cylinder_from_word(const MarkovPartition& P, const std::vector<int>& word);

}
