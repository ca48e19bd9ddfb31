#include "catlab/gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "catlab/statutil.hpp"

namespace catlab {

namespace {

void check_plan(std::size_t n_particles, int n_iterates, int burn_in) {
    if (n_particles == 0) throw std::invalid_argument("no particles requested");
    if (burn_in < 0 || n_iterates <= burn_in)
        throw std::invalid_argument("need n_iterates > burn_in >= 0");
}

}  // namespace

EmpiricalMeasure estimate_mu(const SkewSystem& sys, const MarkovPartition& P,
                             const ReferenceMeasure& source, std::size_t n_particles,
                             int n_iterates, int burn_in, Rng& rng) {
    check_plan(n_particles, n_iterates, burn_in);
    const std::size_t keep = static_cast<std::size_t>(n_iterates - burn_in);
    const std::size_t n_starts = (n_particles + keep - 1) / keep;

    EmpiricalMeasure m;
    m.seed = rng.next_u64();
    m.n_iterates = n_iterates;
    m.burn_in = burn_in;
    m.source_rect = source.rect;
    Rng local(m.seed);

    m.points.reserve(n_starts * keep);
    m.block_bounds.reserve(n_starts + 1);
    m.block_bounds.push_back(0);
    for (std::size_t k = 0; k < n_starts; ++k) {
        const double u = local.next_unit() * P.rect(source.rect).Lu;
        MPoint cur = sys.apply(reference_point_at(sys, P, source, u), burn_in);
        for (std::size_t t = 0; t < keep; ++t) {
            m.points.push_back(cur);
            cur = sys.step(cur);
        }
        m.block_bounds.push_back(m.points.size());
    }
    m.weights.assign(m.points.size(), 1.0 / static_cast<double>(m.points.size()));
    return m;
}

EmpiricalMeasure estimate_mu_cesaro(const SkewSystem& sys, const MarkovPartition& P,
                                    const ReferenceMeasure& source,
                                    std::size_t n_particles, int n_iterates,
                                    int burn_in, Rng& rng) {
    check_plan(n_particles, n_iterates, burn_in);
    EmpiricalMeasure m;
    m.seed = rng.next_u64();
    m.n_iterates = n_iterates;
    m.burn_in = burn_in;
    m.source_rect = source.rect;
    Rng local(m.seed);

    m.points.reserve(n_particles);
    m.block_bounds.reserve(n_particles + 1);
    m.block_bounds.push_back(0);
    const std::uint64_t span = static_cast<std::uint64_t>(n_iterates - burn_in) + 1;
    for (std::size_t k = 0; k < n_particles; ++k) {
        const double u = local.next_unit() * P.rect(source.rect).Lu;
        const int j = burn_in + static_cast<int>(local.next_below(span));
        m.points.push_back(sys.apply(reference_point_at(sys, P, source, u), j));
        m.block_bounds.push_back(m.points.size());
    }
    m.weights.assign(m.points.size(), 1.0 / static_cast<double>(m.points.size()));
    return m;
}

IntegralEstimate integrate(const EmpiricalMeasure& m, const Observable& phi, Rng& rng,
                           int n_resamples) {
    if (m.points.empty()) throw std::invalid_argument("empty measure");
    if (m.block_bounds.size() < 2 || m.block_bounds.back() != m.points.size())
        throw std::invalid_argument("corrupt block structure");

    IntegralEstimate est;
    double tot_w = 0.0;
    for (std::size_t k = 0; k < m.points.size(); ++k) {
        est.value += m.weights[k] * phi(m.points[k]);
        tot_w += m.weights[k];
    }
    est.value /= tot_w;

    const std::size_t n_blocks = m.block_bounds.size() - 1;
    if (n_blocks < 2) {
        est.se = 0.0;
        return est;
    }
    std::vector<double> sums(n_blocks, 0.0), counts(n_blocks, 0.0);
    for (std::size_t b = 0; b < n_blocks; ++b) {
        for (std::size_t k = m.block_bounds[b]; k < m.block_bounds[b + 1]; ++k) {
            sums[b] += m.weights[k] * phi(m.points[k]);
            counts[b] += m.weights[k];
        }
    }
    est.se = bootstrap_se(sums, counts, n_resamples, rng);
    return est;
}

double rectangle_mass(const EmpiricalMeasure& m, const MarkovPartition& P, int i) {
    double mass = 0.0;
    for (std::size_t k = 0; k < m.points.size(); ++k)
        if (P.locate(m.points[k].x) == i) mass += m.weights[k];
    return mass;
}

namespace {

double cell_mid_u(const SymbolicCylinder& c) { return c.u_lo + c.u_len / 2.0; }

void normalize(const MarkovPartition& P, HolderDensityState& s) {
    const double Lu = P.rect(s.rect).Lu;
    double mass = 0.0;
    for (std::size_t k = 0; k < s.mesh.size(); ++k)
        mass += (s.mesh[k].u_len / Lu) * std::exp(s.log_density[k]);
    if (!(mass > 0.0)) throw std::domain_error("density state has no mass");
    const double shift = std::log(mass);
    for (double& v : s.log_density) v -= shift;
}

}  // namespace

HolderDensityState make_density_state(const MarkovPartition& P, int rect, int depth,
                                      const std::function<double(double)>& log_rho_of_u,
                                      double holder_bound, double gamma) {
    if (depth < 1) throw std::invalid_argument("density mesh needs depth >= 1");
    HolderDensityState s;
    s.rect = rect;
    s.depth = depth;
    s.mesh = enumerate_cylinders(P, rect, depth, 1u << 22);
    s.log_density.reserve(s.mesh.size());
    for (const auto& c : s.mesh) s.log_density.push_back(log_rho_of_u(cell_mid_u(c)));
    s.holder_bound = holder_bound;
    s.gamma = gamma;
    normalize(P, s);
    return s;
}

double measured_holder_constant(const HolderDensityState& s) {
    double best = 0.0;
    for (std::size_t a = 0; a < s.mesh.size(); ++a) {
        for (std::size_t b = a + 1; b < s.mesh.size(); ++b) {
            const double d = std::abs(cell_mid_u(s.mesh[a]) - cell_mid_u(s.mesh[b]));
            if (d <= 0.0) continue;
            best = std::max(best, std::abs(s.log_density[a] - s.log_density[b]) /
                                      std::pow(d, s.gamma));
        }
    }
    return best;
}

double density_mass(const MarkovPartition& P, const HolderDensityState& s) {
    const double Lu = P.rect(s.rect).Lu;
    double mass = 0.0;
    for (std::size_t k = 0; k < s.mesh.size(); ++k)
        mass += (s.mesh[k].u_len / Lu) * std::exp(s.log_density[k]);
    return mass;
}

std::vector<std::pair<double, HolderDensityState>> push_density(
    const SkewSystem& sys, const MarkovPartition& P, const HolderDensityState& s) {
    if (s.depth < 2)
        throw std::length_error("density mesh exhausted: nothing left to reindex");
    const double Lu_i = P.rect(s.rect).Lu;

    std::vector<std::pair<double, HolderDensityState>> out;
    for (int j = 0; j < P.size(); ++j) {
        if (!P.trans(s.rect, j)) continue;
        const double w_ij = P.subcylinder_weight(s.rect, j);

        HolderDensityState t;
        t.rect = j;
        t.depth = s.depth - 1;
        t.gamma = s.gamma;
        t.holder_bound = s.holder_bound * std::pow(sys.omega(), s.gamma);

        double branch_mass = 0.0;
        for (std::size_t k = 0; k < s.mesh.size(); ++k) {
            if (s.mesh[k].word.size() < 2 || s.mesh[k].word[1] != j) continue;
            SymbolicCylinder child;
            child.word.assign(s.mesh[k].word.begin() + 1, s.mesh[k].word.end());
            const SymbolicCylinder c = cylinder_from_word(P, child.word);
            child.u_lo = c.u_lo;
            child.u_len = c.u_len;
            child.mass = c.mass;
            child.s_scale = c.s_scale;
            child.s_shift = c.s_shift;
            t.mesh.push_back(child);
            t.log_density.push_back(s.log_density[k] + std::log(w_ij));
            branch_mass += (s.mesh[k].u_len / Lu_i) * std::exp(s.log_density[k]);
        }
        if (t.mesh.empty()) continue;
        const double shift = std::log(branch_mass);
        for (double& v : t.log_density) v -= shift;
        normalize(P, t);  // removes residual rounding in the branch weight
        out.emplace_back(branch_mass, t);
    }
    return out;
}

}
