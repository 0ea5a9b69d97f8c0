#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bkd/core_matrix.hpp"
#include "bkd/dynamics.hpp"
#include "bkd/errors.hpp"
#include "bkd/fock.hpp"

namespace bkd {

inline constexpr double denominator_epsilon = 1e-12;

// Uniform grid 0, dt, 2dt, ... The sampling bound keeps dt well under the
// fastest normal-mode period at the parameter point being simulated.
struct TimeGrid {
    double dt;
    double t_max;
    int points;

    static TimeGrid make(double t_max, double dt, double omega_max) {
        if (!(t_max > 0) || !(dt > 0)) throw contract_error("TimeGrid: need t_max > 0, dt > 0");
        double bound = 0.01;
        if (omega_max > 0) bound = std::min(bound, 2.0 * M_PI / (50.0 * omega_max));
        if (dt > bound * (1.0 + 1e-12))
            throw contract_error("TimeGrid: dt=" + std::to_string(dt) +
                                 " exceeds the sampling bound " + std::to_string(bound));
        const int pts = static_cast<int>(std::floor(t_max / dt + 1e-9)) + 1;
        if (pts < 2) throw contract_error("TimeGrid: fewer than two points");
        return {dt, t_max, pts};
    }

    double time(int k) const { return k * dt; }
};

enum class G2Kind { zero_t, t_zero };

inline const char* kind_label(G2Kind k) { return k == G2Kind::zero_t ? "0t" : "t0"; }

// Per-point annotation bits.
enum PointFlag : uint8_t {
    point_ok = 0,
    point_warn = 1,     // leakage above the warn threshold
    point_gated = 2,    // cutoff pair disagreed beyond the pointwise gate
    point_missing = 4,  // past the hard-leakage horizon, value withheld
};

// One g2 section at fixed mu. Values and leakage are NaN wherever the
// missing bit is set; `horizon` is the last trustworthy time when truncated.
struct CoherenceSeries {
    G2Kind kind;
    double mu = 0.0;
    TimeGrid grid{0.01, 1.0, 101};
    int n_max = 0;
    std::vector<double> values;
    std::vector<double> leak;
    std::vector<uint8_t> flags;
    double denominator_floor = std::numeric_limits<double>::infinity();
    std::optional<double> warn_time;
    std::optional<double> horizon;

    bool covers(double T) const {
        for (int k = 0; k < grid.points && grid.time(k) <= T + 1e-9; ++k)
            if (flags[static_cast<std::size_t>(k)] & point_missing) return false;
        return T <= grid.t_max + 1e-9;
    }
};

namespace detail {

inline double norm2(const CplxVec& v) { return v.squaredNorm(); }

inline void check_denominator(double d1, double d2) {
    if (d1 * d2 >= denominator_epsilon) return;
    const char* which = d1 <= d2 ? "D1" : "D2";
    throw denominator_error(which, std::string("g2: denominator factor ") + which +
                                       " underflowed (product " + std::to_string(d1 * d2) + ")");
}

}  // namespace detail

// Factorized evaluation of g2(t1, t2) for a given initial state:
// N = |a U(t1) a psi(t2)|^2, D1 = |a U(t1) psi(t2)|^2, D2 = |a psi(t2)|^2.
inline double g2(const SpectralDecomposition& spec, const BosonOperator& a,
                 const StateVector& psi0, double t1, double t2) {
    if (t1 < 0 || t2 < 0) throw domain_error("g2: need t1, t2 >= 0");
    CplxVec psi2 = evolve_raw(spec, psi0.amp, t2);
    if (leakage(psi2, spec.tr) > leak_hard_threshold)
        throw truncation_error(t2, "g2: leakage horizon exceeded at t2");
    CplxVec apsi2 = a.apply(psi2);
    const double d2 = detail::norm2(apsi2);

    CplxVec x = evolve_raw(spec, psi2, t1);
    if (leakage(x, spec.tr) > leak_hard_threshold)
        throw truncation_error(t1 + t2, "g2: leakage horizon exceeded at t1 + t2");
    const double d1 = detail::norm2(a.apply(x));

    const double n = detail::norm2(a.apply(evolve_raw(spec, apsi2, t1)));
    detail::check_denominator(d1, d2);
    return n / (d1 * d2);
}

// Literal four-operator route: dense Heisenberg operators built from dense
// propagators, evaluated as <a^+(t2) a^+(s) a(s) a(t2)> with s = t1 + t2.
// Deliberately a separate code path from the norm-factorized evaluation; the
// two are cross-checked on small instances.
struct LiteralG2 {
    double value;
    double imag_residue;
};

inline LiteralG2 g2_literal(const SpectralDecomposition& spec, const BosonOperator& a,
                            const StateVector& psi0, double t1, double t2) {
    const int dim = spec.dim();
    if (dim > 4096) throw domain_error("g2_literal: dense route is for small instances");

    auto propagator = [&](double t) {
        Eigen::MatrixXcd u = Eigen::MatrixXcd::Zero(dim, dim);
        for (const SpectralDecomposition::Block& b : spec.blocks) {
            const int bn = static_cast<int>(b.idx.size());
            Eigen::MatrixXcd ph(bn, bn);
            for (int j = 0; j < bn; ++j)
                ph.col(j) = std::exp(cplx(0.0, -b.eigenvalues[j] * t)) *
                            b.vectors.col(j).cast<cplx>();
            Eigen::MatrixXcd blk = ph * b.vectors.transpose().cast<cplx>();
            for (int r = 0; r < bn; ++r)
                for (int c = 0; c < bn; ++c)
                    u(b.idx[static_cast<std::size_t>(r)], b.idx[static_cast<std::size_t>(c)]) =
                        blk(r, c);
        }
        return u;
    };

    const Eigen::MatrixXcd a_dense = a.dense().cast<cplx>();
    auto heisenberg = [&](double t) {
        const Eigen::MatrixXcd u = propagator(t);
        return Eigen::MatrixXcd(u.adjoint() * a_dense * u);
    };

    const Eigen::MatrixXcd a_t2 = heisenberg(t2);
    const Eigen::MatrixXcd a_s = heisenberg(t1 + t2);
    const Eigen::MatrixXcd n_s = a_s.adjoint() * a_s;

    const CplxVec phi = a_t2 * psi0.amp;
    const cplx num = phi.dot(n_s * phi);
    const cplx den1 = psi0.amp.dot(n_s * psi0.amp);
    const cplx den2 = psi0.amp.dot(a_t2.adjoint() * a_t2 * psi0.amp);
    detail::check_denominator(den1.real(), den2.real());
    const cplx g = num / (den1 * den2);
    return {g.real(), std::abs(g.imag())};
}

// Engine shared by the two section computations. Both sections reuse the
// same evolved states: psi(t) serves g2(0,t) entirely and the D1 factor of
// g2(t,0); the evolved two-mode vacuum provides the numerator of g2(t,0).
struct CoherencePair {
    std::optional<CoherenceSeries> s0t;
    std::optional<CoherenceSeries> st0;
};

inline CoherencePair compute_g2_sections(const SpectralDecomposition& spec,
                                         const BosonOperator& a, double mu,
                                         const TimeGrid& grid, bool want_0t, bool want_t0) {
    const Truncation& tr = spec.tr;
    const StateVector psi0 = initial_state(tr);
    const StateVector v00 = vacuum_state(tr);

    auto fresh = [&](G2Kind k) {
        CoherenceSeries s;
        s.kind = k;
        s.mu = mu;
        s.grid = grid;
        s.n_max = tr.n_max;
        s.values.assign(static_cast<std::size_t>(grid.points),
                        std::numeric_limits<double>::quiet_NaN());
        s.leak.assign(static_cast<std::size_t>(grid.points),
                      std::numeric_limits<double>::quiet_NaN());
        s.flags.assign(static_cast<std::size_t>(grid.points), point_missing);
        return s;
    };
    CoherencePair out;
    if (want_0t) out.s0t = fresh(G2Kind::zero_t);
    if (want_t0) out.st0 = fresh(G2Kind::t_zero);

    bool alive_0t = want_0t, alive_t0 = want_t0;
    for (int k = 0; k < grid.points && (alive_0t || alive_t0); ++k) {
        const double t = grid.time(k);
        const CplxVec psi_t = evolve_raw(spec, psi0.amp, t);
        const double leak_psi = leakage(psi_t, tr);

        const CplxVec v1 = a.apply(psi_t);
        const double d1 = detail::norm2(v1);

        if (alive_0t) {
            CoherenceSeries& s = *out.s0t;
            if (leak_psi > leak_hard_threshold) {
                alive_0t = false;
                s.horizon = k > 0 ? std::optional<double>(grid.time(k - 1)) : std::optional<double>(0.0);
            } else {
                detail::check_denominator(d1, d1);
                s.denominator_floor = std::min(s.denominator_floor, d1 * d1);
                const double g = detail::norm2(a.apply(v1)) / (d1 * d1);
                s.values[static_cast<std::size_t>(k)] = g;
                s.leak[static_cast<std::size_t>(k)] = leak_psi;
                uint8_t f = point_ok;
                if (leak_psi > leak_warn_threshold) {
                    f |= point_warn;
                    if (!s.warn_time) s.warn_time = t;
                }
                s.flags[static_cast<std::size_t>(k)] = f;
            }
        }

        if (alive_t0) {
            CoherenceSeries& s = *out.st0;
            const CplxVec w_t = evolve_raw(spec, v00.amp, t);
            const double leak_w = std::max(leak_psi, leakage(w_t, tr));
            if (leak_w > leak_hard_threshold) {
                alive_t0 = false;
                s.horizon = k > 0 ? std::optional<double>(grid.time(k - 1)) : std::optional<double>(0.0);
            } else {
                detail::check_denominator(d1, 0.5);
                s.denominator_floor = std::min(s.denominator_floor, d1 * 0.5);
                const double g = detail::norm2(a.apply(w_t)) / d1;
                s.values[static_cast<std::size_t>(k)] = g;
                s.leak[static_cast<std::size_t>(k)] = leak_w;
                uint8_t f = point_ok;
                if (leak_w > leak_warn_threshold) {
                    f |= point_warn;
                    if (!s.warn_time) s.warn_time = t;
                }
                s.flags[static_cast<std::size_t>(k)] = f;
            }
        }
    }
    return out;
}

// Convenience wrappers that assemble the Hamiltonian themselves.
inline CoherenceSeries g2_0t_series(double mu, const TimeGrid& grid, const Truncation& tr) {
    const SpectralDecomposition spec = diagonalize(build_dimer_hamiltonian(mu, tr));
    const ModeOperators ops = mode_operators(tr);
    return *compute_g2_sections(spec, ops.a, mu, grid, true, false).s0t;
}

inline CoherenceSeries g2_t0_series(double mu, const TimeGrid& grid, const Truncation& tr) {
    const SpectralDecomposition spec = diagonalize(build_dimer_hamiltonian(mu, tr));
    const ModeOperators ops = mode_operators(tr);
    return *compute_g2_sections(spec, ops.a, mu, grid, false, true).st0;
}

// Marks points where two cutoffs disagree beyond `tol`. Returns {checked,
// flagged}; the flags land on the higher-cutoff series, whose values are the
// ones reported downstream.
inline std::pair<long, long> apply_pointwise_gate(const CoherenceSeries& lo, CoherenceSeries& hi,
                                                  double tol) {
    long checked = 0, flagged = 0;
    const int n = std::min(lo.grid.points, hi.grid.points);
    for (int k = 0; k < n; ++k) {
        const std::size_t i = static_cast<std::size_t>(k);
        if ((lo.flags[i] & point_missing) || (hi.flags[i] & point_missing)) continue;
        ++checked;
        if (std::abs(lo.values[i] - hi.values[i]) > tol) {
            hi.flags[i] |= point_gated;
            ++flagged;
        }
    }
    return {checked, flagged};
}

// Trapezoidal average of the series over [0, T]. T must sit on the grid and
// inside the trustworthy range.
inline double time_average(const CoherenceSeries& s, double T) {
    if (!(T > 0)) throw domain_error("time_average: need T > 0");
    const double kf = T / s.grid.dt;
    const int k = static_cast<int>(std::lround(kf));
    if (std::abs(kf - k) > 1e-6) throw domain_error("time_average: T is not on the time grid");
    if (k >= s.grid.points) throw domain_error("time_average: T beyond the grid");
    double acc = 0.0;
    for (int j = 0; j <= k; ++j) {
        const std::size_t i = static_cast<std::size_t>(j);
        if (s.flags[i] & point_missing)
            throw domain_error("time_average: T beyond the leakage horizon");
        const double w = (j == 0 || j == k) ? 0.5 : 1.0;
        acc += w * s.values[i];
    }
    return acc * s.grid.dt / T;
}

// The witness curve D_mu(mu) = d/dmu of the windowed average, by central
// differences on a uniform mu grid. Rows exist only where both neighbors
// carry a defined average.
struct DmuCurve {
    G2Kind kind;
    double T = 0.0;
    double step = 0.0;
    std::vector<double> mu;       // interior grid points with a defined derivative
    std::vector<double> value;    // D_mu at those points
    bool minimum_found = false;
    double mu_star = 0.0;         // parabola-refined location of the minimum
    double d_star = 0.0;          // D_mu at the discrete minimum
    double mu_star_grid = 0.0;    // unrefined grid location
    bool refined = false;
};

inline DmuCurve dmu_from_averages(G2Kind kind, double T, const std::vector<double>& mu_grid,
                                  const std::vector<std::optional<double>>& avg, double step) {
    if (mu_grid.size() != avg.size())
        throw contract_error("dmu_from_averages: grid/average size mismatch");
    DmuCurve c;
    c.kind = kind;
    c.T = T;
    c.step = step;
    const std::size_t n = mu_grid.size();
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (!avg[i - 1] || !avg[i + 1]) continue;
        c.mu.push_back(mu_grid[i]);
        c.value.push_back((*avg[i + 1] - *avg[i - 1]) / (2.0 * step));
    }
    if (c.value.empty()) return c;

    std::size_t best = 0;
    for (std::size_t i = 1; i < c.value.size(); ++i)
        if (c.value[i] < c.value[best]) best = i;
    c.minimum_found = true;
    c.mu_star_grid = c.mu[best];
    c.d_star = c.value[best];
    c.mu_star = c.mu[best];

    // Parabolic refinement through the three points around the minimum,
    // applicable only when the neighbors are grid-adjacent.
    if (best > 0 && best + 1 < c.value.size() &&
        std::abs(c.mu[best - 1] - (c.mu[best] - step)) < 1e-9 &&
        std::abs(c.mu[best + 1] - (c.mu[best] + step)) < 1e-9) {
        const double dm = c.value[best - 1], d0 = c.value[best], dp = c.value[best + 1];
        const double curv = dm - 2.0 * d0 + dp;
        if (curv > 0) {
            c.mu_star = c.mu[best] + 0.5 * step * (dm - dp) / curv;
            c.refined = true;
        }
    }
    return c;
}

// Linear fit of mu_star against 1/T, plus the depth-monotonicity flag.
struct TSample {
    double T;
    double mu_star;
    double d_star;
};

struct ExtrapolationFit {
    std::vector<TSample> samples;
    double slope = 0.0;
    double intercept = 0.0;
    std::vector<double> residuals;
    bool depths_monotone = false;  // d_star strictly decreasing with T
};

inline ExtrapolationFit extrapolate_T(std::vector<TSample> samples) {
    if (samples.size() < 3) throw domain_error("extrapolate_T: need at least 3 samples");
    std::sort(samples.begin(), samples.end(),
              [](const TSample& x, const TSample& y) { return x.T < y.T; });
    for (std::size_t i = 1; i < samples.size(); ++i)
        if (!(samples[i].T > samples[i - 1].T + 1e-12))
            throw domain_error("extrapolate_T: T values must be distinct");

    ExtrapolationFit fit;
    fit.samples = samples;
    const std::size_t n = samples.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const TSample& s : samples) {
        const double x = 1.0 / s.T;
        sx += x;
        sy += s.mu_star;
        sxx += x * x;
        sxy += x * s.mu_star;
    }
    const double det = n * sxx - sx * sx;
    fit.slope = (n * sxy - sx * sy) / det;
    fit.intercept = (sxx * sy - sx * sxy) / det;
    fit.residuals.reserve(n);
    for (const TSample& s : samples)
        fit.residuals.push_back(s.mu_star - (fit.intercept + fit.slope / s.T));

    fit.depths_monotone = true;
    for (std::size_t i = 1; i < n; ++i)
        if (!(samples[i].d_star < samples[i - 1].d_star)) fit.depths_monotone = false;
    return fit;
}

}  // namespace bkd
