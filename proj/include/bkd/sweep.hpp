#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "bkd/coherence.hpp"
#include "bkd/dynamics.hpp"
#include "bkd/errors.hpp"
#include "bkd/fock.hpp"

namespace bkd {

// Parameters of a D_mu sweep. The mu grid is offset by half a step so the
// degeneracy points can never land on a grid point. Each cell climbs the
// cutoff ladder until two consecutive rungs agree on every requested time
// average (the convergence gate that chooses n_max); cells that cannot
// converge or cannot reach a window end up missing for that window.
struct SweepConfig {
    double mu_lo = 0.5;
    double mu_hi = 3.5;
    double dmu = 0.01;
    std::vector<double> T{2.0, 4.0, 6.0, 8.0};
    double dt = 0.01;
    std::vector<int> rungs{40, 50, 60, 70};
    double avg_gate_tol = 0.02;   // acceptance tolerance on time averages
    double gate_tol = 1e-6;       // pointwise cutoff gate, reported as flags
    int margin = 2;
    int workers = 1;
    bool kind_0t = true;
    bool kind_t0 = true;

    void validate() const {
        if (!(mu_lo < mu_hi) || !(dmu > 0)) throw usage_error("sweep: bad mu range");
        if (T.empty()) throw usage_error("sweep: need at least one window T");
        for (double t : T) {
            if (!(t > 0)) throw usage_error("sweep: windows must be positive");
            const double k = t / dt;
            if (std::abs(k - std::lround(k)) > 1e-6)
                throw usage_error("sweep: every T must be a multiple of dt");
        }
        if (rungs.size() < 2) throw usage_error("sweep: need at least two cutoff rungs");
        for (std::size_t i = 1; i < rungs.size(); ++i)
            if (rungs[i] <= rungs[i - 1]) throw usage_error("sweep: rungs must increase");
        if (!(kind_0t || kind_t0)) throw usage_error("sweep: no section selected");
        if (workers < 1) throw usage_error("sweep: workers must be >= 1");
        Truncation(rungs.back(), margin);  // memory budget check
    }
};

inline std::vector<double> sweep_grid(const SweepConfig& cfg) {
    std::vector<double> g;
    for (int k = 0;; ++k) {
        const double mu = cfg.mu_lo + (k + 0.5) * cfg.dmu;
        if (mu >= cfg.mu_hi - 1e-12) break;
        g.push_back(mu);
    }
    if (g.empty()) throw usage_error("sweep: empty mu grid");
    return g;
}

// Outcome of one (mu, kind, T) slot.
struct CellEntry {
    std::optional<double> value;  // accepted time average
    int n_max = 0;                // rung the gate accepted
    double gate_delta = std::numeric_limits<double>::quiet_NaN();
};

struct CellResult {
    double mu = 0.0;
    int top_rung = 0;  // highest rung actually computed
    // entry[kind][T index]; kind 0 = g2(0,t), kind 1 = g2(t,0)
    std::array<std::vector<CellEntry>, 2> entry;
    long gate_checked = 0;  // pointwise-gate statistics across rung pairs
    long gate_flagged = 0;
};

namespace detail {

inline std::optional<double> safe_average(const std::optional<CoherenceSeries>& s, double T) {
    if (!s || !s->covers(T)) return std::nullopt;
    return time_average(*s, T);
}

}  // namespace detail

// Climb the cutoff ladder at one mu. Deterministic: depends only on cfg and
// mu, never on scheduling.
inline CellResult sweep_cell(const SweepConfig& cfg, double mu) {
    CellResult cell;
    cell.mu = mu;
    const std::size_t nT = cfg.T.size();
    for (auto& e : cell.entry) e.assign(nT, CellEntry{});

    const int kinds[2] = {cfg.kind_0t, cfg.kind_t0};
    auto unsettled = [&](int kind, std::size_t ti) {
        return kinds[kind] && !cell.entry[static_cast<std::size_t>(kind)][ti].value.has_value();
    };

    CoherencePair prev;
    int prev_rung = 0;
    double prev_horizon = 0.0;

    for (int rung : cfg.rungs) {
        // Time needed: the largest window still unsettled for either kind.
        double t_need = 0.0;
        for (int kind = 0; kind < 2; ++kind)
            for (std::size_t ti = 0; ti < nT; ++ti)
                if (unsettled(kind, ti)) t_need = std::max(t_need, cfg.T[ti]);
        if (t_need == 0.0) break;

        const Truncation tr(rung, cfg.margin);
        const SpectralDecomposition spec = diagonalize(build_dimer_hamiltonian(mu, tr));
        const ModeOperators ops = mode_operators(tr);
        const TimeGrid grid = TimeGrid::make(t_need, cfg.dt, dominant_frequency(mu));
        CoherencePair cur =
            compute_g2_sections(spec, ops.a, mu, grid, cfg.kind_0t, cfg.kind_t0);
        cell.top_rung = rung;

        double cur_horizon = 0.0;
        for (const auto* s : {&cur.s0t, &cur.st0})
            if (*s) cur_horizon = std::max(cur_horizon, (*s)->horizon.value_or(t_need));

        if (prev_rung > 0) {
            for (int kind = 0; kind < 2; ++kind) {
                const auto& sp = kind == 0 ? prev.s0t : prev.st0;
                const auto& sc = kind == 0 ? cur.s0t : cur.st0;
                for (std::size_t ti = 0; ti < nT; ++ti) {
                    if (!unsettled(kind, ti)) continue;
                    const auto ap = detail::safe_average(sp, cfg.T[ti]);
                    const auto ac = detail::safe_average(sc, cfg.T[ti]);
                    if (ap && ac && std::abs(*ac - *ap) <= cfg.avg_gate_tol) {
                        cell.entry[static_cast<std::size_t>(kind)][ti] = {*ac, rung,
                                                                          std::abs(*ac - *ap)};
                    }
                }
                if (sp && sc) {
                    auto hi = *sc;  // stats only; flags on the copy
                    const auto [checked, flagged] = apply_pointwise_gate(*sp, hi, cfg.gate_tol);
                    cell.gate_checked += checked;
                    cell.gate_flagged += flagged;
                }
            }

            // Bail when every remaining window sits beyond a horizon that has
            // effectively stopped growing with the cutoff.
            bool any_left = false;
            double t_min_left = std::numeric_limits<double>::infinity();
            for (int kind = 0; kind < 2; ++kind)
                for (std::size_t ti = 0; ti < nT; ++ti)
                    if (unsettled(kind, ti)) {
                        any_left = true;
                        t_min_left = std::min(t_min_left, cfg.T[ti]);
                    }
            if (!any_left) break;
            if (t_min_left > cur_horizon &&
                (cur_horizon - prev_horizon) < 0.15 * (t_min_left - cur_horizon))
                break;
        }
        prev = std::move(cur);
        prev_rung = rung;
        prev_horizon = cur_horizon;
    }
    return cell;
}

// Run all cells on a small thread pool. Cells are pure and indexed, so the
// merge is deterministic no matter how the pool schedules them.
inline std::vector<CellResult> run_sweep(const SweepConfig& cfg,
                                         const std::function<void(int, int)>& progress = {}) {
    cfg.validate();
    const std::vector<double> grid = sweep_grid(cfg);
    const int n = static_cast<int>(grid.size());
    std::vector<CellResult> results(static_cast<std::size_t>(n));

    std::atomic<int> next{0};
    std::atomic<int> done{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto worker = [&]() {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n) return;
            try {
                results[static_cast<std::size_t>(i)] = sweep_cell(cfg, grid[static_cast<std::size_t>(i)]);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
            const int d = done.fetch_add(1) + 1;
            if (progress) progress(d, n);
        }
    };

    const int nw = std::max(1, std::min(cfg.workers, n));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nw));
    for (int i = 0; i < nw; ++i) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
    return results;
}

// Assemble the per-window witness curves from the sweep cells.
inline std::vector<DmuCurve> dmu_curves(const SweepConfig& cfg,
                                        const std::vector<CellResult>& cells, G2Kind kind) {
    const std::vector<double> grid = sweep_grid(cfg);
    const std::size_t ki = kind == G2Kind::zero_t ? 0 : 1;
    std::vector<DmuCurve> curves;
    curves.reserve(cfg.T.size());
    for (std::size_t ti = 0; ti < cfg.T.size(); ++ti) {
        std::vector<std::optional<double>> avg(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) avg[i] = cells[i].entry[ki][ti].value;
        curves.push_back(dmu_from_averages(kind, cfg.T[ti], grid, avg, cfg.dmu));
    }
    return curves;
}

}  // namespace bkd
