#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "bkd/coherence.hpp"
#include "bkd/core_matrix.hpp"
#include "bkd/dynamics.hpp"
#include "bkd/fock.hpp"

namespace bkd {

struct CheckResult {
    std::string name;
    bool pass;
    double measured;
    double bound;
    std::string detail;
};

namespace checks {

inline CheckResult bounded(std::string name, double measured, double bound,
                           std::string detail = "") {
    return {std::move(name), measured <= bound, measured, bound, std::move(detail)};
}

// max |M| over stored entries.
inline double sparse_max(const SparseReal& m) {
    double v = 0.0;
    for (int k = 0; k < m.outerSize(); ++k)
        for (SparseReal::InnerIterator it(m, k); it; ++it) v = std::max(v, std::abs(it.value()));
    return v;
}

inline CheckResult parity_commutator(double mu, const Truncation& tr) {
    const ModeOperators ops = mode_operators(tr);
    const BosonOperator h = build_dimer_hamiltonian(mu, tr);
    const SparseReal c = h.mat * ops.parity.mat - ops.parity.mat * h.mat;
    return bounded("parity_commutes_mu=" + std::to_string(mu), sparse_max(c), 1e-12);
}

inline CheckResult ladder_element(const Truncation& tr) {
    const ModeOperators ops = mode_operators(tr);
    const double got = ops.a.mat.coeff(tr.index(2, 0), tr.index(3, 0));
    return bounded("ladder_sqrt3", std::abs(got - std::sqrt(3.0)), 1e-14);
}

inline CheckResult normal_form_reassembly(double mu, const Truncation& tr) {
    const BosonOperator h = build_dimer_hamiltonian(mu, tr);
    const DpmOperators d = build_dpm_operators(tr);
    SparseReal acc(h.mat.rows(), h.mat.cols());
    for (ModeSign rho : {ModeSign::plus, ModeSign::minus}) {
        const NormalModeForm f = normal_mode_form(mu, rho);
        const BosonOperator& dd = rho == ModeSign::plus ? d.d_plus : d.d_minus;
        const SparseReal dm = dd.mat;
        const SparseReal dmt = dm.transpose();
        acc += f.alpha * (dmt * dm) + (f.beta / 2.0) * SparseReal(dmt * dmt + dm * dm);
        // the constant offsets of the two modes cancel in the total
    }
    // compare on interior states only: the d-products touch the edge rows
    const int cut = tr.n_max - 1;
    double worst = 0.0;
    SparseReal diff = acc - h.mat;
    for (int k = 0; k < diff.outerSize(); ++k)
        for (SparseReal::InnerIterator it(diff, k); it; ++it) {
            const int r = static_cast<int>(it.row()), c = static_cast<int>(it.col());
            if (tr.occ_a(r) < cut && tr.occ_b(r) < cut && tr.occ_a(c) < cut && tr.occ_b(c) < cut)
                worst = std::max(worst, std::abs(it.value()));
        }
    return bounded("normal_form_mu=" + std::to_string(mu), worst, 1e-10);
}

inline CheckResult spectrum_mirror(double mu, const Truncation& tr) {
    const SpectralDecomposition p = diagonalize(build_dimer_hamiltonian(mu, tr));
    const SpectralDecomposition m = diagonalize(build_dimer_hamiltonian(-mu, tr));
    double worst = 0.0;
    const int dim = p.dim();
    for (int k = 0; k < dim; ++k)
        worst = std::max(worst, std::abs(p.eigenvalues[k] + m.eigenvalues[dim - 1 - k]));
    return bounded("spectrum_mirror_mu=" + std::to_string(mu), worst, 1e-9);
}

inline CheckResult evolution_conserves(double mu, const Truncation& tr) {
    const BosonOperator h = build_dimer_hamiltonian(mu, tr);
    const SpectralDecomposition spec = diagonalize(h);
    const StateVector psi0 = initial_state(tr);
    const double e0 = expectation(h, psi0.amp).real();
    double worst = 0.0;
    for (double t : {0.7, 5.0, 19.3, 50.0}) {
        const StateVector psi = evolve(spec, psi0, t);
        worst = std::max(worst, std::abs(psi.norm() - 1.0));
        worst = std::max(worst, std::abs(expectation(h, psi.amp).real() - e0) /
                                    std::max(1.0, std::abs(e0)));
    }
    return bounded("evolution_conserves_mu=" + std::to_string(mu), worst, 1e-9);
}

inline CheckResult g2_at_origin(const Truncation& tr) {
    const SpectralDecomposition spec = diagonalize(build_dimer_hamiltonian(1.0, tr));
    const ModeOperators ops = mode_operators(tr);
    const double v = g2(spec, ops.a, initial_state(tr), 0.0, 0.0);
    return bounded("g2_origin", std::abs(v), 1e-12);
}

// Negative control: a deliberately corrupted operator must be caught. The
// check passes when diagonalize refuses the forged Hermitian flag.
inline CheckResult negative_control(const Truncation& tr) {
    BosonOperator h = build_dimer_hamiltonian(0.5, tr);
    std::vector<Eigen::Triplet<double>> t{{0, 1, 0.25}};
    SparseReal bump(h.mat.rows(), h.mat.cols());
    bump.setFromTriplets(t.begin(), t.end());
    h.mat = h.mat + bump;  // asymmetric now, flag still claims Hermitian
    bool caught = false;
    try {
        diagonalize(h);
    } catch (const contract_error&) {
        caught = true;
    }
    return {"negative_control_detects_corruption", caught, caught ? 0.0 : 1.0, 0.0,
            "hermiticity verification must reject a forged flag"};
}

inline CheckResult ep_locus_exact() {
    const auto locus = ep_locus();
    const bool ok = locus.size() == 4 && locus[0].first == 0.0 &&
                    locus[0].second == ModeSign::plus && locus[1].first == 0.0 &&
                    locus[1].second == ModeSign::minus && locus[2].first == -2.0 &&
                    locus[2].second == ModeSign::plus && locus[3].first == 2.0 &&
                    locus[3].second == ModeSign::minus;
    return {"ep_locus", ok, ok ? 0.0 : 1.0, 0.0, ""};
}

inline CheckResult factorized_vs_literal(int instances, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> mu_d(-3.0, 3.0);
    std::uniform_real_distribution<double> t_d(0.0, 2.0);
    std::uniform_int_distribution<int> n_d(3, 8);
    double worst = 0.0;
    for (int i = 0; i < instances; ++i) {
        const Truncation tr(n_d(rng));
        const double mu = mu_d(rng);
        const SpectralDecomposition spec = diagonalize(build_dimer_hamiltonian(mu, tr));
        const ModeOperators ops = mode_operators(tr);
        const StateVector psi0 = initial_state(tr);
        const double t1 = t_d(rng), t2 = t_d(rng);
        const double fac = g2(spec, ops.a, psi0, t1, t2);
        const LiteralG2 lit = g2_literal(spec, ops.a, psi0, t1, t2);
        worst = std::max(worst, std::abs(fac - lit.value));
        worst = std::max(worst, lit.imag_residue);
    }
    return bounded("factorized_vs_literal_n=" + std::to_string(instances), worst, 1e-10);
}

inline CheckResult level_spacings(const Truncation& tr) {
    const SpectralDecomposition spec = diagonalize(build_dimer_hamiltonian(3.0, tr));
    const double s1 = spec.eigenvalues[1] - spec.eigenvalues[0];
    const double s3 = spec.eigenvalues[3] - spec.eigenvalues[0];
    const double err =
        std::max(std::abs(s1 - std::sqrt(3.0)), std::abs(s3 - std::sqrt(15.0)));
    return bounded("level_spacings_mu=3", err, 1e-4);
}

inline CheckResult vacuum_residual(const Truncation& tr) {
    const QuasiparticleVacuum vac = quasiparticle_vacuum(3.0, tr);
    return bounded("vacuum_residual_mu=3", vac.residual_occupation, 1e-8);
}

inline CheckResult cutoff_convergence_probe() {
    // g2(0, 0.5) at mu=1 across n_max 30 vs 40.
    const TimeGrid grid = TimeGrid::make(0.5, 0.01, dominant_frequency(1.0));
    const CoherenceSeries lo = g2_0t_series(1.0, grid, Truncation(30));
    const CoherenceSeries hi = g2_0t_series(1.0, grid, Truncation(40));
    const double diff = std::abs(lo.values.back() - hi.values.back());
    return bounded("cutoff_convergence_g2", diff, 1e-8);
}

}  // namespace checks

inline std::vector<CheckResult> run_quick_checks() {
    std::vector<CheckResult> out;
    const Truncation small(12);
    out.push_back(checks::ep_locus_exact());
    out.push_back(checks::ladder_element(Truncation(4)));
    for (double mu : {-1.0, 0.5, 3.0}) out.push_back(checks::parity_commutator(mu, small));
    for (double mu : {-3.0, -1.0, 0.5, 1.0, 1.5, 3.0})
        out.push_back(checks::normal_form_reassembly(mu, small));
    out.push_back(checks::spectrum_mirror(1.3, small));
    out.push_back(checks::evolution_conserves(3.0, small));
    out.push_back(checks::g2_at_origin(small));
    out.push_back(checks::negative_control(Truncation(6)));
    out.push_back(checks::factorized_vs_literal(12, 20260822u));
    return out;
}

inline std::vector<CheckResult> run_full_checks() {
    std::vector<CheckResult> out = run_quick_checks();
    out.push_back(checks::factorized_vs_literal(100, 77u));
    out.push_back(checks::level_spacings(Truncation(40)));
    out.push_back(checks::spectrum_mirror(2.5, Truncation(30)));
    out.push_back(checks::vacuum_residual(Truncation(40)));
    out.push_back(checks::cutoff_convergence_probe());
    return out;
}

inline nlohmann::ordered_json checks_to_json(const std::vector<CheckResult>& results) {
    nlohmann::ordered_json j;
    j["checks"] = nlohmann::ordered_json::array();
    int failures = 0;
    for (const CheckResult& r : results) {
        nlohmann::ordered_json c;
        c["name"] = r.name;
        c["pass"] = r.pass;
        c["measured"] = r.measured;
        c["bound"] = r.bound;
        if (!r.detail.empty()) c["detail"] = r.detail;
        j["checks"].push_back(c);
        if (!r.pass) ++failures;
    }
    j["total"] = results.size();
    j["failures"] = failures;
    return j;
}

}  // namespace bkd
