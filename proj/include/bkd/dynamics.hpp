#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bkd/core_matrix.hpp"
#include "bkd/errors.hpp"
#include "bkd/fock.hpp"

// Dense symmetric eigensolver from LAPACK; measurably faster here than the
// header-only alternatives at the block sizes this library cares about.
extern "C" void dsyevd_(const char* jobz, const char* uplo, const int* n, double* a,
                        const int* lda, double* w, double* work, const int* lwork, int* iwork,
                        const int* liwork, int* info);

namespace bkd {

// Full eigensystem of a Hermitian operator, stored per invariant subspace.
// For a parity-preserving H there are two blocks; otherwise one. `order`
// merges the block eigenvalues into one ascending sequence.
struct SpectralDecomposition {
    struct Block {
        std::vector<int> idx;      // global Fock indices of this subspace
        Eigen::MatrixXd vectors;   // orthonormal eigenvector columns
        RealVec eigenvalues;       // ascending within the block
    };
    struct EigenRef {
        int block;
        int col;
    };

    std::vector<Block> blocks;
    std::vector<EigenRef> order;   // ascending global eigenvalue order
    RealVec eigenvalues;           // merged, ascending
    double residual = 0.0;         // max_k |H v_k - lambda_k v_k|
    double h_max_norm = 0.0;
    Truncation tr;

    int dim() const { return static_cast<int>(eigenvalues.size()); }

    // Eigenvector for the k-th ascending eigenvalue, embedded in full dimension.
    CplxVec eigenvector(int k) const {
        const EigenRef ref = order.at(static_cast<std::size_t>(k));
        const Block& b = blocks[static_cast<std::size_t>(ref.block)];
        CplxVec out = CplxVec::Zero(tr.dim());
        for (std::size_t i = 0; i < b.idx.size(); ++i)
            out[b.idx[i]] = b.vectors(static_cast<Eigen::Index>(i), ref.col);
        return out;
    }

    // max |V^T V - I| over all blocks; computed on demand because it costs a
    // dense product per block.
    double orthonormality_defect() const {
        double m = 0.0;
        for (const Block& b : blocks) {
            Eigen::MatrixXd g = b.vectors.transpose() * b.vectors;
            g.diagonal().array() -= 1.0;
            m = std::max(m, g.cwiseAbs().maxCoeff());
        }
        return m;
    }
};

namespace detail {

// In-place LAPACK driver; `a` holds the symmetric matrix on entry and the
// eigenvector columns on exit.
inline void symmetric_eig(Eigen::MatrixXd& a, RealVec& w) {
    const int n = static_cast<int>(a.rows());
    w.resize(n);
    if (n == 0) return;
    int info = 0;
    int lwork = -1, liwork = -1;
    double wkopt = 0;
    int iwkopt = 0;
    dsyevd_("V", "L", &n, a.data(), &n, w.data(), &wkopt, &lwork, &iwkopt, &liwork, &info);
    if (info != 0) throw numeric_error("dsyevd workspace query failed, info=" + std::to_string(info));
    lwork = static_cast<int>(wkopt);
    liwork = iwkopt;
    std::vector<double> work(static_cast<std::size_t>(lwork));
    std::vector<int> iwork(static_cast<std::size_t>(liwork));
    dsyevd_("V", "L", &n, a.data(), &n, w.data(), work.data(), &lwork, iwork.data(), &liwork,
            &info);
    if (info != 0)
        throw numeric_error("dsyevd failed to converge, info=" + std::to_string(info));
}

// Sign convention: the largest-magnitude component of each column is made
// positive, which pins the otherwise arbitrary eigenvector signs.
inline void normalize_column_signs(Eigen::MatrixXd& v) {
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
        double best = 0.0;
        Eigen::Index at = 0;
        for (Eigen::Index r = 0; r < v.rows(); ++r) {
            const double m = std::abs(v(r, c));
            if (m > best) {
                best = m;
                at = r;
            }
        }
        if (v(at, c) < 0) v.col(c) = -v.col(c);
    }
}

}  // namespace detail

inline SpectralDecomposition diagonalize(const BosonOperator& h) {
    if (!h.hermitian) throw contract_error("diagonalize: operator is not flagged Hermitian");
    if (h.hermiticity_defect() > 1e-12)
        throw contract_error("diagonalize: Hermitian flag is set but the matrix is asymmetric");

    SpectralDecomposition out;
    out.tr = h.tr;

    double hmax = 0.0;
    for (int k = 0; k < h.mat.outerSize(); ++k)
        for (SparseReal::InnerIterator it(h.mat, k); it; ++it)
            hmax = std::max(hmax, std::abs(it.value()));
    out.h_max_norm = hmax;

    std::vector<std::vector<int>> groups;
    if (h.parity == ParityAction::preserving) {
        ParityBlocks pb = parity_blocks(h.tr);
        groups = {std::move(pb.even), std::move(pb.odd)};
    } else {
        std::vector<int> all(h.tr.dim());
        std::iota(all.begin(), all.end(), 0);
        groups = {std::move(all)};
    }

    const int dim = static_cast<int>(h.tr.dim());
    std::vector<int> pos(static_cast<std::size_t>(dim), -1);
    for (const std::vector<int>& g : groups) {
        const int bn = static_cast<int>(g.size());
        for (int i = 0; i < bn; ++i) pos[static_cast<std::size_t>(g[i])] = i;

        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(bn, bn);
        for (int col : g)
            for (SparseReal::InnerIterator it(h.mat, col); it; ++it)
                if (pos[static_cast<std::size_t>(it.row())] >= 0)
                    a(pos[static_cast<std::size_t>(it.row())], pos[static_cast<std::size_t>(col)]) =
                        it.value();

        RealVec w;
        detail::symmetric_eig(a, w);
        detail::normalize_column_signs(a);

        // Residual via the sparse matrix, one apply per eigenvector.
        SpectralDecomposition::Block blk{g, std::move(a), std::move(w)};
        RealVec tmp(bn), hv(bn);
        for (int c = 0; c < bn; ++c) {
            tmp = blk.vectors.col(c);
            hv.setZero();
            for (int i = 0; i < bn; ++i) {
                const int gcol = g[static_cast<std::size_t>(i)];
                const double x = tmp[i];
                if (x == 0.0) continue;
                for (SparseReal::InnerIterator it(h.mat, gcol); it; ++it) {
                    const int p = pos[static_cast<std::size_t>(it.row())];
                    if (p >= 0) hv[p] += it.value() * x;
                }
            }
            hv -= blk.eigenvalues[c] * tmp;
            out.residual = std::max(out.residual, hv.norm());
        }
        out.blocks.push_back(std::move(blk));

        for (int i : g) pos[static_cast<std::size_t>(i)] = -1;
    }

    // Merge the block spectra into one ascending order.
    std::vector<SpectralDecomposition::EigenRef> refs;
    refs.reserve(static_cast<std::size_t>(dim));
    for (int b = 0; b < static_cast<int>(out.blocks.size()); ++b)
        for (int c = 0; c < static_cast<int>(out.blocks[static_cast<std::size_t>(b)].idx.size()); ++c)
            refs.push_back({b, c});
    std::stable_sort(refs.begin(), refs.end(),
                     [&](const SpectralDecomposition::EigenRef& x,
                         const SpectralDecomposition::EigenRef& y) {
                         return out.blocks[static_cast<std::size_t>(x.block)].eigenvalues[x.col] <
                                out.blocks[static_cast<std::size_t>(y.block)].eigenvalues[y.col];
                     });
    out.order = std::move(refs);
    out.eigenvalues.resize(dim);
    for (int k = 0; k < dim; ++k) {
        const auto& r = out.order[static_cast<std::size_t>(k)];
        out.eigenvalues[k] = out.blocks[static_cast<std::size_t>(r.block)].eigenvalues[r.col];
    }

    const double bound = 1e-10 * std::max(1.0, out.h_max_norm) * dim;
    if (out.residual > bound)
        throw numeric_error("diagonalize: residual " + std::to_string(out.residual) +
                            " exceeds the contract bound " + std::to_string(bound));
    return out;
}

// exp(-iHt) applied blockwise: V exp(-i Lambda t) V^T psi. Blocks whose
// sub-vector is exactly zero are skipped.
inline CplxVec evolve_raw(const SpectralDecomposition& spec, const CplxVec& psi, double t) {
    CplxVec out = CplxVec::Zero(psi.size());
    for (const SpectralDecomposition::Block& b : spec.blocks) {
        const int bn = static_cast<int>(b.idx.size());
        RealVec re(bn), im(bn);
        bool nonzero = false;
        for (int i = 0; i < bn; ++i) {
            const cplx z = psi[b.idx[static_cast<std::size_t>(i)]];
            re[i] = z.real();
            im[i] = z.imag();
            nonzero = nonzero || (z != 0.0);
        }
        if (!nonzero) continue;

        RealVec cr = b.vectors.transpose() * re;
        RealVec ci = b.vectors.transpose() * im;
        RealVec pr(bn), pi(bn);
        for (int i = 0; i < bn; ++i) {
            const double ph = b.eigenvalues[i] * t;
            const double cs = std::cos(ph), sn = std::sin(ph);
            // (cr + i ci) * exp(-i ph)
            pr[i] = cr[i] * cs + ci[i] * sn;
            pi[i] = ci[i] * cs - cr[i] * sn;
        }
        RealVec outr = b.vectors * pr;
        RealVec outi = b.vectors * pi;
        for (int i = 0; i < bn; ++i)
            out[b.idx[static_cast<std::size_t>(i)]] = cplx(outr[i], outi[i]);
    }
    return out;
}

// Unitary evolution with the norm and leakage contracts enforced.
inline StateVector evolve(const SpectralDecomposition& spec, const StateVector& psi0, double t) {
    if (!(psi0.tr == spec.tr)) throw contract_error("evolve: truncation mismatch");
    CplxVec v = evolve_raw(spec, psi0.amp, t);
    const double n = v.norm();
    if (std::abs(n - 1.0) > 1e-10)
        throw contract_error("evolve: norm drifted to " + std::to_string(n));
    const double leak = leakage(v, spec.tr);
    if (leak > leak_hard_threshold)
        throw truncation_error(t, "evolve: leakage " + std::to_string(leak) +
                                      " above the hard threshold at t=" + std::to_string(t));
    return {std::move(v), spec.tr};
}

// e^{iHt} O e^{-iHt} psi as three matrix-vector stages.
inline CplxVec heisenberg_apply(const SpectralDecomposition& spec, const BosonOperator& op,
                                double t, const CplxVec& psi) {
    return evolve_raw(spec, op.apply(evolve_raw(spec, psi, t)), -t);
}

inline cplx expectation(const BosonOperator& op, const CplxVec& psi) {
    return psi.dot(op.apply(psi));
}

// Ground state of Q = sum_rho Gamma_rho^+ Gamma_rho, the quasiparticle
// number operator assembled from the normal-mode annihilators.
struct QuasiparticleVacuum {
    StateVector state;
    double residual_occupation;
};

inline QuasiparticleVacuum quasiparticle_vacuum(double mu, const Truncation& tr) {
    if (at_ep(mu, ModeSign::plus) || at_ep(mu, ModeSign::minus))
        throw domain_error("quasiparticle_vacuum: undefined at a degeneracy point");

    DpmOperators d = build_dpm_operators(tr);
    const BosonOperator gp = normal_mode_annihilator(normal_mode_form(mu, ModeSign::plus),
                                                     d.d_plus, d.d_plus.transposed());
    const BosonOperator gm = normal_mode_annihilator(normal_mode_form(mu, ModeSign::minus),
                                                     d.d_minus, d.d_minus.transposed());
    BosonOperator q = gp.transposed() * gp + gm.transposed() * gm;
    q.parity = ParityAction::preserving;  // each term is a product of two parity flips
    q = mark_hermitian(std::move(q));

    SpectralDecomposition spec = diagonalize(q);
    const double lam0 = spec.eigenvalues[0];
    if (lam0 > 1e-6)
        throw truncation_error(0.0, "quasiparticle_vacuum: residual occupation " +
                                        std::to_string(lam0) + " indicates an inadequate cutoff");
    CplxVec v = spec.eigenvector(0);
    return {make_state(std::move(v), tr), std::max(lam0, 0.0)};
}

// Expectation series <psi(t)| obs |psi(t)> on a uniform grid. Points after
// the first hard-leakage crossing are withheld; the horizon (last good time)
// and per-point leakage are reported alongside the values.
struct OccupationSeries {
    std::vector<double> t;
    std::vector<double> value;   // truncated at the horizon
    std::vector<double> leak;    // same length as value
    std::optional<double> warn_time;     // first time leakage exceeded the warn level
    std::optional<double> horizon;       // last time below the hard level (none if all good)
};

inline OccupationSeries occupation_series(const SpectralDecomposition& spec,
                                          const StateVector& psi0, const BosonOperator& obs,
                                          const std::vector<double>& times) {
    OccupationSeries out;
    double last_good = 0.0;
    bool truncated = false;
    for (double t : times) {
        CplxVec v = evolve_raw(spec, psi0.amp, t);
        const double leak = leakage(v, spec.tr);
        if (leak > leak_hard_threshold) {
            truncated = true;
            break;
        }
        if (leak > leak_warn_threshold && !out.warn_time) out.warn_time = t;
        const cplx ev = v.dot(obs.apply(v));
        out.t.push_back(t);
        out.value.push_back(ev.real());
        out.leak.push_back(leak);
        last_good = t;
    }
    if (truncated) out.horizon = last_good;
    return out;
}

}  // namespace bkd
