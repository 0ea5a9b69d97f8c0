#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "bkd/errors.hpp"

namespace bkd {

using cplx = std::complex<double>;
using RealVec = Eigen::VectorXd;
using CplxVec = Eigen::VectorXcd;
using SparseReal = Eigen::SparseMatrix<double>;

// Probability thresholds on the truncation edge band.
inline constexpr double leak_warn_threshold = 1e-8;
inline constexpr double leak_hard_threshold = 1e-4;

// Cap on a single dense dim x dim matrix (bytes).
inline constexpr std::size_t memory_budget = std::size_t(4) << 30;

// Per-mode occupation cutoff. States |m,n> with 0 <= m,n <= n_max are kept;
// `margin` is the width of the edge band watched by the leakage monitor.
struct Truncation {
    int n_max = 40;
    int margin = 2;

    Truncation() = default;
    explicit Truncation(int nmax, int m = 2) : n_max(nmax), margin(m) { validate(); }

    void validate() const {
        if (n_max < 1)
            throw domain_error("Truncation: n_max must be >= 1, got " + std::to_string(n_max));
        if (margin < 1 || margin >= n_max)
            throw domain_error("Truncation: margin must satisfy 1 <= margin < n_max");
        const std::size_t d = dim();
        if (d * d * sizeof(double) > memory_budget)
            throw resource_error("Truncation: dense matrix at n_max=" + std::to_string(n_max) +
                                 " would exceed the memory budget");
    }

    int local_dim() const { return n_max + 1; }
    std::size_t dim() const { return std::size_t(local_dim()) * std::size_t(local_dim()); }

    // Row-major with mode a outermost: |m,n> sits at m*(n_max+1) + n.
    int index(int m, int n) const { return m * local_dim() + n; }
    int occ_a(int i) const { return i / local_dim(); }
    int occ_b(int i) const { return i % local_dim(); }

    bool operator==(const Truncation&) const = default;
};

// How an operator acts on the (-1)^(m+n) eigenspaces.
enum class ParityAction { preserving, flipping, mixed };

inline ParityAction compose_parity(ParityAction x, ParityAction y) {
    if (x == ParityAction::mixed || y == ParityAction::mixed) return ParityAction::mixed;
    return x == y ? ParityAction::preserving : ParityAction::flipping;
}

// Sparse one- or two-mode operator. Every operator this library builds is
// real in the Fock basis, so the matrix is stored real; complex state
// vectors are handled by applying it to the real and imaginary parts.
struct BosonOperator {
    SparseReal mat;
    bool hermitian = false;
    ParityAction parity = ParityAction::mixed;
    Truncation tr;

    CplxVec apply(const CplxVec& v) const {
        CplxVec out(v.size());
        out.real() = mat * v.real();
        out.imag() = mat * v.imag();
        return out;
    }
    RealVec apply(const RealVec& v) const { return mat * v; }

    BosonOperator transposed() const {
        return {SparseReal(mat.transpose()), hermitian, parity, tr};
    }

    Eigen::MatrixXd dense() const { return Eigen::MatrixXd(mat); }

    // Largest |M - M^T| entry; zero for anything honestly Hermitian here.
    double hermiticity_defect() const {
        SparseReal d = mat - SparseReal(mat.transpose());
        double m = 0.0;
        for (int k = 0; k < d.outerSize(); ++k)
            for (SparseReal::InnerIterator it(d, k); it; ++it)
                m = std::max(m, std::abs(it.value()));
        return m;
    }
};

inline void require_same_space(const BosonOperator& x, const BosonOperator& y) {
    if (!(x.tr == y.tr))
        throw contract_error("operator algebra: mixed truncations");
}

inline BosonOperator operator*(const BosonOperator& x, const BosonOperator& y) {
    require_same_space(x, y);
    return {SparseReal(x.mat * y.mat), false, compose_parity(x.parity, y.parity), x.tr};
}

inline BosonOperator operator+(const BosonOperator& x, const BosonOperator& y) {
    require_same_space(x, y);
    ParityAction p = (x.parity == y.parity) ? x.parity : ParityAction::mixed;
    return {SparseReal(x.mat + y.mat), x.hermitian && y.hermitian, p, x.tr};
}

inline BosonOperator operator-(const BosonOperator& x, const BosonOperator& y) {
    require_same_space(x, y);
    ParityAction p = (x.parity == y.parity) ? x.parity : ParityAction::mixed;
    return {SparseReal(x.mat - y.mat), x.hermitian && y.hermitian, p, x.tr};
}

inline BosonOperator operator*(double s, const BosonOperator& x) {
    return {SparseReal(s * x.mat), x.hermitian, x.parity, x.tr};
}

// Stamps the Hermitian flag after actually checking it (max-norm 1e-12).
inline BosonOperator mark_hermitian(BosonOperator op) {
    if (op.hermiticity_defect() > 1e-12)
        throw contract_error("mark_hermitian: matrix is not symmetric");
    op.hermitian = true;
    return op;
}

struct ModeOperators {
    BosonOperator a, a_dag, b, b_dag, n_a, n_b, parity;
};

// Canonical truncated ladder operators plus number and parity operators.
// a|m,n> = sqrt(m)|m-1,n> holds exactly for every kept m; a_dag drops the
// component that would leave the basis.
inline ModeOperators mode_operators(const Truncation& tr) {
    tr.validate();
    const int ld = tr.local_dim();
    const int dim = static_cast<int>(tr.dim());

    std::vector<Eigen::Triplet<double>> ta, tb, tna, tnb, tpi;
    ta.reserve(std::size_t(tr.n_max) * ld);
    tb.reserve(std::size_t(tr.n_max) * ld);
    for (int m = 0; m <= tr.n_max; ++m) {
        for (int n = 0; n <= tr.n_max; ++n) {
            const int i = tr.index(m, n);
            if (m > 0) ta.emplace_back(tr.index(m - 1, n), i, std::sqrt(double(m)));
            if (n > 0) tb.emplace_back(tr.index(m, n - 1), i, std::sqrt(double(n)));
            if (m > 0) tna.emplace_back(i, i, double(m));
            if (n > 0) tnb.emplace_back(i, i, double(n));
            tpi.emplace_back(i, i, ((m + n) % 2 == 0) ? 1.0 : -1.0);
        }
    }

    auto build = [&](const std::vector<Eigen::Triplet<double>>& t, bool herm, ParityAction p) {
        SparseReal m(dim, dim);
        m.setFromTriplets(t.begin(), t.end());
        m.makeCompressed();
        return BosonOperator{std::move(m), herm, p, tr};
    };

    ModeOperators ops{
        build(ta, false, ParityAction::flipping),
        {}, // a_dag filled below
        build(tb, false, ParityAction::flipping),
        {},
        build(tna, true, ParityAction::preserving),
        build(tnb, true, ParityAction::preserving),
        build(tpi, true, ParityAction::preserving),
    };
    ops.a_dag = ops.a.transposed();
    ops.b_dag = ops.b.transposed();
    return ops;
}

// H = (a^+ + a)(b^+ + b) + mu (n_a + n_b), assembled from the truncated
// ladder operators. The two factors act on different modes, so the product
// of truncated factors equals the truncation of the product.
inline BosonOperator build_dimer_hamiltonian(double mu, const Truncation& tr) {
    if (!std::isfinite(mu)) throw domain_error("build_dimer_hamiltonian: mu must be finite");
    ModeOperators ops = mode_operators(tr);
    BosonOperator xa = ops.a + ops.a_dag;
    BosonOperator xb = ops.b + ops.b_dag;
    BosonOperator h = xa * xb + mu * (ops.n_a + ops.n_b);
    return mark_hermitian(std::move(h));
}

// Pairing-only variant H0 = a^+ b^+ + a b + mu (n_a + n_b).
inline BosonOperator build_pairing_hamiltonian(double mu, const Truncation& tr) {
    if (!std::isfinite(mu)) throw domain_error("build_pairing_hamiltonian: mu must be finite");
    ModeOperators ops = mode_operators(tr);
    BosonOperator h = ops.a_dag * ops.b_dag + ops.a * ops.b + mu * (ops.n_a + ops.n_b);
    return mark_hermitian(std::move(h));
}

struct DpmOperators {
    BosonOperator d_plus, d_minus;
};

// Collective modes d_plus = (a + b)/sqrt(2), d_minus = (a - b)/sqrt(2).
inline DpmOperators build_dpm_operators(const Truncation& tr) {
    ModeOperators ops = mode_operators(tr);
    const double s = 1.0 / std::sqrt(2.0);
    BosonOperator dp = s * (ops.a + ops.b);
    BosonOperator dm = s * (ops.a - ops.b);
    dp.parity = ParityAction::flipping;
    dm.parity = ParityAction::flipping;
    return {std::move(dp), std::move(dm)};
}

// Unit-norm state; constructors enforce the norm contract.
struct StateVector {
    CplxVec amp;
    Truncation tr;

    double norm() const { return amp.norm(); }
};

inline StateVector make_state(CplxVec v, const Truncation& tr) {
    if (v.size() != static_cast<Eigen::Index>(tr.dim()))
        throw contract_error("make_state: amplitude length does not match the truncation");
    const double n = v.norm();
    if (std::abs(n - 1.0) > 1e-10)
        throw contract_error("make_state: norm deviates from 1 by " + std::to_string(n - 1.0));
    return {std::move(v), tr};
}

inline StateVector fock_state(const Truncation& tr, int m, int n) {
    if (m < 0 || n < 0 || m > tr.n_max || n > tr.n_max)
        throw domain_error("fock_state: occupation out of range");
    CplxVec v = CplxVec::Zero(tr.dim());
    v[tr.index(m, n)] = 1.0;
    return {std::move(v), tr};
}

inline StateVector vacuum_state(const Truncation& tr) { return fock_state(tr, 0, 0); }

// The quench initial state (|1,0> + |0,1>)/sqrt(2).
inline StateVector initial_state(const Truncation& tr) {
    CplxVec v = CplxVec::Zero(tr.dim());
    const double s = 1.0 / std::sqrt(2.0);
    v[tr.index(1, 0)] = s;
    v[tr.index(0, 1)] = s;
    return {std::move(v), tr};
}

// Probability sitting within `margin` levels of the cutoff in either mode.
inline double leakage(const CplxVec& amp, const Truncation& tr) {
    const int edge = tr.n_max - tr.margin;
    double p = 0.0;
    for (Eigen::Index i = 0; i < amp.size(); ++i) {
        const int k = static_cast<int>(i);
        if (tr.occ_a(k) >= edge || tr.occ_b(k) >= edge) p += std::norm(amp[i]);
    }
    return p;
}

inline double leakage(const StateVector& s) { return leakage(s.amp, s.tr); }

// Indices of the two (-1)^(m+n) sectors, each ascending.
struct ParityBlocks {
    std::vector<int> even, odd;
};

inline ParityBlocks parity_blocks(const Truncation& tr) {
    ParityBlocks pb;
    const int dim = static_cast<int>(tr.dim());
    pb.even.reserve(dim / 2 + 1);
    pb.odd.reserve(dim / 2 + 1);
    for (int i = 0; i < dim; ++i)
        (((tr.occ_a(i) + tr.occ_b(i)) % 2 == 0) ? pb.even : pb.odd).push_back(i);
    return pb;
}

// Restriction of the pairing Hamiltonian to span{|l,l>}, obtained by honest
// projection of the assembled matrix. Expected shape: tridiagonal with
// diagonal 2*mu*l and off-diagonal l+1 (the tests pin this down).
inline Eigen::MatrixXd chain_projection(double mu, int L, const Truncation& tr) {
    if (L < 0 || L >= tr.n_max)
        throw domain_error("chain_projection: need 0 <= L < n_max");
    BosonOperator h0 = build_pairing_hamiltonian(mu, tr);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(L + 1, L + 1);
    for (int lp = 0; lp <= L; ++lp)
        for (int l = 0; l <= L; ++l)
            out(lp, l) = h0.mat.coeff(tr.index(lp, lp), tr.index(l, l));
    return out;
}

// Text serialization: header "dim nnz", then one "row col re im" line per
// stored entry, rows ascending within ascending columns transposed to
// row-major order. Values use %.17g so parsing round-trips exactly.
inline std::string to_triplet_text(const BosonOperator& op) {
    struct Entry {
        int r, c;
        double v;
    };
    std::vector<Entry> entries;
    entries.reserve(static_cast<std::size_t>(op.mat.nonZeros()));
    for (int k = 0; k < op.mat.outerSize(); ++k)
        for (SparseReal::InnerIterator it(op.mat, k); it; ++it)
            entries.push_back({static_cast<int>(it.row()), static_cast<int>(it.col()), it.value()});
    std::sort(entries.begin(), entries.end(), [](const Entry& x, const Entry& y) {
        return x.r != y.r ? x.r < y.r : x.c < y.c;
    });

    char buf[128];
    std::string out;
    std::snprintf(buf, sizeof(buf), "%d %zu\n", static_cast<int>(op.mat.rows()), entries.size());
    out += buf;
    for (const Entry& e : entries) {
        std::snprintf(buf, sizeof(buf), "%d %d %.17g %.17g\n", e.r, e.c, e.v, 0.0);
        out += buf;
    }
    return out;
}

}  // namespace bkd
