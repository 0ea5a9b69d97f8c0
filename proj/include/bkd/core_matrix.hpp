#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bkd/errors.hpp"
#include "bkd/fock.hpp"

namespace bkd {

// Which collective mode a statement is about: d_plus or d_minus.
enum class ModeSign : int { plus = +1, minus = -1 };

inline int sign_of(ModeSign s) { return static_cast<int>(s); }
inline const char* mode_name(ModeSign s) { return s == ModeSign::plus ? "+" : "-"; }

// Tolerance for recognizing the exact degeneracy points; the locus values
// are small integers, so an absolute comparison is appropriate.
inline constexpr double ep_tolerance = 1e-12;

// Parameter points where a core matrix becomes defective.
inline std::array<std::pair<double, ModeSign>, 4> ep_locus() {
    return {{{0.0, ModeSign::plus},
             {0.0, ModeSign::minus},
             {-2.0, ModeSign::plus},
             {2.0, ModeSign::minus}}};
}

inline bool at_ep(double mu, ModeSign rho) {
    for (const auto& [p, r] : ep_locus())
        if (r == rho && std::abs(mu - p) < ep_tolerance) return true;
    return false;
}

// 2x2 generator of the single-mode dynamics in the (d, d^+) doubled space.
struct CoreMatrix {
    double mu;
    ModeSign rho;
    Eigen::Matrix2d entries;
};

inline CoreMatrix core_matrix(double mu, ModeSign rho) {
    if (!std::isfinite(mu)) throw domain_error("core_matrix: mu must be finite");
    const double r = sign_of(rho);
    Eigen::Matrix2d m;
    m << (mu + r) / 2.0, r / 2.0,
         -r / 2.0, -(mu + r) / 2.0;
    return {mu, rho, m};
}

// Eigen-system of a core matrix. `coalescence` is the sine of the angle
// between the two eigen-rays: 0 exactly at a defective point, 1 when the
// eigenvectors are orthogonal. `overlap` keeps the raw |<phi1, phi2>|.
struct CoreEigenSystem {
    std::array<cplx, 2> lambda;
    Eigen::Vector2cd phi1, phi2;
    double coalescence;
    double overlap;
};

namespace detail {

// Eigenvector of [[A,B],[-B,-A]] for eigenvalue lam: (B, lam - A). The first
// component B = rho/2 never vanishes, so this is always a valid eigenvector.
// Phase fixed: first component real positive after normalization.
inline Eigen::Vector2cd core_eigenvector(double A, double B, cplx lam) {
    Eigen::Vector2cd v;
    v << cplx(B, 0.0), lam - A;
    v /= v.norm();
    if (v[0].real() < 0) v = -v;
    return v;
}

}  // namespace detail

inline CoreEigenSystem core_spectrum(double mu, ModeSign rho) {
    const CoreMatrix cm = core_matrix(mu, rho);
    const double A = cm.entries(0, 0);
    const double B = cm.entries(0, 1);
    const double disc = mu * mu + 2.0 * sign_of(rho) * mu;  // equals 4(A^2 - B^2)

    // lambda = -/+ sqrt(disc)/2, imaginary when disc < 0.
    cplx s = 0.5 * std::sqrt(cplx(disc, 0.0));
    CoreEigenSystem out;
    out.lambda = {-s, s};
    out.phi1 = detail::core_eigenvector(A, B, out.lambda[0]);
    out.phi2 = detail::core_eigenvector(A, B, out.lambda[1]);
    out.overlap = std::abs(out.phi1.dot(out.phi2));
    out.coalescence = std::sqrt(std::max(0.0, 1.0 - out.overlap * out.overlap));
    return out;
}

// Equivalent-oscillator character of one collective mode.
enum class OscKind { elliptic, hyperbolic, parabolic };

inline const char* kind_name(OscKind k) {
    switch (k) {
        case OscKind::elliptic: return "HO";
        case OscKind::hyperbolic: return "IHO";
        default: return "EP";
    }
}

// Joint character of the two modes at a given mu. Boundaries are flagged at
// exactly the degeneracy locus {-2, 0, 2}.
struct PhaseRegion {
    OscKind kind_plus;
    OscKind kind_minus;
    bool boundary;
};

inline OscKind mode_kind(double mu, ModeSign rho) {
    if (at_ep(mu, rho)) return OscKind::parabolic;
    const double disc = mu * mu + 2.0 * sign_of(rho) * mu;
    return disc > 0 ? OscKind::elliptic : OscKind::hyperbolic;
}

inline PhaseRegion classify(double mu) {
    if (!std::isfinite(mu)) throw domain_error("classify: mu must be finite");
    PhaseRegion r{mode_kind(mu, ModeSign::plus), mode_kind(mu, ModeSign::minus),
                  at_ep(mu, ModeSign::plus) || at_ep(mu, ModeSign::minus)};
    return r;
}

inline std::string region_name(const PhaseRegion& r) {
    if (r.boundary) return "EP";
    return std::string(kind_name(r.kind_plus)) + "(+)x" + kind_name(r.kind_minus) + "(-)";
}

// Single-mode normal form H_rho = alpha d^+d + (beta/2)(d^+^2 + d^2) + offset
// with alpha = mu + rho, beta = rho, offset = rho/2.
//   elliptic   (alpha^2 > beta^2): frequency omega = sqrt(alpha^2 - beta^2),
//                                  Bogoliubov parameter tanh(2r) = -beta/alpha
//   hyperbolic (alpha^2 < beta^2): rate c = sqrt(beta^2 - alpha^2)
//   parabolic  (alpha^2 = beta^2): the degeneracy points
struct NormalModeForm {
    ModeSign rho;
    double alpha;
    double beta;
    double offset;
    OscKind kind;
    double omega = 0.0;  // elliptic only
    double c = 0.0;      // hyperbolic only
    double r = 0.0;      // elliptic only
};

inline NormalModeForm normal_mode_form(double mu, ModeSign rho) {
    if (!std::isfinite(mu)) throw domain_error("normal_mode_form: mu must be finite");
    NormalModeForm f;
    f.rho = rho;
    f.alpha = mu + sign_of(rho);
    f.beta = sign_of(rho);
    f.offset = sign_of(rho) / 2.0;
    f.kind = mode_kind(mu, rho);
    const double disc = f.alpha * f.alpha - f.beta * f.beta;
    if (f.kind == OscKind::elliptic) {
        f.omega = std::sqrt(disc);
        f.r = 0.5 * std::atanh(-f.beta / f.alpha);
    } else if (f.kind == OscKind::hyperbolic) {
        f.c = std::sqrt(-disc);
    }
    return f;
}

// The mode quantum under the halved-frequency convention that floats around
// for this model. Level-spacing data (acceptance suite) selects the full
// quantum; this accessor exists so both conventions stay inspectable.
inline double half_convention_quantum(const NormalModeForm& f) {
    return 0.5 * (f.kind == OscKind::hyperbolic ? f.c : f.omega);
}

// Squeeze parameter x of the hyperbolic normal operator, tanh(2x) = alpha/beta.
inline double hyperbolic_squeeze(const NormalModeForm& f) {
    if (f.kind != OscKind::hyperbolic)
        throw domain_error("hyperbolic_squeeze: mode is not hyperbolic");
    return 0.5 * std::atanh(f.alpha / f.beta);
}

// Annihilator of the normal mode as a truncated matrix:
//   elliptic:   gamma = cosh(r) d - sinh(r) d^+   ([gamma, H] = omega gamma)
//   hyperbolic: A     = cosh(x) d + sinh(x) d^+   with tanh(2x) = alpha/beta
inline BosonOperator normal_mode_annihilator(const NormalModeForm& f, const BosonOperator& d,
                                             const BosonOperator& d_dag) {
    if (f.kind == OscKind::parabolic)
        throw domain_error("normal_mode_annihilator: undefined at a degeneracy point");
    if (f.kind == OscKind::elliptic)
        return std::cosh(f.r) * d - std::sinh(f.r) * d_dag;
    const double x = hyperbolic_squeeze(f);
    return std::cosh(x) * d + std::sinh(x) * d_dag;
}

// Heisenberg response of one collective mode: d_rho(t) = u(t) d + v(t) d^+.
// Closed forms per kind; |u|^2 - |v|^2 = 1 always.
struct ModeResponse {
    cplx u, v;
};

inline ModeResponse mode_response(double mu, ModeSign rho, double t) {
    const NormalModeForm f = normal_mode_form(mu, rho);
    const cplx I(0.0, 1.0);
    if (f.kind == OscKind::elliptic) {
        const double w = f.omega;
        return {std::cos(w * t) - I * (f.alpha / w) * std::sin(w * t),
                -I * (f.beta / w) * std::sin(w * t)};
    }
    if (f.kind == OscKind::hyperbolic) {
        const double c = f.c;
        return {std::cosh(c * t) - I * (f.alpha / c) * std::sinh(c * t),
                -I * (f.beta / c) * std::sinh(c * t)};
    }
    return {1.0 - I * f.alpha * t, -I * f.beta * t};
}

// Mean occupation sinh^2(sqrt(2|mu| - mu^2) t) of the unstable mode,
// algebraically equal to 1/(|tanh(sqrt(2|mu|-mu^2) t)|^-2 - 1); the tests
// confirm that identity numerically.
inline double analytic_occupation(double mu, double t) {
    const double am = std::abs(mu);
    if (!(am > 0.0 && am < 2.0))
        throw domain_error("analytic_occupation: need 0 < |mu| < 2");
    if (t < 0) throw domain_error("analytic_occupation: need t >= 0");
    const double c = std::sqrt(2.0 * am - mu * mu);
    const double s = std::sinh(c * t);
    return s * s;
}

// Asymptotic exponential rate of analytic_occupation.
inline double growth_rate(double mu) {
    const double am = std::abs(mu);
    if (!(am > 0.0 && am < 2.0))
        throw domain_error("growth_rate: need 0 < |mu| < 2");
    return 2.0 * std::sqrt(2.0 * am - mu * mu);
}

// One row of the exportable phase table.
struct PhaseRow {
    double mu;
    std::string region;
    double rate_plus;    // omega or c of the plus mode (0 at a boundary)
    double rate_minus;
    std::string kind_plus;
    std::string kind_minus;
};

inline std::vector<PhaseRow> build_phase_table(const std::vector<double>& mus) {
    std::vector<PhaseRow> rows;
    rows.reserve(mus.size());
    for (double mu : mus) {
        const PhaseRegion pr = classify(mu);
        const NormalModeForm fp = normal_mode_form(mu, ModeSign::plus);
        const NormalModeForm fm = normal_mode_form(mu, ModeSign::minus);
        rows.push_back({mu, region_name(pr),
                        fp.kind == OscKind::hyperbolic ? fp.c : fp.omega,
                        fm.kind == OscKind::hyperbolic ? fm.c : fm.omega,
                        kind_name(pr.kind_plus), kind_name(pr.kind_minus)});
    }
    return rows;
}

// Largest normal-mode rate at this mu; the time-grid sampling bound uses it.
inline double dominant_frequency(double mu) {
    double w = 0.0;
    for (ModeSign rho : {ModeSign::plus, ModeSign::minus}) {
        const NormalModeForm f = normal_mode_form(mu, rho);
        w = std::max(w, f.kind == OscKind::hyperbolic ? f.c : f.omega);
    }
    return w;
}

}  // namespace bkd
