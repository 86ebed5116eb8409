#pragma once

// Branching and immigration mechanisms, the Riccati flow v(t, λ) with its
// ψ-integral, the Laplace transform of the transition semigroup, and the flow
// and decomposition identities as measurable defects.

#include <cmath>
#include <cstddef>
#include <string>

#include "cbi/errors.hpp"
#include "cbi/model.hpp"

namespace cbi {

struct OdeConfig {
    double step = 1e-3;      ///< fixed RK4 step (rounded down so the grid is even and uniform)
    bool self_check = true;  ///< re-solve at half step and require agreement
};

/// Composite Simpson on the RK grid is the only quadrature rule.
struct FlowResult {
    Vector v_t;                      ///< v(t, λ)
    double psi_integral = 0.0;       ///< ∫₀ᵗ ψ(v(s, λ)) ds
    double grid_step = 0.0;          ///< uniform step actually used
    std::size_t grid_intervals = 0;  ///< even number of steps (0 when t = 0)
};

/// Agreement required between a solve and its step-halved rerun.
inline constexpr double kFlowSelfCheckTolerance = 1e-8;
/// Undershoot below zero that is treated as rounding and clamped.
inline constexpr double kConeClamp = 1e-12;

namespace detail {

inline void require_cone(const Vector& lam, const char* what) {
    for (Eigen::Index i = 0; i < lam.size(); ++i)
        if (!(lam[i] >= 0.0) || !std::isfinite(lam[i]))
            throw DomainError(std::string(what) + ": argument must lie in R_+^d");
}

inline Vector phi_unchecked(const ModelParams& p, const Vector& lam) {
    Vector out = p.c.cwiseProduct(lam.cwiseAbs2()) - p.B.transpose() * lam;
    for (int i = 0; i < p.d; ++i) {
        double jumps = 0.0;
        for (const auto& a : p.mu[static_cast<std::size_t>(i)].atoms) {
            const double x = lam.dot(a.jump);
            jumps += a.rate * (std::expm1(-x) + lam[i] * std::min(1.0, a.jump[i]));
        }
        out[i] += jumps;
    }
    return out;
}

inline double psi_unchecked(const ModelParams& p, const Vector& lam) {
    double s = p.beta.dot(lam);
    for (const auto& a : p.nu.atoms) s -= a.rate * std::expm1(-lam.dot(a.jump));
    return s;
}

inline FlowResult integrate_flow(const ModelParams& p, const Vector& lam, double t, double step) {
    FlowResult r;
    r.v_t = lam;
    if (t == 0.0) return r;

    std::size_t n = static_cast<std::size_t>(std::ceil(t / step - 1e-9));
    n = std::max<std::size_t>(n, 2);
    if (n % 2 == 1) ++n;
    const double h = t / static_cast<double>(n);
    r.grid_step = h;
    r.grid_intervals = n;

    Vector v = lam;
    double simpson = psi_unchecked(p, v);
    for (std::size_t k = 1; k <= n; ++k) {
        const Vector k1 = -phi_unchecked(p, v);
        const Vector k2 = -phi_unchecked(p, v + 0.5 * h * k1);
        const Vector k3 = -phi_unchecked(p, v + 0.5 * h * k2);
        const Vector k4 = -phi_unchecked(p, v + h * k3);
        v += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            if (!std::isfinite(v[i]))
                throw NumericalError("Riccati flow blew up at step " + std::to_string(k));
            if (v[i] < 0.0) {
                if (v[i] < -kConeClamp)
                    throw NumericalError("flow left the cone at step " + std::to_string(k));
                v[i] = 0.0;
            }
        }
        const double w = (k == n) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
        simpson += w * psi_unchecked(p, v);
    }
    r.v_t = v;
    r.psi_integral = std::max(0.0, simpson * h / 3.0);
    return r;
}

}  // namespace detail

/// φ(λ)_i = c_i λ_i² − ⟨Be_i, λ⟩ + ∫(e^{−⟨λ,z⟩} − 1 + λ_i(1 ∧ z_i)) μ_i(dz)
inline Vector branching_mechanism(const ModelParams& p, const Vector& lam) {
    detail::require_cone(lam, "branching_mechanism");
    return detail::phi_unchecked(p, lam);
}

/// ψ(λ) = ⟨β, λ⟩ + ∫(1 − e^{−⟨λ,r⟩}) ν(dr)
inline double immigration_mechanism(const ModelParams& p, const Vector& lam) {
    detail::require_cone(lam, "immigration_mechanism");
    return detail::psi_unchecked(p, lam);
}

/// Solves ∂_t v = −φ(v), v(0) = λ with classical RK4 and integrates ψ(v) by
/// composite Simpson on the same grid.
inline FlowResult solve_v(const ModelParams& p, const Vector& lam, double t,
                          const OdeConfig& cfg = {}) {
    detail::require_cone(lam, "solve_v");
    if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError("solve_v: horizon must be >= 0");
    if (!(cfg.step > 0.0)) throw DomainError("solve_v: step must be positive");

    FlowResult r = detail::integrate_flow(p, lam, t, cfg.step);
    if (cfg.self_check && t > 0.0) {
        const FlowResult half = detail::integrate_flow(p, lam, t, cfg.step / 2.0);
        const double dv = (half.v_t - r.v_t).norm();
        const double dpsi = std::abs(half.psi_integral - r.psi_integral);
        if (dv > kFlowSelfCheckTolerance * r.v_t.norm() + 1e-14 ||
            dpsi > kFlowSelfCheckTolerance * r.psi_integral + 1e-14)
            throw NumericalError("Riccati step-halving self-check failed (dv=" +
                                 std::to_string(dv) + ", dpsi=" + std::to_string(dpsi) + ")");
    }
    return r;
}

/// E_x exp(−⟨λ, X_t⟩) = exp(−⟨x, v(t,λ)⟩ − ∫₀ᵗ ψ(v(s,λ)) ds)
inline double laplace_transform(const ModelParams& p, const Vector& x, const Vector& lam,
                                double t, const OdeConfig& cfg = {}) {
    detail::require_cone(x, "laplace_transform");
    const FlowResult r = solve_v(p, lam, t, cfg);
    return std::exp(-x.dot(r.v_t) - r.psi_integral);
}

/// ‖v(r, v(s, λ)) − v(r + s, λ)‖
inline double flow_defect(const ModelParams& p, const Vector& lam, double r, double s,
                          const OdeConfig& cfg = {}) {
    const Vector inner = solve_v(p, lam, s, cfg).v_t;
    const Vector composed = solve_v(p, inner, r, cfg).v_t;
    const Vector direct = solve_v(p, lam, r + s, cfg).v_t;
    return (composed - direct).norm();
}

/// Relative gap in exp(−∫₀ᵗψ(v(s,λ))ds)·L(x, T, v(t,λ)) = L(x, t+T, λ), where
/// L is the Laplace transform of the full model.
inline double decomposition_defect(const ModelParams& p, const Vector& x, const Vector& lam,
                                   double t, double T, const OdeConfig& cfg = {}) {
    if (!(T >= 0.0)) throw DomainError("decomposition_defect: T must be >= 0");
    const FlowResult head = solve_v(p, lam, t, cfg);
    const double lhs = std::exp(-head.psi_integral) * laplace_transform(p, x, head.v_t, T, cfg);
    const double rhs = laplace_transform(p, x, lam, t + T, cfg);
    return std::abs(lhs - rhs) / rhs;
}

}  // namespace cbi
