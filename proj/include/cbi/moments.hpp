#pragma once

// Closed-form first moments and the second moment of projections onto left
// eigenvectors of B̃, together with its asymptotic normalizer and limit.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "cbi/errors.hpp"
#include "cbi/model.hpp"
#include "cbi/spectral.hpp"

namespace cbi {

struct SecondMomentBreakdown {
    double total = 0.0;   ///< E|⟨v, X_t⟩|²
    double e_term = 0.0;  ///< |e^{λt}⟨v,x₀⟩ + ⟨v,β̃⟩∫₀ᵗe^{λ(t−u)}du|²
    Vector i_terms;       ///< C_{v,ℓ}·I_{λ,ℓ}(t)
    double nu_term = 0.0; ///< I_λ(t)·∫|⟨v,r⟩|² ν(dr)
    Vector c_coeffs;      ///< C_{v,ℓ} = 2|v_ℓ|²c_ℓ + ∫|⟨v,z⟩|² μ_ℓ(dz)
};

enum class GrowthRegime { below_half, at_half, above_half };

inline const char* to_string(GrowthRegime r) {
    switch (r) {
        case GrowthRegime::below_half: return "below_half";
        case GrowthRegime::at_half: return "at_half";
        case GrowthRegime::above_half: return "above_half";
    }
    return "?";
}

/// lim h(t)·E|⟨v, X_t⟩|² = m2, with h selected by Re λ against s/2.
struct AsymptoticLimit {
    GrowthRegime regime = GrowthRegime::above_half;
    std::string h_description;
    double m2 = 0.0;
    double s = 0.0;
    double re_lambda = 0.0;

    double h(double t) const {
        switch (regime) {
            case GrowthRegime::below_half: return std::exp(-s * t);
            case GrowthRegime::at_half: return std::exp(-s * t) / t;
            case GrowthRegime::above_half: return std::exp(-2.0 * re_lambda * t);
        }
        return 0.0;
    }
};

namespace detail {

/// ∫₀ᵗ e^{uA} b du by composite Simpson, doubling the grid until successive
/// estimates agree to `rel_tol`.
inline Vector exp_integral(const Matrix& A, const Vector& b, double t, double rel_tol = 1e-13) {
    const Eigen::Index d = b.size();
    if (t == 0.0 || b.isZero(0.0)) return Vector::Zero(d);
    auto simpson = [&](std::size_t n) {
        const double h = t / static_cast<double>(n);
        const Matrix step = matrix_exponential(A, h);
        Vector node = b;
        Vector acc = node;
        for (std::size_t k = 1; k <= n; ++k) {
            node = step * node;
            const double w = (k == n) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
            acc += w * node;
        }
        return Vector(acc * (h / 3.0));
    };
    std::size_t n = 16;
    Vector prev = simpson(n);
    for (int it = 0; it < 14; ++it) {
        n *= 2;
        Vector cur = simpson(n);
        const double diff = (cur - prev).norm();
        if (diff <= rel_tol * cur.norm() || diff == 0.0) return cur;
        prev = std::move(cur);
    }
    return prev;
}

/// Means at the n + 1 uniform nodes of [0, t], via the exact semigroup
/// recursion m_{k+1} = e^{hB̃}m_k + ∫₀ʰe^{uB̃}β̃du.
inline std::vector<Vector> mean_path(const MeanParams& mp, const Vector& x0, double t,
                                     std::size_t n) {
    const double h = t / static_cast<double>(n);
    const Matrix step = matrix_exponential(mp.b_tilde, h);
    const Vector inflow = exp_integral(mp.b_tilde, mp.beta_tilde, h);
    std::vector<Vector> out;
    out.reserve(n + 1);
    out.push_back(x0);
    for (std::size_t k = 1; k <= n; ++k) out.push_back(step * out.back() + inflow);
    return out;
}

/// (e^{zt} − 1)/z, continuous through z = 0.
inline Complex expm1_over(Complex z, double t) {
    const Complex zt = z * t;
    if (std::abs(zt) < 0.5) {
        Complex term = t;
        Complex sum = term;
        for (int k = 1; k < 30; ++k) {
            term *= zt / static_cast<double>(k + 1);
            sum += term;
            if (std::abs(term) <= 1e-18 * std::abs(sum)) break;
        }
        return sum;
    }
    return (std::exp(zt) - 1.0) / z;
}

inline const EigenPair& pair_at(const SpectralData& sd, std::size_t index) {
    if (index >= sd.eigen.size())
        throw DomainError("eigenpair index " + std::to_string(index) + " out of range (d = " +
                          std::to_string(sd.eigen.size()) + ")");
    return sd.eigen[index];
}

inline Vector c_coefficients(const ModelParams& p, const CVector& v) {
    Vector c(p.d);
    for (int l = 0; l < p.d; ++l)
        c[l] = 2.0 * std::norm(v[l]) * p.c[l] +
               projected_second_moment(p.mu[static_cast<std::size_t>(l)], v);
    return c;
}

}  // namespace detail

/// E(X_t | X₀ = x) = e^{tB̃}x + ∫₀ᵗ e^{uB̃}β̃ du
inline Vector mean_vector_from(const MeanParams& mp, const Vector& x, double t) {
    if (!(t >= 0.0)) throw DomainError("mean_vector: t must be >= 0");
    return matrix_exponential(mp.b_tilde, t) * x + detail::exp_integral(mp.b_tilde, mp.beta_tilde, t);
}

inline Vector mean_vector(const ModelParams& p, const MeanParams& mp, double t) {
    return mean_vector_from(mp, p.x0, t);
}

/// E|⟨v, X_t⟩|² for the left eigenpair `pair_index` of B̃, split into its
/// addends.
inline SecondMomentBreakdown second_moment_projection(const ModelParams& p,
                                                      const SpectralData& sd,
                                                      std::size_t pair_index, double t) {
    if (!(t >= 0.0)) throw DomainError("second_moment_projection: t must be >= 0");
    const EigenPair& ep = detail::pair_at(sd, pair_index);
    const Complex lam = ep.lambda;
    const CVector& v = ep.v;
    const double a = 2.0 * lam.real();

    SecondMomentBreakdown out;
    out.c_coeffs = detail::c_coefficients(p, v);

    const Complex vx0 = project(v, p.x0);
    const Complex vbeta = project(v, sd.beta_tilde);
    out.e_term = std::norm(std::exp(lam * t) * vx0 + vbeta * detail::expm1_over(lam, t));

    const double i_lambda = (a == 0.0) ? t : std::expm1(a * t) / a;
    out.nu_term = i_lambda * projected_second_moment(p.nu, v);

    // I_{λ,ℓ}(t) = ∫₀ᵗ e^{a(t−u)} E X_{u,ℓ} du by Simpson over the mean path.
    out.i_terms = Vector::Zero(p.d);
    if (t > 0.0 && out.c_coeffs.cwiseAbs().maxCoeff() > 0.0) {
        auto simpson = [&](std::size_t n) {
            const auto means = detail::mean_path(sd, p.x0, t, n);
            const double h = t / static_cast<double>(n);
            Vector acc = Vector::Zero(p.d);
            for (std::size_t k = 0; k <= n; ++k) {
                const double w = (k == 0 || k == n) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
                acc += w * std::exp(a * (t - static_cast<double>(k) * h)) * means[k];
            }
            return Vector(acc * (h / 3.0));
        };
        std::size_t n = 64;
        Vector integrals = simpson(n);
        for (int it = 0; it < 12; ++it) {
            n *= 2;
            Vector next = simpson(n);
            const double diff = (next - integrals).norm();
            integrals = std::move(next);
            if (diff <= 1e-10 * integrals.norm()) break;
        }
        out.i_terms = out.c_coeffs.cwiseProduct(integrals);
    }
    out.total = out.e_term + out.i_terms.sum() + out.nu_term;
    return out;
}

/// Asymptotic normalizer h(t) and limit M₂ of E|⟨v, X_t⟩|² for a
/// supercritical irreducible process.
inline AsymptoticLimit second_moment_limit(const ModelParams& p, const SpectralData& sd,
                                           std::size_t pair_index) {
    if (sd.criticality != Criticality::supercritical)
        throw PreconditionError("second_moment_limit requires a supercritical process (s(B_tilde) > 0)");
    if (!sd.irreducible) throw PreconditionError("second_moment_limit requires irreducible B_tilde");
    const EigenPair& ep = detail::pair_at(sd, pair_index);
    const Complex lam = ep.lambda;
    const CVector& v = ep.v;
    const double s = sd.s;
    const double re = lam.real();

    AsymptoticLimit out;
    out.s = s;
    out.re_lambda = re;
    const Vector c = detail::c_coefficients(p, v);
    const double gap = re - 0.5 * s;
    if (std::abs(gap) <= 1e-12 * std::max(1.0, s))
        out.regime = GrowthRegime::at_half;
    else if (gap < 0.0)
        out.regime = GrowthRegime::below_half;
    else
        out.regime = GrowthRegime::above_half;

    const double perron_mass = sd.u_left.dot(p.x0) + sd.u_left.dot(sd.beta_tilde) / s;
    const double weighted_c = c.dot(sd.u_right);
    switch (out.regime) {
        case GrowthRegime::below_half:
            out.h_description = "exp(-s*t)";
            out.m2 = perron_mass * weighted_c / (s - 2.0 * re);
            break;
        case GrowthRegime::at_half:
            out.h_description = "exp(-s*t)/t";
            out.m2 = perron_mass * weighted_c;
            break;
        case GrowthRegime::above_half: {
            out.h_description = "exp(-2*Re(lambda)*t)";
            const double a = 2.0 * re;
            const Complex head = project(v, p.x0) + project(v, sd.beta_tilde) / lam;
            const Matrix shifted = a * Matrix::Identity(p.d, p.d) - sd.b_tilde;
            const Vector resolvent = shifted.partialPivLu().solve(p.x0 + sd.beta_tilde / a);
            out.m2 = std::norm(head) + projected_second_moment(p.nu, v) / a + c.dot(resolvent);
            break;
        }
    }
    return out;
}

}  // namespace cbi
