#pragma once

// Mean parameters (B̃, β̃), the matrix exponential, irreducibility, the Perron
// pair and the left eigen-structure of the branching mean matrix exponent.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "cbi/errors.hpp"
#include "cbi/model.hpp"

namespace cbi {

/// B̃ and β̃: b̃_ij = b_ij + ∫(z_i − δ_ij)⁺ μ_j(dz), β̃ = β + ∫ r ν(dr).
struct MeanParams {
    Matrix b_tilde;
    Vector beta_tilde;
};

enum class Criticality { subcritical, critical, supercritical };

inline const char* to_string(Criticality c) {
    switch (c) {
        case Criticality::subcritical: return "subcritical";
        case Criticality::critical: return "critical";
        case Criticality::supercritical: return "supercritical";
    }
    return "?";
}

/// Left eigenpair vᵀB̃ = λvᵀ.
struct EigenPair {
    Complex lambda;
    CVector v;
};

struct SpectralData : MeanParams {
    double s = 0.0;     ///< s(B̃), maximal real part of the spectrum
    Vector u_right;     ///< ũ: right Perron vector, Σũ_i = 1
    Vector u_left;      ///< u: left Perron vector, ũᵀu = 1
    std::vector<EigenPair> eigen;  ///< sorted by descending real part, Perron pair first
    bool irreducible = false;
    Criticality criticality = Criticality::critical;
};

/// Tolerance used by the eigen-solver checks (residuals, defectiveness).
inline constexpr double kEigenTolerance = 1e-10;

inline MeanParams build_mean_params(const ModelParams& p) {
    const int d = p.d;
    MeanParams m;
    m.b_tilde = p.B;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) m.b_tilde(i, j) += truncated_positive(p.mu[j], i, j);
    m.beta_tilde = p.beta + first_moment_vector(p.nu, d);
    return m;
}

// ---------------------------------------------------------------------------
// Matrix exponential: scaling and squaring with the [13/13] Padé approximant.
// ---------------------------------------------------------------------------

inline Matrix matrix_exponential(const Matrix& A, double t = 1.0) {
    if (A.rows() != A.cols()) throw DomainError("matrix_exponential: matrix must be square");
    if (!std::isfinite(t) || !A.allFinite())
        throw DomainError("matrix_exponential: non-finite entries");
    const Eigen::Index n = A.rows();
    const Matrix I = Matrix::Identity(n, n);
    if (t == 0.0) return I;

    Matrix X = A * t;
    const double norm1 = X.cwiseAbs().colwise().sum().maxCoeff();
    if (norm1 == 0.0) return I;

    constexpr double theta13 = 5.371920351148152;
    int squarings = 0;
    if (norm1 > theta13) {
        squarings = std::max(0, static_cast<int>(std::ceil(std::log2(norm1 / theta13))));
        X /= std::ldexp(1.0, squarings);
    }

    static constexpr std::array<double, 14> b{
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0,
        129060195264000.0,   10559470521600.0,    670442572800.0,     33522128640.0,
        1323241920.0,        40840800.0,          960960.0,           16380.0,
        182.0,               1.0};

    const Matrix X2 = X * X;
    const Matrix X4 = X2 * X2;
    const Matrix X6 = X4 * X2;
    const Matrix U = X * (X6 * (b[13] * X6 + b[11] * X4 + b[9] * X2) + b[7] * X6 + b[5] * X4 +
                          b[3] * X2 + b[1] * I);
    const Matrix V = X6 * (b[12] * X6 + b[10] * X4 + b[8] * X2) + b[6] * X6 + b[4] * X4 +
                     b[2] * X2 + b[0] * I;
    Matrix R = (V - U).partialPivLu().solve(V + U);
    for (int k = 0; k < squarings; ++k) R = R * R;
    if (!R.allFinite()) throw DomainError("matrix_exponential: overflow");
    return R;
}

// ---------------------------------------------------------------------------
// Irreducibility and eigen-structure
// ---------------------------------------------------------------------------

/// Strong connectivity of the graph with an edge j → i whenever A(i, j) > 0,
/// i ≠ j. Every 1×1 matrix is irreducible.
inline bool is_irreducible(const Matrix& A) {
    const Eigen::Index d = A.rows();
    if (d <= 1) return true;
    auto reaches_all = [&](bool transpose) {
        std::vector<char> seen(static_cast<std::size_t>(d), 0);
        std::vector<Eigen::Index> stack{0};
        seen[0] = 1;
        Eigen::Index count = 1;
        while (!stack.empty()) {
            const Eigen::Index j = stack.back();
            stack.pop_back();
            for (Eigen::Index i = 0; i < d; ++i) {
                if (i == j || seen[static_cast<std::size_t>(i)]) continue;
                const double w = transpose ? A(j, i) : A(i, j);
                if (w > 0.0) {
                    seen[static_cast<std::size_t>(i)] = 1;
                    ++count;
                    stack.push_back(i);
                }
            }
        }
        return count == d;
    };
    return reaches_all(false) && reaches_all(true);
}

namespace detail {

// Unit Euclidean norm; the first component whose modulus ties the largest
// one is rotated onto the positive real axis.
inline CVector normalize_phase(CVector v) {
    v /= v.norm();
    const double max_mod = v.cwiseAbs().maxCoeff();
    Eigen::Index k = 0;
    while (std::abs(v[k]) < max_mod * (1.0 - 1e-9)) ++k;
    v *= std::conj(v[k]) / std::abs(v[k]);
    v[k] = Complex(std::abs(v[k]), 0.0);
    return v;
}

inline void sort_pairs(std::vector<EigenPair>& pairs) {
    std::stable_sort(pairs.begin(), pairs.end(), [](const EigenPair& a, const EigenPair& b) {
        if (a.lambda.real() != b.lambda.real()) return a.lambda.real() > b.lambda.real();
        return a.lambda.imag() > b.lambda.imag();
    });
}

}  // namespace detail

/// All d left eigenpairs of an irreducible, diagonalizable B̃, sorted by
/// descending real part (Perron pair first). Each v has unit norm with the
/// phase convention of detail::normalize_phase; the Perron v is real positive.
inline std::vector<EigenPair> left_eigenpairs(const Matrix& b_tilde) {
    const Eigen::Index d = b_tilde.rows();
    if (!b_tilde.allFinite()) throw DomainError("left_eigenpairs: non-finite entries");
    if (!is_irreducible(b_tilde)) throw PreconditionError("B_tilde is not irreducible");

    Eigen::EigenSolver<Matrix> es(b_tilde.transpose());
    if (es.info() != Eigen::Success) throw NumericalError("eigen-solver did not converge");

    std::vector<EigenPair> pairs;
    pairs.reserve(static_cast<std::size_t>(d));
    for (Eigen::Index k = 0; k < d; ++k)
        pairs.push_back({es.eigenvalues()[k], detail::normalize_phase(es.eigenvectors().col(k))});
    detail::sort_pairs(pairs);

    // A Jordan block perturbed by rounding splits into eigenvectors whose
    // angle is O(sqrt(eps)), so the eigenvector basis is tested at
    // sqrt(tolerance).
    CMatrix basis(d, d);
    for (Eigen::Index k = 0; k < d; ++k) basis.col(k) = pairs[static_cast<std::size_t>(k)].v;
    const Eigen::JacobiSVD<CMatrix> svd(basis);
    const auto& sv = svd.singularValues();
    if (sv[d - 1] <= std::sqrt(kEigenTolerance) * sv[0])
        throw NumericalError("defective spectrum: B_tilde is not diagonalizable");

    const double scale = std::max(1.0, b_tilde.norm());
    const CMatrix bc = b_tilde.cast<Complex>();
    for (const auto& p : pairs) {
        const double residual = (p.v.transpose() * bc - p.lambda * p.v.transpose()).norm();
        if (residual > 1e-8 * scale)
            throw NumericalError("eigenpair residual " + std::to_string(residual) +
                                 " exceeds tolerance");
    }

    // Perron eigenvalue is real and simple for irreducible B̃.
    auto& perron = pairs.front();
    perron.lambda = Complex(perron.lambda.real(), 0.0);
    perron.v = CVector(perron.v.real().cast<Complex>());
    perron.v /= perron.v.norm();
    return pairs;
}

/// Perron triple, criticality class and the full left eigen-list of an
/// irreducible B̃.
inline SpectralData perron_and_classify(const Matrix& b_tilde, const Vector& beta_tilde) {
    if (b_tilde.rows() != b_tilde.cols() || beta_tilde.size() != b_tilde.rows())
        throw DomainError("perron_and_classify: dimension mismatch");
    const Eigen::Index d = b_tilde.rows();
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j)
            if (i != j && b_tilde(i, j) < 0.0)
                throw PreconditionError("B_tilde must have non-negative off-diagonal entries");
    if (!is_irreducible(b_tilde)) throw PreconditionError("B_tilde is not irreducible");

    SpectralData sd;
    sd.b_tilde = b_tilde;
    sd.beta_tilde = beta_tilde;
    sd.irreducible = true;
    sd.eigen = left_eigenpairs(b_tilde);
    sd.s = sd.eigen.front().lambda.real();

    if (d > 1 && std::abs(sd.eigen[1].lambda.real() - sd.s) <= kEigenTolerance * std::max(1.0, std::abs(sd.s)))
        throw NumericalError("Perron eigenvalue is not strictly dominant");

    Eigen::EigenSolver<Matrix> es(b_tilde);
    if (es.info() != Eigen::Success) throw NumericalError("eigen-solver did not converge");
    Eigen::Index k_max = 0;
    for (Eigen::Index k = 1; k < d; ++k)
        if (es.eigenvalues()[k].real() > es.eigenvalues()[k_max].real()) k_max = k;
    Vector right = es.eigenvectors().col(k_max).real();
    right /= right.sum();
    Vector left = sd.eigen.front().v.real();
    left /= right.dot(left);
    if ((right.array() <= 0.0).any() || (left.array() <= 0.0).any())
        throw NumericalError("Perron vectors are not strictly positive");
    sd.u_right = right;
    sd.u_left = left;

    const double zero_band = 1e-12 * std::max(1.0, b_tilde.norm());
    if (sd.s > zero_band)
        sd.criticality = Criticality::supercritical;
    else if (sd.s < -zero_band)
        sd.criticality = Criticality::subcritical;
    else
        sd.criticality = Criticality::critical;
    return sd;
}

inline SpectralData spectral_data(const ModelParams& p) {
    const MeanParams m = build_mean_params(p);
    return perron_and_classify(m.b_tilde, m.beta_tilde);
}

}  // namespace cbi
