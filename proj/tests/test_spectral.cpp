#include <catch_amalgamated.hpp>

#include "cbi/spectral.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <cmath>
#include <random>

using namespace cbi;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Matrix swap2() {
    Matrix m(2, 2);
    m << 0, 1, 1, 0;
    return m;
}

// Frozen from the long-double Taylor oracle.
Matrix r3_exp1() {
    Matrix m(2, 2);
    m << 0.61404812466369885, 0.28654393366783265, 0.3581799170847908, 0.93641005004001054;
    return m;
}

double rel_err(const Matrix& a, const Matrix& b) { return (a - b).norm() / b.norm(); }

}  // namespace

TEST_CASE("mean parameters of the reference models", "[spectral]") {
    const MeanParams m3 = build_mean_params(test::model("R3"));
    CHECK((m3.b_tilde - oracle::r3_b_tilde()).norm() <= 1e-15);
    CHECK((m3.beta_tilde - oracle::r3_beta_tilde()).norm() <= 1e-15);

    const MeanParams m2 = build_mean_params(test::model("R2"));
    CHECK(m2.b_tilde(0, 0) == 1.0);
    CHECK(m2.beta_tilde[0] == 1.0);

    ModelParams p = test::linear_1d(0.5, 0.0, 1.0);
    p.mu[0].atoms.push_back({0.3, Vector::Constant(1, 2.0)});
    CHECK_THAT(build_mean_params(p).b_tilde(0, 0), WithinAbs(0.8, 1e-15));
}

TEST_CASE("off-diagonal entries of the mean matrix dominate B", "[spectral]") {
    const ModelParams p = test::model("R3");
    const MeanParams m = build_mean_params(p);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            if (i != j) CHECK(m.b_tilde(i, j) >= p.B(i, j));
}

TEST_CASE("matrix exponential closed forms", "[spectral]") {
    const Matrix e = matrix_exponential(swap2(), 1.0);
    CHECK_THAT(e(0, 0), WithinRel(std::cosh(1.0), 1e-14));
    CHECK_THAT(e(0, 1), WithinRel(std::sinh(1.0), 1e-14));
    CHECK_THAT(e(1, 0), WithinRel(std::sinh(1.0), 1e-14));
    CHECK_THAT(e(1, 1), WithinRel(std::cosh(1.0), 1e-14));

    const Matrix r = oracle::r3_b_tilde();
    CHECK(matrix_exponential(r, 0.0) == Matrix::Identity(2, 2));
    CHECK(matrix_exponential(Matrix::Zero(3, 3), 2.0) == Matrix::Identity(3, 3));
}

TEST_CASE("matrix exponential of the R3 mean matrix against the series oracle", "[spectral]") {
    const Matrix got = matrix_exponential(oracle::r3_b_tilde(), 1.0);
    CHECK(rel_err(got, r3_exp1()) <= 1e-12);
    CHECK(rel_err(oracle::expm(oracle::r3_b_tilde(), 1.0), r3_exp1()) <= 1e-15);
}

TEST_CASE("matrix exponential against the series oracle on random matrices", "[spectral]") {
    std::mt19937_64 gen(11);
    std::normal_distribution<double> N;
    for (int trial = 0; trial < 30; ++trial) {
        const int d = 1 + trial % 5;
        const double scale = (trial % 3 == 0) ? 8.0 : 1.0;
        Matrix A = Matrix::NullaryExpr(d, d, [&] { return scale * N(gen); });
        const Matrix ref = oracle::expm(A, 1.0);
        INFO("trial " << trial);
        CHECK(rel_err(matrix_exponential(A), ref) <= (scale > 1.0 ? 1e-11 : 1e-13));
    }
}

TEST_CASE("matrix exponential rejects non-finite input", "[spectral]") {
    Matrix A = swap2();
    A(0, 0) = std::nan("");
    CHECK_THROWS_AS(matrix_exponential(A), DomainError);
    CHECK_THROWS_AS(matrix_exponential(swap2(), std::numeric_limits<double>::infinity()), DomainError);
}

TEST_CASE("matrix exponential semigroup", "[spectral]") {
    std::mt19937_64 gen(3);
    std::normal_distribution<double> N(0.0, 0.5);
    std::uniform_real_distribution<double> U(0.0, 2.0);
    for (int trial = 0; trial < 40; ++trial) {
        const int d = 1 + trial % 4;
        const Matrix A = Matrix::NullaryExpr(d, d, [&] { return N(gen); });
        const double s = U(gen);
        const double t = U(gen);
        const Matrix lhs = matrix_exponential(A, s) * matrix_exponential(A, t);
        const Matrix rhs = matrix_exponential(A, s + t);
        CHECK((lhs - rhs).norm() <= 1e-8 * rhs.norm());
    }
}

TEST_CASE("irreducibility is graph strong connectivity", "[spectral]") {
    CHECK(is_irreducible(swap2()));
    CHECK(is_irreducible(Matrix::Constant(1, 1, -3.0)));
    CHECK_FALSE(is_irreducible(Matrix::Identity(2, 2)));
    Matrix tri(2, 2);
    tri << 1, 1, 0, 1;
    CHECK_FALSE(is_irreducible(tri));
    Matrix cycle = Matrix::Zero(3, 3);
    cycle(1, 0) = cycle(2, 1) = cycle(0, 2) = 0.5;
    CHECK(is_irreducible(cycle));
    cycle(0, 2) = 0.0;
    CHECK_FALSE(is_irreducible(cycle));
}

TEST_CASE("Perron data of the swap matrix", "[spectral]") {
    const SpectralData sd = perron_and_classify(swap2(), Vector::Zero(2));
    CHECK_THAT(sd.s, WithinAbs(1.0, 1e-14));
    CHECK_THAT(sd.u_right[0], WithinAbs(0.5, 1e-14));
    CHECK_THAT(sd.u_right[1], WithinAbs(0.5, 1e-14));
    CHECK_THAT(sd.u_left[0], WithinAbs(1.0, 1e-14));
    CHECK_THAT(sd.u_left[1], WithinAbs(1.0, 1e-14));
    CHECK(sd.criticality == Criticality::supercritical);
    CHECK(sd.irreducible);
}

TEST_CASE("left eigenpairs of the swap matrix", "[spectral]") {
    const auto pairs = left_eigenpairs(swap2());
    REQUIRE(pairs.size() == 2);
    const double r = 1.0 / std::sqrt(2.0);
    CHECK_THAT(pairs[0].lambda.real(), WithinAbs(1.0, 1e-14));
    CHECK_THAT(pairs[1].lambda.real(), WithinAbs(-1.0, 1e-14));
    CHECK(std::abs(pairs[0].v[0] - Complex(r)) <= 1e-14);
    CHECK(std::abs(pairs[0].v[1] - Complex(r)) <= 1e-14);
    CHECK(std::abs(pairs[1].v[0] - Complex(r)) <= 1e-14);
    CHECK(std::abs(pairs[1].v[1] - Complex(-r)) <= 1e-14);
}

TEST_CASE("one-dimensional eigen-list", "[spectral]") {
    const auto pairs = left_eigenpairs(Matrix::Constant(1, 1, 1.0));
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].lambda == Complex(1.0));
    CHECK(pairs[0].v[0] == Complex(1.0));
}

TEST_CASE("R3 spectrum against the quadratic formula", "[spectral]") {
    const auto [l1, l2] = oracle::eigenvalues_2x2(oracle::r3_b_tilde());
    CHECK_THAT(l1, WithinRel((-0.75 + std::sqrt(1.0025)) / 2.0, 1e-14));
    const SpectralData sd = spectral_data(test::model("R3"));
    CHECK_THAT(sd.s, WithinRel(l1, 1e-12));
    CHECK_THAT(sd.s, WithinAbs(0.12562, 1e-5));
    REQUIRE(sd.eigen.size() == 2);
    CHECK_THAT(sd.eigen[1].lambda.real(), WithinRel(l2, 1e-12));
    CHECK(sd.eigen[1].lambda.imag() == 0.0);
    CHECK(sd.criticality == Criticality::supercritical);

    // v₂ spans the same line as the hand-solved null vector
    const Eigen::Vector2d ref = oracle::left_null_2x2(oracle::r3_b_tilde(), l2).normalized();
    const CVector& v2 = sd.eigen[1].v;
    CHECK(std::abs(std::abs(v2[0].real() * ref[0] + v2[1].real() * ref[1]) - 1.0) <= 1e-12);
    CHECK(std::abs(project(v2, sd.u_right)) <= 1e-8);

    const Eigen::Vector2d perron = oracle::left_null_2x2(oracle::r3_b_tilde(), l1);
    CHECK_THAT(sd.u_left[1] / sd.u_left[0], WithinRel(perron[1] / perron[0], 1e-12));
}

TEST_CASE("subcritical classification", "[spectral]") {
    Matrix m(2, 2);
    m << -1, 0.1, 0.1, -1;
    const SpectralData sd = perron_and_classify(m, Vector::Zero(2));
    CHECK_THAT(sd.s, WithinAbs(-0.9, 1e-14));
    CHECK(sd.criticality == Criticality::subcritical);
}

TEST_CASE("critical classification", "[spectral]") {
    Matrix m(2, 2);
    m << -1, 1, 1, -1;
    const SpectralData sd = perron_and_classify(m, Vector::Zero(2));
    CHECK(sd.criticality == Criticality::critical);
}

TEST_CASE("reducible mean matrix is rejected", "[spectral]") {
    CHECK_THROWS_AS(perron_and_classify(Matrix::Identity(2, 2), Vector::Zero(2)), PreconditionError);
    CHECK_THROWS_WITH(left_eigenpairs(Matrix::Identity(2, 2)),
                      Catch::Matchers::ContainsSubstring("not irreducible"));
}

TEST_CASE("defective spectrum is rejected", "[spectral]") {
    // companion matrix of (λ − 1)(λ + 1)²
    Matrix m(3, 3);
    m << 0, 1, 0, 0, 0, 1, 1, 1, -1;
    REQUIRE(is_irreducible(m));
    CHECK_THROWS_WITH(left_eigenpairs(m), Catch::Matchers::ContainsSubstring("defective spectrum"));
}

TEST_CASE("complex eigenpairs are residual-checked and phase-normalized", "[spectral]") {
    // cyclic 3-type matrix: eigenvalues 1 and a complex conjugate pair
    Matrix m = Matrix::Zero(3, 3);
    m(1, 0) = m(2, 1) = m(0, 2) = 1.0;
    const auto pairs = left_eigenpairs(m);
    REQUIRE(pairs.size() == 3);
    CHECK_THAT(pairs[0].lambda.real(), WithinAbs(1.0, 1e-12));
    CHECK(pairs[1].lambda.imag() > 0.0);
    CHECK_THAT(pairs[1].lambda.imag(), WithinAbs(-pairs[2].lambda.imag(), 1e-12));
    for (const auto& p : pairs) {
        CHECK_THAT(p.v.norm(), WithinAbs(1.0, 1e-12));
        const CVector r = p.v.transpose() * m.cast<Complex>() - p.lambda * p.v.transpose();
        CHECK(r.norm() <= 1e-10);
        // the first component of maximal modulus is real positive
        Eigen::Index k = 0;
        const double mx = p.v.cwiseAbs().maxCoeff();
        while (std::abs(p.v[k]) < mx * (1.0 - 1e-9)) ++k;
        CHECK(p.v[k].imag() == 0.0);
        CHECK(p.v[k].real() > 0.0);
    }
}

TEST_CASE("Perron properties on random irreducible matrices", "[spectral]") {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::normal_distribution<double> N;
    for (int trial = 0; trial < 40; ++trial) {
        const int d = 2 + trial % 4;
        Matrix m(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) m(i, j) = (i == j) ? N(gen) : 0.05 + U(gen);
        const SpectralData sd = perron_and_classify(m, Vector::Zero(d));
        INFO("trial " << trial);
        CHECK((sd.u_right.array() > 0.0).all());
        CHECK((sd.u_left.array() > 0.0).all());
        CHECK_THAT(sd.u_right.sum(), WithinAbs(1.0, 1e-12));
        CHECK_THAT(sd.u_right.dot(sd.u_left), WithinAbs(1.0, 1e-10));
        CHECK((m * sd.u_right - sd.s * sd.u_right).norm() <= 1e-9 * m.norm());
        CHECK((sd.u_left.transpose() * m - sd.s * sd.u_left.transpose()).norm() <= 1e-9 * m.norm());
        for (std::size_t k = 1; k < sd.eigen.size(); ++k) {
            CHECK(sd.eigen[k].lambda.real() < sd.s);
            CHECK(std::abs(project(sd.eigen[k].v, sd.u_right)) <= 1e-8);
        }
        const Matrix e = matrix_exponential(m, 0.5);
        CHECK((e.array() > 0.0).all());
    }
}

TEST_CASE("R3 normalizations and positivity of the semigroup", "[spectral]") {
    const SpectralData sd = spectral_data(test::model("R3"));
    CHECK_THAT(sd.u_right.sum(), WithinAbs(1.0, 1e-12));
    CHECK_THAT(sd.u_right.dot(sd.u_left), WithinAbs(1.0, 1e-10));
    for (double t : {0.01, 0.5, 1.0, 5.0}) CHECK((matrix_exponential(sd.b_tilde, t).array() > 0.0).all());
}

TEST_CASE("rescaled semigroup converges to the Perron projector on R3", "[spectral]") {
    const SpectralData sd = spectral_data(test::model("R3"));
    const Matrix P = sd.u_right * sd.u_left.transpose();
    double prev = std::numeric_limits<double>::infinity();
    for (double t : {5.0, 10.0, 20.0}) {
        const double gap = (std::exp(-sd.s * t) * matrix_exponential(sd.b_tilde, t) - P).norm();
        CHECK(gap < prev);
        prev = gap;
    }
    CHECK(prev <= 1e-6);
}
