#include <gtest/gtest.h>

#include <cmath>

#include "gbandit/linalg.hpp"
#include "gbandit/rng.hpp"

using namespace gbandit;

namespace {

SymMatrix from_rows(std::size_t d, const std::vector<double>& rows) {
    Matrix m(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) m(i, j) = rows[i * d + j];
    return SymMatrix(m);
}

double uniform_pm(RngStream& rng, double scale) {
    return scale * (2.0 * rng.next_uniform() - 1.0);
}

} // namespace

TEST(VecOps, DotNormAdd) {
    Vec a{1.0, 2.0, 3.0}, b{4.0, -5.0, 6.0};
    EXPECT_DOUBLE_EQ(dot(a, b), 4.0 - 10.0 + 18.0);
    EXPECT_DOUBLE_EQ(norm(Vec{3.0, 4.0}), 5.0);
    const Vec s = add(a, b);
    EXPECT_DOUBLE_EQ(s[0], 5.0);
    EXPECT_DOUBLE_EQ(s[2], 9.0);
    EXPECT_THROW(dot(a, Vec{1.0}), Error);
}

TEST(SymMatrixOps, SymmetrizesAndRejectsNonFinite) {
    Matrix m(2, 2);
    m(0, 0) = 1.0;
    m(0, 1) = 2.0;
    m(1, 0) = 4.0;
    m(1, 1) = 3.0;
    const SymMatrix s(m);
    EXPECT_DOUBLE_EQ(s(0, 1), 3.0);
    EXPECT_DOUBLE_EQ(s(1, 0), 3.0);
    EXPECT_DOUBLE_EQ(s(0, 0), 1.0);

    Matrix bad(1, 1);
    bad(0, 0) = std::nan("");
    EXPECT_THROW(SymMatrix{bad}, Error);

    SymMatrix t(2);
    EXPECT_THROW(t.set(0, 1, std::numeric_limits<double>::infinity()), Error);
}

TEST(Eigen, DiagonalMatrix) {
    SymMatrix m(2);
    m.set(0, 0, 2.0);
    m.set(1, 1, 3.0);
    EXPECT_NEAR(min_eigenvalue(m), 2.0, 1e-14);
    const EigenSystem es = eigen_decompose(m);
    EXPECT_NEAR(*std::max_element(es.values.begin(), es.values.end()), 3.0, 1e-14);
    EXPECT_TRUE(is_orthonormal(es.vectors));
}

TEST(Eigen, ZeroMatrixGivesZerosAndIdentity) {
    const SymMatrix m(3);
    const EigenSystem es = eigen_decompose(m);
    for (double v : es.values) EXPECT_DOUBLE_EQ(v, 0.0);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            EXPECT_DOUBLE_EQ(es.vectors(i, j), i == j ? 1.0 : 0.0);
}

TEST(Eigen, TwoByTwoKnownSpectrum) {
    // [[2,1],[1,2]] has eigenvalues 1 and 3.
    const SymMatrix m = from_rows(2, {2.0, 1.0, 1.0, 2.0});
    EXPECT_NEAR(min_eigenvalue(m), 1.0, 1e-12);
}

TEST(Eigen, ResidualAndOrthonormalityOnRandomMatrices) {
    for (std::size_t d : {1u, 2u, 3u, 5u, 8u, 16u}) {
        for (std::uint64_t rep = 0; rep < 20; ++rep) {
            RngStream rng(101, d, rep, StreamPurpose::audit);
            SymMatrix m(d);
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = i; j < d; ++j) m.set(i, j, uniform_pm(rng, 1.0));
            const EigenSystem es = eigen_decompose(m);
            EXPECT_LE(orthonormality_defect(es.vectors), 1e-10);

            double trace = 0.0, value_sum = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                trace += m(i, i);
                value_sum += es.values[i];
            }
            EXPECT_NEAR(trace, value_sum, 1e-10 * (1.0 + std::abs(trace)));

            const double scale = std::max(1.0, m.frobenius_norm());
            for (std::size_t j = 0; j < d; ++j) {
                Vec v(d);
                for (std::size_t i = 0; i < d; ++i) v[i] = es.vectors(i, j);
                const Vec mv = m.apply(v);
                for (std::size_t i = 0; i < d; ++i)
                    EXPECT_NEAR(mv[i], es.values[j] * v[i], 1e-10 * scale);
            }
        }
    }
}

TEST(Eigen, MinEigenvalueIsVariationalLowerBound) {
    for (std::uint64_t rep = 0; rep < 50; ++rep) {
        RngStream rng(202, rep, 0, StreamPurpose::audit);
        const std::size_t d = 4;
        SymMatrix m(d);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i; j < d; ++j) m.set(i, j, uniform_pm(rng, 2.0));
        const EigenSystem es = eigen_decompose(m);
        const double lam_min = *std::min_element(es.values.begin(), es.values.end());
        const double lam_max = *std::max_element(es.values.begin(), es.values.end());
        for (int w = 0; w < 20; ++w) {
            Vec u(d);
            for (std::size_t i = 0; i < d; ++i) u[i] = uniform_pm(rng, 1.0);
            const double nu = norm(u);
            if (nu < 1e-6) continue;
            for (double& x : u) x /= nu;
            const double quad = dot(u, m.apply(u));
            EXPECT_GE(quad, lam_min - 1e-8);
            EXPECT_LE(quad, lam_max + 1e-8);
        }
    }
}

TEST(LeastSquares, OneByOne) {
    SymMatrix m(1);
    m.set(0, 0, 5.0);
    const Vec beta = solve_least_squares(m, Vec{10.0});
    ASSERT_EQ(beta.size(), 1u);
    EXPECT_NEAR(beta[0], 2.0, 1e-14);
}

TEST(LeastSquares, ZeroGramGivesZeroVector) {
    const SymMatrix m(3);
    const Vec beta = solve_least_squares(m, Vec{1.0, 2.0, 3.0});
    for (double v : beta) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(LeastSquares, FullRankRecovery) {
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
        RngStream rng(303, rep, 0, StreamPurpose::audit);
        const std::size_t d = 5;
        SymMatrix m(d);
        // B^T B + 0.1 I is symmetric positive definite.
        Matrix b(d, d);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) b(i, j) = uniform_pm(rng, 1.0);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i; j < d; ++j) {
                double s = 0.0;
                for (std::size_t r = 0; r < d; ++r) s += b(r, i) * b(r, j);
                m.set(i, j, s + (i == j ? 0.1 : 0.0));
            }
        Vec x(d);
        for (double& v : x) v = uniform_pm(rng, 2.0);
        const Vec beta = solve_least_squares(m, m.apply(x));
        for (std::size_t i = 0; i < d; ++i) EXPECT_NEAR(beta[i], x[i], 1e-8);
    }
}

TEST(LeastSquares, RankDeficientMinNormSolution) {
    // Spectral construction in d = 4: eigenvectors u1..u4 (orthonormal Walsh
    // basis), gram = 2 u1 u1^T + 0.5 u2 u2^T (rank 2), moment with components
    // 3, 1 on the range and 4 on the null space. The minimum-norm solution is
    // (3/2) u1 + 2 u2 = (1.75, -0.25, 1.75, -0.25): the null-space component
    // must be dropped, not inverted.
    const Vec u1{0.5, 0.5, 0.5, 0.5};
    const Vec u2{0.5, -0.5, 0.5, -0.5};
    const Vec u3{0.5, 0.5, -0.5, -0.5};
    SymMatrix m(4);
    m.add_outer(u1, 2.0);
    m.add_outer(u2, 0.5);
    const Vec moment = add(add(scaled(u1, 3.0), scaled(u2, 1.0)), scaled(u3, 4.0));
    const Vec beta = solve_least_squares(m, moment);
    const Vec expected{1.75, -0.25, 1.75, -0.25};
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(beta[i], expected[i], 1e-8);
    EXPECT_NEAR(dot(beta, u3), 0.0, 1e-8);
}

TEST(LeastSquares, RejectsIndefiniteGram) {
    SymMatrix m(2);
    m.set(0, 0, 1.0);
    m.set(1, 1, -1.0);
    EXPECT_THROW(solve_least_squares(m, Vec{1.0, 1.0}), Error);
    SymMatrix ok(1);
    ok.set(0, 0, 1.0);
    EXPECT_THROW(solve_least_squares(ok, Vec{std::nan("")}), Error);
}

TEST(Rotation, MapsVectorToPositiveFirstAxis) {
    for (std::size_t d : {1u, 2u, 5u, 20u}) {
        for (std::uint64_t rep = 0; rep < 2500; ++rep) {
            RngStream rng(404, d, rep, StreamPurpose::audit);
            Vec v(d);
            for (double& x : v) x = uniform_pm(rng, 3.0);
            const double nv = norm(v);
            if (nv < 1e-9) continue;
            const Matrix q = rotation_to_first_axis(v);
            EXPECT_LE(orthonormality_defect(q), 1e-10);
            const Vec qv = q.apply(v);
            EXPECT_NEAR(qv[0], nv, 1e-10 * std::max(1.0, nv));
            for (std::size_t i = 1; i < d; ++i)
                EXPECT_NEAR(qv[i], 0.0, 1e-10 * std::max(1.0, nv));
        }
    }
}

TEST(Rotation, BothSignBranchesAndAxisInput) {
    for (double first : {3.0, -3.0, 0.0}) {
        const Vec v{first, 4.0};
        const Matrix q = rotation_to_first_axis(v);
        const Vec qv = q.apply(v);
        EXPECT_NEAR(qv[0], norm(v), 1e-12);
        EXPECT_NEAR(qv[1], 0.0, 1e-12);
    }
    // Already on the axis: must still land on the positive side.
    const Matrix q = rotation_to_first_axis(Vec{-2.0, 0.0, 0.0});
    const Vec qv = q.apply(Vec{-2.0, 0.0, 0.0});
    EXPECT_NEAR(qv[0], 2.0, 1e-12);
}

TEST(Rotation, TinyVectorGivesIdentity) {
    const Matrix q = rotation_to_first_axis(Vec{1e-13, 0.0});
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            EXPECT_DOUBLE_EQ(q(i, j), i == j ? 1.0 : 0.0);
}

TEST(Rotation, TransposeInvertsTheMap) {
    RngStream rng(505, 0, 0, StreamPurpose::audit);
    Vec v(5);
    for (double& x : v) x = uniform_pm(rng, 1.0);
    const Matrix q = rotation_to_first_axis(v);
    Vec z(5);
    for (double& x : z) x = uniform_pm(rng, 1.0);
    const Vec back = q.apply(q.apply_transpose(z));
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(back[i], z[i], 1e-12);
}
