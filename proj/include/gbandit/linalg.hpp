#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "gbandit/errors.hpp"

namespace gbandit {

using Vec = std::vector<double>;

inline double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size())
        throw Error(Error::Kind::invalid_input, "dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

inline Vec add(const Vec& a, const Vec& b) {
    if (a.size() != b.size())
        throw Error(Error::Kind::invalid_input, "add: size mismatch");
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

inline Vec scaled(const Vec& a, double c) {
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = c * a[i];
    return r;
}

inline bool all_finite(const Vec& a) {
    for (double x : a)
        if (!std::isfinite(x)) return false;
    return true;
}

// Dense row-major matrix. Only the handful of operations the simulator needs.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), a_(rows * cols, fill) {}

    static Matrix identity(std::size_t d) {
        Matrix m(d, d);
        for (std::size_t i = 0; i < d; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return a_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a_[i * cols_ + j]; }

    Vec apply(const Vec& v) const { // M v
        if (v.size() != cols_)
            throw Error(Error::Kind::invalid_input, "Matrix::apply: size mismatch");
        Vec r(rows_, 0.0);
        for (std::size_t i = 0; i < rows_; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < cols_; ++j) s += a_[i * cols_ + j] * v[j];
            r[i] = s;
        }
        return r;
    }

    Vec apply_transpose(const Vec& v) const { // M^T v
        if (v.size() != rows_)
            throw Error(Error::Kind::invalid_input, "Matrix::apply_transpose: size mismatch");
        Vec r(cols_, 0.0);
        for (std::size_t i = 0; i < rows_; ++i) {
            const double vi = v[i];
            for (std::size_t j = 0; j < cols_; ++j) r[j] += a_[i * cols_ + j] * vi;
        }
        return r;
    }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> a_;
};

// Max-abs deviation of Q^T Q from the identity.
inline double orthonormality_defect(const Matrix& q) {
    const std::size_t d = q.cols();
    double worst = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < q.rows(); ++r) s += q(r, i) * q(r, j);
            worst = std::max(worst, std::abs(s - (i == j ? 1.0 : 0.0)));
        }
    }
    return worst;
}

inline bool is_orthonormal(const Matrix& q, double tol = 1e-10) {
    return q.rows() == q.cols() && orthonormality_defect(q) <= tol;
}

// Symmetric matrix; symmetrized on construction so downstream code can rely on
// exact symmetry. Rejects non-finite entries.
class SymMatrix {
public:
    SymMatrix() = default;
    explicit SymMatrix(std::size_t d) : d_(d), a_(d * d, 0.0) {}

    explicit SymMatrix(const Matrix& m) : d_(m.rows()), a_(m.rows() * m.rows()) {
        if (m.rows() != m.cols())
            throw Error(Error::Kind::invalid_input, "SymMatrix: matrix not square");
        for (std::size_t i = 0; i < d_; ++i)
            for (std::size_t j = 0; j < d_; ++j) {
                const double v = 0.5 * (m(i, j) + m(j, i));
                if (!std::isfinite(v))
                    throw Error(Error::Kind::invalid_input, "SymMatrix: non-finite entry");
                a_[i * d_ + j] = v;
            }
    }

    std::size_t dim() const { return d_; }

    double operator()(std::size_t i, std::size_t j) const { return a_[i * d_ + j]; }

    // Symmetric writes: keeps both triangles in sync.
    void set(std::size_t i, std::size_t j, double v) {
        if (!std::isfinite(v))
            throw Error(Error::Kind::invalid_input, "SymMatrix::set: non-finite entry");
        a_[i * d_ + j] = v;
        a_[j * d_ + i] = v;
    }

    void add_outer(const Vec& x, double w = 1.0) { // A += w * x x^T
        if (x.size() != d_)
            throw Error(Error::Kind::invalid_input, "SymMatrix::add_outer: size mismatch");
        for (std::size_t i = 0; i < d_; ++i)
            for (std::size_t j = 0; j < d_; ++j) a_[i * d_ + j] += w * x[i] * x[j];
    }

    void scale(double c) {
        for (double& v : a_) v *= c;
    }

    Vec apply(const Vec& v) const {
        if (v.size() != d_)
            throw Error(Error::Kind::invalid_input, "SymMatrix::apply: size mismatch");
        Vec r(d_, 0.0);
        for (std::size_t i = 0; i < d_; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < d_; ++j) s += a_[i * d_ + j] * v[j];
            r[i] = s;
        }
        return r;
    }

    double frobenius_norm() const {
        double s = 0.0;
        for (double v : a_) s += v * v;
        return std::sqrt(s);
    }

private:
    std::size_t d_ = 0;
    std::vector<double> a_;
};

struct EigenSystem {
    Vec values;      // unsorted, values[j] pairs with column j of vectors
    Matrix vectors;  // columns are orthonormal eigenvectors
};

// Cyclic Jacobi for dense symmetric matrices. Intended for the small
// dimensions this library works at (d <= 64); sweeps until the off-diagonal
// Frobenius norm drops below 1e-12 relative to the full Frobenius norm.
inline EigenSystem eigen_decompose(const SymMatrix& m) {
    const std::size_t d = m.dim();
    if (d == 0)
        throw Error(Error::Kind::invalid_input, "eigen_decompose: empty matrix");

    std::vector<double> a(d * d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) a[i * d + j] = m(i, j);
    Matrix v = Matrix::identity(d);

    const double norm_f = m.frobenius_norm();
    EigenSystem out;
    out.values.assign(d, 0.0);
    out.vectors = std::move(v);
    if (norm_f == 0.0) return out; // zero matrix: all eigenvalues 0, vectors = I
    Matrix& vv = out.vectors;

    auto off_norm = [&]() {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i + 1; j < d; ++j) s += 2.0 * a[i * d + j] * a[i * d + j];
        return std::sqrt(s);
    };

    const double tol = 1e-12 * norm_f;
    const int max_sweeps = 128;
    for (int sweep = 0; sweep < max_sweeps && off_norm() > tol; ++sweep) {
        for (std::size_t p = 0; p + 1 < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                const double apq = a[p * d + q];
                if (apq == 0.0) continue;
                const double app = a[p * d + p], aqq = a[q * d + q];
                // Rutishauser rotation: tan of the smaller rotation angle.
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0)
                                     ? 1.0 / (theta + std::sqrt(1.0 + theta * theta))
                                     : 1.0 / (theta - std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                const double tau = s / (1.0 + c);

                a[p * d + p] = app - t * apq;
                a[q * d + q] = aqq + t * apq;
                a[p * d + q] = 0.0;
                a[q * d + p] = 0.0;
                for (std::size_t r = 0; r < d; ++r) {
                    if (r == p || r == q) continue;
                    const double arp = a[r * d + p], arq = a[r * d + q];
                    a[r * d + p] = arp - s * (arq + tau * arp);
                    a[p * d + r] = a[r * d + p];
                    a[r * d + q] = arq + s * (arp - tau * arq);
                    a[q * d + r] = a[r * d + q];
                }
                for (std::size_t r = 0; r < d; ++r) {
                    const double vrp = vv(r, p), vrq = vv(r, q);
                    vv(r, p) = vrp - s * (vrq + tau * vrp);
                    vv(r, q) = vrq + s * (vrp - tau * vrq);
                }
            }
        }
    }

    for (std::size_t i = 0; i < d; ++i) out.values[i] = a[i * d + i];
    return out;
}

inline double min_eigenvalue(const SymMatrix& m) {
    const EigenSystem es = eigen_decompose(m);
    return *std::min_element(es.values.begin(), es.values.end());
}

// Minimum-norm least-squares solution of gram * beta = moment for a PSD gram
// matrix: eigendecompose and invert only the directions whose eigenvalue
// clears 1e-10 relative to the largest. The zero matrix maps to the zero
// vector.
inline Vec solve_least_squares(const SymMatrix& gram, const Vec& moment) {
    const std::size_t d = gram.dim();
    if (moment.size() != d)
        throw Error(Error::Kind::invalid_input, "solve_least_squares: size mismatch");
    if (!all_finite(moment))
        throw Error(Error::Kind::invalid_input, "solve_least_squares: non-finite moment");

    const EigenSystem es = eigen_decompose(gram);
    const double lam_max = *std::max_element(es.values.begin(), es.values.end());
    const double lam_min = *std::min_element(es.values.begin(), es.values.end());
    if (lam_min < -1e-9 * std::max(1.0, std::abs(lam_max)))
        throw Error(Error::Kind::invalid_input, "solve_least_squares: gram not PSD");
    if (lam_max <= 0.0) return Vec(d, 0.0);

    const double cutoff = 1e-10 * lam_max;
    Vec beta(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        if (es.values[j] <= cutoff) continue;
        double vj_dot_m = 0.0;
        for (std::size_t i = 0; i < d; ++i) vj_dot_m += es.vectors(i, j) * moment[i];
        const double coef = vj_dot_m / es.values[j];
        for (std::size_t i = 0; i < d; ++i) beta[i] += coef * es.vectors(i, j);
    }
    return beta;
}

// Orthonormal Q with Q v = (||v||, 0, ..., 0), built from a single Householder
// reflection H = I - 2 u u^T / ||u||^2. The sign of u is chosen away from
// cancellation (u = v + ||v|| e1 when v1 > 0, else u = v - ||v|| e1); in the
// former case H maps v to -||v|| e1, so the first row is negated to restore
// the positive-axis convention. ||v|| < 1e-12 yields the identity.
inline Matrix rotation_to_first_axis(const Vec& v) {
    const std::size_t d = v.size();
    if (d == 0)
        throw Error(Error::Kind::invalid_input, "rotation_to_first_axis: empty vector");
    if (!all_finite(v))
        throw Error(Error::Kind::invalid_input, "rotation_to_first_axis: non-finite entry");

    const double nv = norm(v);
    if (nv < 1e-12) return Matrix::identity(d);

    const bool flip = v[0] > 0.0;
    Vec u = v;
    u[0] += flip ? nv : -nv;
    const double uu = dot(u, u);

    Matrix q(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            q(i, j) = (i == j ? 1.0 : 0.0) - 2.0 * u[i] * u[j] / uu;
    if (flip)
        for (std::size_t j = 0; j < d; ++j) q(0, j) = -q(0, j);
    return q;
}

} // namespace gbandit
