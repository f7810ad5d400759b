#include "muekf/cmat.hpp"

#include <cmath>

namespace muekf {

MultCounter*& active_mult_counter() {
    thread_local MultCounter* counter = nullptr;
    return counter;
}

CMat matmul(const CMat& a, const CMat& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: dimension mismatch");
    CMat r(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i) {
        for (int k = 0; k < a.cols(); ++k) {
            const cplx aik = a(i, k);
            for (int j = 0; j < b.cols(); ++j) {
                r(i, j) += cmul(aik, b(k, j));
            }
        }
    }
    return r;
}

CMat add_diag(CMat m, double d) {
    for (int i = 0; i < std::min(m.rows(), m.cols()); ++i) m(i, i) += d;
    return m;
}

CVec row_times_mat(const CVec& row, const CMat& m) {
    if (static_cast<int>(row.size()) != m.rows())
        throw std::invalid_argument("row_times_mat: dimension mismatch");
    CVec r(m.cols());
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) r[j] += cmul(row[i], m(i, j));
    return r;
}

CVec mat_times_col(const CMat& m, const CVec& col) {
    if (static_cast<int>(col.size()) != m.cols())
        throw std::invalid_argument("mat_times_col: dimension mismatch");
    CVec r(m.rows());
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) r[i] += cmul(m(i, j), col[j]);
    return r;
}

cplx dot_row_colconj(const CVec& row, const CVec& col) {
    if (row.size() != col.size()) throw std::invalid_argument("dot: dimension mismatch");
    cplx s = 0.0;
    for (size_t i = 0; i < row.size(); ++i) s += cmul(row[i], std::conj(col[i]));
    return s;
}

CMat outer(const CVec& col, const CVec& row) {
    CMat r(static_cast<int>(col.size()), static_cast<int>(row.size()));
    for (size_t i = 0; i < col.size(); ++i)
        for (size_t j = 0; j < row.size(); ++j)
            r(static_cast<int>(i), static_cast<int>(j)) = cmul(col[i], row[j]);
    return r;
}

CMat invert(const CMat& m) {
    if (m.rows() != m.cols()) throw std::invalid_argument("invert: square matrix required");
    const int n = m.rows();
    CMat a = m;
    CMat inv = CMat::identity(n);
    for (int col = 0; col < n; ++col) {
        int pivot = col;
        double best = std::abs(a(col, col));
        for (int r = col + 1; r < n; ++r) {
            double v = std::abs(a(r, col));
            if (v > best) {
                best = v;
                pivot = r;
            }
        }
        if (best == 0.0) throw std::runtime_error("invert: singular matrix");
        if (pivot != col) {
            for (int j = 0; j < n; ++j) {
                std::swap(a(col, j), a(pivot, j));
                std::swap(inv(col, j), inv(pivot, j));
            }
        }
        const cplx d = a(col, col);
        const cplx dinv = cmul(cplx(1.0, 0.0), 1.0 / d);
        for (int j = 0; j < n; ++j) {
            a(col, j) = cmul(a(col, j), dinv);
            inv(col, j) = cmul(inv(col, j), dinv);
        }
        for (int r = 0; r < n; ++r) {
            if (r == col) continue;
            const cplx f = a(r, col);
            if (f == cplx(0.0, 0.0)) continue;
            for (int j = 0; j < n; ++j) {
                a(r, j) -= cmul(f, a(col, j));
                inv(r, j) -= cmul(f, inv(col, j));
            }
        }
    }
    return inv;
}

}  // namespace muekf
