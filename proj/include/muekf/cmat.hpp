#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace muekf {

using cplx = std::complex<double>;

// Counter for complex*complex products. Complexity accounting counts only
// full complex multiplications; additions and real scalings are free.
struct MultCounter {
    std::uint64_t count = 0;
    void reset() { count = 0; }
};

MultCounter*& active_mult_counter();

// Installs a counter for the current thread while alive.
class ScopedMultCount {
public:
    explicit ScopedMultCount(MultCounter* c) : prev_(active_mult_counter()) {
        active_mult_counter() = c;
    }
    ~ScopedMultCount() { active_mult_counter() = prev_; }
    ScopedMultCount(const ScopedMultCount&) = delete;
    ScopedMultCount& operator=(const ScopedMultCount&) = delete;

private:
    MultCounter* prev_;
};

// Counted complex product. All estimator linear algebra goes through here.
inline cplx cmul(const cplx& a, const cplx& b) {
    if (MultCounter* c = active_mult_counter()) ++c->count;
    return a * b;
}

using CVec = std::vector<cplx>;

// Small dense row-major complex matrix. Sizes here are tiny (state dimension
// L_max+1 per link, or the stacked dimension of the joint baseline), so the
// implementation favors clarity over blocking.
class CMat {
public:
    CMat() = default;
    CMat(int rows, int cols) : rows_(rows), cols_(cols), a_(static_cast<size_t>(rows) * cols) {}

    static CMat identity(int n) {
        CMat m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    cplx& operator()(int i, int j) { return a_[static_cast<size_t>(i) * cols_ + j]; }
    const cplx& operator()(int i, int j) const { return a_[static_cast<size_t>(i) * cols_ + j]; }

    const std::vector<cplx>& data() const { return a_; }

    CMat adjoint() const {
        CMat r(cols_, rows_);
        for (int i = 0; i < rows_; ++i)
            for (int j = 0; j < cols_; ++j) r(j, i) = std::conj((*this)(i, j));
        return r;
    }

    // P <- (P + P^H)/2, bounds floating-point asymmetry drift
    void hermitize() {
        if (rows_ != cols_) throw std::invalid_argument("hermitize: square matrix required");
        for (int i = 0; i < rows_; ++i) {
            for (int j = i; j < cols_; ++j) {
                cplx v = 0.5 * ((*this)(i, j) + std::conj((*this)(j, i)));
                (*this)(i, j) = v;
                (*this)(j, i) = std::conj(v);
            }
            (*this)(i, i) = cplx((*this)(i, i).real(), 0.0);
        }
    }

    double max_abs_asymmetry() const {
        double m = 0.0;
        for (int i = 0; i < rows_; ++i)
            for (int j = 0; j < cols_; ++j)
                m = std::max(m, std::abs((*this)(i, j) - std::conj((*this)(j, i))));
        return m;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<cplx> a_;
};

CMat matmul(const CMat& a, const CMat& b);
CMat add_diag(CMat m, double d);

// row * M, M * col, row * col as counted products
CVec row_times_mat(const CVec& row, const CMat& m);
CVec mat_times_col(const CMat& m, const CVec& col);
cplx dot_row_colconj(const CVec& row, const CVec& col);  // sum_i row[i]*conj(col[i])

// outer = col * row (rank-1, counted)
CMat outer(const CVec& col, const CVec& row);

// Dense inverse by Gauss-Jordan with partial pivoting. Throws on singular
// input. Divisions count as one multiplication each.
CMat invert(const CMat& m);

}  // namespace muekf
