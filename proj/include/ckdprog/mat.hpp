#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace ckdprog {

// Dense row-major matrix of doubles. Deliberately minimal: the model spells
// out its own loops where that reads better, and every shape is fixed up
// front so training never allocates mid-step. Vectors are matrices with one
// row.
struct Mat {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(size_t r, size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

    double& operator()(size_t i, size_t j) { return a[i * cols + j]; }
    double operator()(size_t i, size_t j) const { return a[i * cols + j]; }

    double* row(size_t i) { return a.data() + i * cols; }
    const double* row(size_t i) const { return a.data() + i * cols; }

    size_t size() const { return a.size(); }
    bool empty() const { return a.empty(); }
    void zero() { std::fill(a.begin(), a.end(), 0.0); }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

inline void check_mul(size_t inner_a, size_t inner_b) {
    if (inner_a != inner_b) throw std::runtime_error("matrix shape mismatch in multiply");
}

// C += A * B
inline void matmul_acc(Mat& c, const Mat& a, const Mat& b) {
    check_mul(a.cols, b.rows);
    for (size_t i = 0; i < a.rows; ++i) {
        double* cr = c.row(i);
        for (size_t k = 0; k < a.cols; ++k) {
            double aik = a(i, k);
            const double* br = b.row(k);
            for (size_t j = 0; j < b.cols; ++j) cr[j] += aik * br[j];
        }
    }
}

// C += A^T * B
inline void matmul_tn_acc(Mat& c, const Mat& a, const Mat& b) {
    check_mul(a.rows, b.rows);
    for (size_t i = 0; i < a.rows; ++i) {
        const double* ar = a.row(i);
        const double* br = b.row(i);
        for (size_t r = 0; r < a.cols; ++r) {
            double v = ar[r];
            double* cr = c.row(r);
            for (size_t j = 0; j < b.cols; ++j) cr[j] += v * br[j];
        }
    }
}

// C += A * B^T
inline void matmul_nt_acc(Mat& c, const Mat& a, const Mat& b) {
    check_mul(a.cols, b.cols);
    for (size_t i = 0; i < a.rows; ++i) {
        const double* ar = a.row(i);
        double* cr = c.row(i);
        for (size_t j = 0; j < b.rows; ++j) {
            const double* br = b.row(j);
            double s = 0.0;
            for (size_t k = 0; k < a.cols; ++k) s += ar[k] * br[k];
            cr[j] += s;
        }
    }
}

inline Mat matmul(const Mat& a, const Mat& b) {
    Mat c(a.rows, b.cols);
    matmul_acc(c, a, b);
    return c;
}

}  // namespace ckdprog
