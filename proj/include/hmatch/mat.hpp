#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace hmatch {

// Dense row-major matrix of doubles. All products accumulate in ascending
// index order, which the group-isolation guarantee of the toy decoder
// relies on (appending rows/columns must not reassociate existing sums).
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}
    Mat(int r, int c, double fill) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, fill) {}

    double& operator()(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }

    double* row(int r) { return a.data() + static_cast<std::size_t>(r) * cols; }
    const double* row(int r) const { return a.data() + static_cast<std::size_t>(r) * cols; }

    std::size_t size() const { return a.size(); }
    bool empty() const { return a.empty(); }

    void zero() { std::fill(a.begin(), a.end(), 0.0); }
};

// out = x * y
inline void matmul(const Mat& x, const Mat& y, Mat& out) {
    assert(x.cols == y.rows);
    out.rows = x.rows;
    out.cols = y.cols;
    out.a.assign(static_cast<std::size_t>(x.rows) * y.cols, 0.0);
    for (int i = 0; i < x.rows; ++i) {
        double* o = out.row(i);
        const double* xi = x.row(i);
        for (int k = 0; k < x.cols; ++k) {
            const double v = xi[k];
            const double* yk = y.row(k);
            for (int j = 0; j < y.cols; ++j) o[j] += v * yk[j];
        }
    }
}

// out = x * y^T
inline void matmul_nt(const Mat& x, const Mat& y, Mat& out) {
    assert(x.cols == y.cols);
    out.rows = x.rows;
    out.cols = y.rows;
    out.a.assign(static_cast<std::size_t>(x.rows) * y.rows, 0.0);
    for (int i = 0; i < x.rows; ++i) {
        const double* xi = x.row(i);
        double* o = out.row(i);
        for (int j = 0; j < y.rows; ++j) {
            const double* yj = y.row(j);
            double s = 0.0;
            for (int k = 0; k < x.cols; ++k) s += xi[k] * yj[k];
            o[j] = s;
        }
    }
}

// out += x^T * y  (accumulating form used for weight gradients)
inline void matmul_tn_acc(const Mat& x, const Mat& y, Mat& out) {
    assert(x.rows == y.rows);
    assert(out.rows == x.cols && out.cols == y.cols);
    for (int k = 0; k < x.rows; ++k) {
        const double* xk = x.row(k);
        const double* yk = y.row(k);
        for (int i = 0; i < x.cols; ++i) {
            const double v = xk[i];
            double* o = out.row(i);
            for (int j = 0; j < y.cols; ++j) o[j] += v * yk[j];
        }
    }
}

// out += x * y
inline void matmul_acc(const Mat& x, const Mat& y, Mat& out) {
    assert(x.cols == y.rows);
    assert(out.rows == x.rows && out.cols == y.cols);
    for (int i = 0; i < x.rows; ++i) {
        double* o = out.row(i);
        const double* xi = x.row(i);
        for (int k = 0; k < x.cols; ++k) {
            const double v = xi[k];
            const double* yk = y.row(k);
            for (int j = 0; j < y.cols; ++j) o[j] += v * yk[j];
        }
    }
}

// out += x * y^T
inline void matmul_nt_acc(const Mat& x, const Mat& y, Mat& out) {
    assert(x.cols == y.cols);
    assert(out.rows == x.rows && out.cols == y.rows);
    for (int i = 0; i < x.rows; ++i) {
        const double* xi = x.row(i);
        double* o = out.row(i);
        for (int j = 0; j < y.rows; ++j) {
            const double* yj = y.row(j);
            double s = 0.0;
            for (int k = 0; k < x.cols; ++k) s += xi[k] * yj[k];
            o[j] += s;
        }
    }
}

inline void add_inplace(Mat& x, const Mat& y) {
    assert(x.rows == y.rows && x.cols == y.cols);
    for (std::size_t i = 0; i < x.a.size(); ++i) x.a[i] += y.a[i];
}

inline void axpy_inplace(Mat& x, double alpha, const Mat& y) {
    assert(x.rows == y.rows && x.cols == y.cols);
    for (std::size_t i = 0; i < x.a.size(); ++i) x.a[i] += alpha * y.a[i];
}

}  // namespace hmatch
