#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace pamm {

// Dense row-major matrix of doubles. All model math runs in double so the
// finite-difference gradient checks are meaningful.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

    double& at(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
    double at(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }
    double* row(int i) { return a.data() + static_cast<size_t>(i) * cols; }
    const double* row(int i) const { return a.data() + static_cast<size_t>(i) * cols; }
    size_t size() const { return a.size(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
    void zero() { std::fill(a.begin(), a.end(), 0.0); }
};

// c += a * b
void matmul_acc(const Mat& a, const Mat& b, Mat& c);
// c += a * b^T
void matmul_nt_acc(const Mat& a, const Mat& b, Mat& c);
// c += a^T * b
void matmul_tn_acc(const Mat& a, const Mat& b, Mat& c);

Mat matmul(const Mat& a, const Mat& b);
Mat matmul_nt(const Mat& a, const Mat& b);

// Row-wise softmax with max subtraction. When causal, entries j > i are
// excluded from the support and set to exactly 0 in the result.
void softmax_rows_inplace(Mat& m, bool causal);

Mat xavier_uniform(int rows, int cols, std::mt19937_64& rng);
Mat gaussian(int rows, int cols, double stddev, std::mt19937_64& rng);

bool all_finite(const Mat& m);

}  // namespace pamm
