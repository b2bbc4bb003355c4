#include "pamm/mat.hpp"

#include <cmath>
#include <stdexcept>

namespace pamm {

static void check(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
}

void matmul_acc(const Mat& a, const Mat& b, Mat& c) {
    check(a.cols == b.rows && c.rows == a.rows && c.cols == b.cols,
          "matmul: dimension mismatch");
    // i-k-j order keeps the inner loop contiguous in b and c.
    for (int i = 0; i < a.rows; ++i) {
        const double* ai = a.row(i);
        double* ci = c.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const double aik = ai[k];
            if (aik == 0.0) continue;
            const double* bk = b.row(k);
            for (int j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
        }
    }
}

void matmul_nt_acc(const Mat& a, const Mat& b, Mat& c) {
    check(a.cols == b.cols && c.rows == a.rows && c.cols == b.rows,
          "matmul_nt: dimension mismatch");
    for (int i = 0; i < a.rows; ++i) {
        const double* ai = a.row(i);
        double* ci = c.row(i);
        for (int j = 0; j < b.rows; ++j) {
            const double* bj = b.row(j);
            double s = 0.0;
            for (int k = 0; k < a.cols; ++k) s += ai[k] * bj[k];
            ci[j] += s;
        }
    }
}

void matmul_tn_acc(const Mat& a, const Mat& b, Mat& c) {
    check(a.rows == b.rows && c.rows == a.cols && c.cols == b.cols,
          "matmul_tn: dimension mismatch");
    for (int k = 0; k < a.rows; ++k) {
        const double* ak = a.row(k);
        const double* bk = b.row(k);
        for (int i = 0; i < a.cols; ++i) {
            const double aki = ak[i];
            if (aki == 0.0) continue;
            double* ci = c.row(i);
            for (int j = 0; j < b.cols; ++j) ci[j] += aki * bk[j];
        }
    }
}

Mat matmul(const Mat& a, const Mat& b) {
    Mat c(a.rows, b.cols);
    matmul_acc(a, b, c);
    return c;
}

Mat matmul_nt(const Mat& a, const Mat& b) {
    Mat c(a.rows, b.rows);
    matmul_nt_acc(a, b, c);
    return c;
}

void softmax_rows_inplace(Mat& m, bool causal) {
    for (int i = 0; i < m.rows; ++i) {
        double* r = m.row(i);
        const int lim = causal ? std::min(i + 1, m.cols) : m.cols;
        double mx = r[0];
        for (int j = 1; j < lim; ++j) mx = std::max(mx, r[j]);
        double sum = 0.0;
        for (int j = 0; j < lim; ++j) {
            r[j] = std::exp(r[j] - mx);
            sum += r[j];
        }
        for (int j = 0; j < lim; ++j) r[j] /= sum;
        for (int j = lim; j < m.cols; ++j) r[j] = 0.0;
    }
}

Mat xavier_uniform(int rows, int cols, std::mt19937_64& rng) {
    Mat m(rows, cols);
    const double limit = std::sqrt(6.0 / (rows + cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& v : m.a) v = dist(rng);
    return m;
}

Mat gaussian(int rows, int cols, double stddev, std::mt19937_64& rng) {
    Mat m(rows, cols);
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : m.a) v = dist(rng);
    return m;
}

bool all_finite(const Mat& m) {
    for (double v : m.a)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace pamm
