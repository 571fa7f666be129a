#include "cmcss/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "cmcss/error.hpp"

namespace cmcss::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 16;

void require(bool ok, const char* op, const Matrix& a, const Matrix& b) {
    if (!ok) throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " + b.shape_string());
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.rows(), "matmul", a, b);
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    Matrix c(n, m);
    const long rows = static_cast<long>(n);
#pragma omp parallel for schedule(static) if (n * k * m > kParallelWork)
    for (long i = 0; i < rows; ++i) {
        double* ci = c.data() + i * m;
        const double* ai = a.data() + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = ai[p];
            const double* bp = b.data() + p * m;
            for (std::size_t j = 0; j < m; ++j) ci[j] += aip * bp[j];
        }
    }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    Matrix c(a.cols(), b.cols());
    matmul_tn_acc(a, b, c);
    return c;
}

void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& c) {
    require(a.rows() == b.rows(), "matmul_tn", a, b);
    const std::size_t n = a.cols(), k = a.rows(), m = b.cols();
    if (c.rows() != n || c.cols() != m) throw ShapeError("matmul_tn_acc: bad output shape " + c.shape_string());
    const long rows = static_cast<long>(n);
#pragma omp parallel for schedule(static) if (n * k * m > kParallelWork)
    for (long i = 0; i < rows; ++i) {
        double* ci = c.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double api = a(p, static_cast<std::size_t>(i));
            if (api == 0.0) continue;
            const double* bp = b.data() + p * m;
            for (std::size_t j = 0; j < m; ++j) ci[j] += api * bp[j];
        }
    }
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.cols(), "matmul_nt", a, b);
    const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    Matrix c(n, m);
    const long rows = static_cast<long>(n);
#pragma omp parallel for schedule(static) if (n * k * m > kParallelWork)
    for (long i = 0; i < rows; ++i) {
        const double* ai = a.data() + i * k;
        for (std::size_t j = 0; j < m; ++j) {
            const double* bj = b.data() + j * k;
            double s = 0.0;
#pragma omp simd reduction(+ : s)
            for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
            c(static_cast<std::size_t>(i), j) = s;
        }
    }
    return c;
}

void affine(const Matrix& w, const Matrix& bias, std::span<const double> x, std::span<double> y) {
    if (w.cols() != x.size() || w.rows() != y.size() || bias.size() != y.size())
        throw ShapeError("affine: weight " + w.shape_string() + " with input " + std::to_string(x.size()));
    const std::size_t out = w.rows(), in = w.cols();
    const long rows = static_cast<long>(out);
#pragma omp parallel for schedule(static) if (out * in > kParallelWork)
    for (long o = 0; o < rows; ++o) {
        const double* wo = w.data() + o * in;
        double s = 0.0;
#pragma omp simd reduction(+ : s)
        for (std::size_t i = 0; i < in; ++i) s += wo[i] * x[i];
        y[static_cast<std::size_t>(o)] = bias.data()[o] + s;
    }
}

void affine_input_grad(const Matrix& w, std::span<const double> dy, std::span<double> dx) {
    const std::size_t out = w.rows(), in = w.cols();
    std::fill(dx.begin(), dx.end(), 0.0);
    for (std::size_t o = 0; o < out; ++o) {
        const double g = dy[o];
        if (g == 0.0) continue;
        const double* wo = w.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) dx[i] += g * wo[i];
    }
}

void affine_param_grad(std::span<const double> dy, std::span<const double> x, Matrix& dw, Matrix& db) {
    const std::size_t out = dw.rows(), in = dw.cols();
    const long rows = static_cast<long>(out);
#pragma omp parallel for schedule(static) if (out * in > kParallelWork)
    for (long o = 0; o < rows; ++o) {
        const double g = dy[static_cast<std::size_t>(o)];
        if (g == 0.0) continue;
        double* wo = dw.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) wo[i] += g * x[i];
        db.data()[o] += g;
    }
}

void softmax_rows(Matrix& m) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double s = 0.0;
        for (double& v : row) {
            v = std::exp(v - mx);
            s += v;
        }
        for (double& v : row) v /= s;
    }
}

namespace serial {

Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.rows(), "matmul", a, b);
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t p = 0; p < a.cols(); ++p)
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += a(i, p) * b(p, j);
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) { return matmul(a.transposed(), b); }

Matrix matmul_nt(const Matrix& a, const Matrix& b) { return matmul(a, b.transposed()); }

void affine(const Matrix& w, const Matrix& bias, std::span<const double> x, std::span<double> y) {
    for (std::size_t o = 0; o < w.rows(); ++o) {
        double s = bias.data()[o];
        for (std::size_t i = 0; i < w.cols(); ++i) s += w(o, i) * x[i];
        y[o] = s;
    }
}

}  // namespace serial

}  // namespace cmcss::kernels
