#pragma once

#include "cmcss/matrix.hpp"

// Dense kernels used by the encoders. Parallel kernels split work over output
// rows, so results do not depend on the thread count. Inner reductions are
// vectorised and may differ from the scalar serial references in the last
// few bits.
namespace cmcss::kernels {

// C = A * B
Matrix matmul(const Matrix& a, const Matrix& b);
// C = A^T * B
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// C = A * B^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// C += A^T * B
void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& c);

// y = W x + b, W is out x in.
void affine(const Matrix& w, const Matrix& bias, std::span<const double> x, std::span<double> y);
// dx = W^T dy
void affine_input_grad(const Matrix& w, std::span<const double> dy, std::span<double> dx);
// dW += dy x^T, db += dy
void affine_param_grad(std::span<const double> dy, std::span<const double> x, Matrix& dw, Matrix& db);

// Row-wise softmax in place.
void softmax_rows(Matrix& m);

namespace serial {
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
void affine(const Matrix& w, const Matrix& bias, std::span<const double> x, std::span<double> y);
}  // namespace serial

}  // namespace cmcss::kernels
