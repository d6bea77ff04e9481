#pragma once

#include <cstddef>

#include "alfia/matrix.hpp"

// Dense kernels used by the autodiff tape and the evaluation code.
//
// Every kernel has a serial reference and an OpenMP version. The parallel
// versions split work over output rows only and keep the per-element
// accumulation order of the serial code, so both produce bit-identical
// results for any thread count.
namespace alfia::kernels {

namespace serial {
// c += a * b
void matmul(const Matrix& a, const Matrix& b, Matrix& c);
// c += a * b^T
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c);
// c += a^T * b
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c);
// n x n Euclidean distances between the rows of points.
Matrix pairwise_distances(const Matrix& points);
}  // namespace serial

namespace parallel {
void matmul(const Matrix& a, const Matrix& b, Matrix& c);
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c);
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c);
Matrix pairwise_distances(const Matrix& points);
}  // namespace parallel

// Dispatchers: parallel above a work threshold, serial below it.
void matmul(const Matrix& a, const Matrix& b, Matrix& c);
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c);
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c);
Matrix pairwise_distances(const Matrix& points);

Matrix transpose(const Matrix& a);

// Number of OpenMP threads that a parallel region would use (1 without OpenMP).
int max_threads();

}  // namespace alfia::kernels
