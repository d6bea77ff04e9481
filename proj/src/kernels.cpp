#include "alfia/kernels.hpp"

#include <cmath>

#include "alfia/error.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace alfia::kernels {
namespace {

constexpr std::size_t kParallelWork = std::size_t{1} << 15;

void check_mm(const Matrix& a, const Matrix& b, const Matrix& c) {
  require(a.cols() == b.rows() && c.rows() == a.rows() && c.cols() == b.cols(),
          "matmul shape mismatch");
}

void check_nt(const Matrix& a, const Matrix& b, const Matrix& c) {
  require(a.cols() == b.cols() && c.rows() == a.rows() && c.cols() == b.rows(),
          "matmul_nt shape mismatch");
}

void check_tn(const Matrix& a, const Matrix& b, const Matrix& c) {
  require(a.rows() == b.rows() && c.rows() == a.cols() && c.cols() == b.cols(),
          "matmul_tn shape mismatch");
}

// Rows [i0, i1) of c += a * b, at most kRowBlock rows. Each c element is
// accumulated as c_ij + a_i0 b_0j + a_i1 b_1j + ... in k order no matter how
// rows and columns are tiled, so serial and parallel results match exactly.
constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kColTile = 8;

template <std::size_t R>
void mm_tile(const double* a, std::size_t lda, const double* b, std::size_t n, std::size_t inner,
             double* c, std::size_t j0) {
  double acc[R][kColTile];
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t jj = 0; jj < kColTile; ++jj) acc[r][jj] = c[r * n + j0 + jj];
  for (std::size_t k = 0; k < inner; ++k) {
    const double* brow = b + k * n + j0;
    for (std::size_t r = 0; r < R; ++r) {
      const double ar = a[r * lda + k];
      for (std::size_t jj = 0; jj < kColTile; ++jj) acc[r][jj] += ar * brow[jj];
    }
  }
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t jj = 0; jj < kColTile; ++jj) c[r * n + j0 + jj] = acc[r][jj];
}

template <std::size_t R>
void mm_block(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i0) {
  const std::size_t inner = a.cols();
  const std::size_t n = b.cols();
  const double* ablk = a.data().data() + i0 * inner;
  const double* bdata = b.data().data();
  double* cblk = c.data().data() + i0 * n;
  std::size_t j0 = 0;
  for (; j0 + kColTile <= n; j0 += kColTile) mm_tile<R>(ablk, inner, bdata, n, inner, cblk, j0);
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t j = j0; j < n; ++j) {
      double acc = cblk[r * n + j];
      for (std::size_t k = 0; k < inner; ++k) acc += ablk[r * inner + k] * bdata[k * n + j];
      cblk[r * n + j] = acc;
    }
  }
}

void mm_rows(const Matrix& a, const Matrix& b, Matrix& c, std::size_t block) {
  const std::size_t i0 = block * kRowBlock;
  switch (std::min(kRowBlock, a.rows() - i0)) {
    case 4: mm_block<4>(a, b, c, i0); break;
    case 3: mm_block<3>(a, b, c, i0); break;
    case 2: mm_block<2>(a, b, c, i0); break;
    default: mm_block<1>(a, b, c, i0); break;
  }
}

std::size_t row_blocks(std::size_t rows) { return (rows + kRowBlock - 1) / kRowBlock; }

inline double row_distance(const Matrix& p, std::size_t i, std::size_t j) {
  const double* a = p.data().data() + i * p.cols();
  const double* b = p.data().data() + j * p.cols();
  double s = 0.0;
  for (std::size_t k = 0; k < p.cols(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace serial {

void matmul(const Matrix& a, const Matrix& b, Matrix& c) {
  check_mm(a, b, c);
  for (std::size_t blk = 0; blk < row_blocks(a.rows()); ++blk) mm_rows(a, b, c, blk);
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  check_nt(a, b, c);
  const Matrix bt = transpose(b);
  for (std::size_t blk = 0; blk < row_blocks(a.rows()); ++blk) mm_rows(a, bt, c, blk);
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  check_tn(a, b, c);
  const Matrix at = transpose(a);
  for (std::size_t blk = 0; blk < row_blocks(at.rows()); ++blk) mm_rows(at, b, c, blk);
}

Matrix pairwise_distances(const Matrix& points) {
  const std::size_t n = points.rows();
  Matrix d(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) d(i, j) = i == j ? 0.0 : row_distance(points, i, j);
  return d;
}

}  // namespace serial

namespace parallel {

void matmul(const Matrix& a, const Matrix& b, Matrix& c) {
  check_mm(a, b, c);
  const auto blocks = static_cast<std::ptrdiff_t>(row_blocks(a.rows()));
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) mm_rows(a, b, c, static_cast<std::size_t>(blk));
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  check_nt(a, b, c);
  const Matrix bt = transpose(b);
  const auto blocks = static_cast<std::ptrdiff_t>(row_blocks(a.rows()));
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) mm_rows(a, bt, c, static_cast<std::size_t>(blk));
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  check_tn(a, b, c);
  const Matrix at = transpose(a);
  const auto blocks = static_cast<std::ptrdiff_t>(row_blocks(at.rows()));
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) mm_rows(at, b, c, static_cast<std::size_t>(blk));
}

Matrix pairwise_distances(const Matrix& points) {
  const auto n = static_cast<std::ptrdiff_t>(points.rows());
  Matrix d(points.rows(), points.rows());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    for (std::ptrdiff_t j = 0; j < n; ++j)
      d(i, j) = i == j ? 0.0 : row_distance(points, static_cast<std::size_t>(i),
                                            static_cast<std::size_t>(j));
  return d;
}

}  // namespace parallel

namespace {
bool worth_parallel(std::size_t rows, std::size_t work) {
#ifdef _OPENMP
  // Callers that already run in a parallel region (per-example training)
  // keep their kernels serial.
  if (omp_in_parallel()) return false;
#endif
  return max_threads() > 1 && rows >= 8 && work >= kParallelWork;
}
}  // namespace

void matmul(const Matrix& a, const Matrix& b, Matrix& c) {
  if (worth_parallel(a.rows(), a.rows() * a.cols() * b.cols()))
    parallel::matmul(a, b, c);
  else
    serial::matmul(a, b, c);
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  if (worth_parallel(a.rows(), a.rows() * a.cols() * b.rows()))
    parallel::matmul_nt(a, b, c);
  else
    serial::matmul_nt(a, b, c);
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  if (worth_parallel(a.cols(), a.rows() * a.cols() * b.cols()))
    parallel::matmul_tn(a, b, c);
  else
    serial::matmul_tn(a, b, c);
}

Matrix pairwise_distances(const Matrix& points) {
  const std::size_t n = points.rows();
  if (worth_parallel(n, n * n * points.cols())) return parallel::pairwise_distances(points);
  return serial::pairwise_distances(points);
}

}  // namespace alfia::kernels
