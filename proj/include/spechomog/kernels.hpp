#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace spechomog {

using Vec = Eigen::VectorXd;
using DenseMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Compressed sparse row matrix. Column indices within a row are kept in
/// assembly order; every kernel sums a row in that order, so serial and
/// parallel paths produce identical bits.
struct Csr {
  int rows = 0;
  int cols = 0;
  std::vector<std::int64_t> row_ptr{0};
  std::vector<int> col;
  std::vector<double> val;

  std::int64_t nnz() const { return static_cast<std::int64_t>(val.size()); }
  double diagonal(int i) const;
  Csr transposed() const;
  DenseMatrix to_dense() const;
  Eigen::SparseMatrix<double> to_eigen() const;
};

namespace kernels {

void dense_matvec_serial(const DenseMatrix& A, std::span<const double> x, std::span<double> y);
void dense_matvec(const DenseMatrix& A, std::span<const double> x, std::span<double> y);

void csr_matvec_serial(const Csr& A, std::span<const double> x, std::span<double> y);
void csr_matvec(const Csr& A, std::span<const double> x, std::span<double> y);

// y = s x - A x, the shifted Perron operator.
void shifted_csr_matvec(const Csr& A, double shift, std::span<const double> x, std::span<double> y);

// Row-block assembly driver: fill(i, row) writes row i. Rows are produced
// in parallel and concatenated in row order.
template <class RowFill>
Csr assemble_rows(int rows, int cols, RowFill&& fill, bool parallel = true);

int thread_count();
void set_thread_count(int k);

}  // namespace kernels

// ---------------------------------------------------------------------------

struct CsrRow {
  std::vector<int> col;
  std::vector<double> val;
  void push(int c, double v) {
    col.push_back(c);
    val.push_back(v);
  }
};

template <class RowFill>
Csr kernels::assemble_rows(int rows, int cols, RowFill&& fill, bool parallel) {
  std::vector<CsrRow> parts(rows);
  if (parallel) {
#pragma omp parallel for schedule(dynamic, 16)
    for (int i = 0; i < rows; ++i) fill(i, parts[i]);
  } else {
    for (int i = 0; i < rows; ++i) fill(i, parts[i]);
  }
  Csr m;
  m.rows = rows;
  m.cols = cols;
  m.row_ptr.assign(rows + 1, 0);
  for (int i = 0; i < rows; ++i) m.row_ptr[i + 1] = m.row_ptr[i] + static_cast<std::int64_t>(parts[i].col.size());
  m.col.resize(m.row_ptr[rows]);
  m.val.resize(m.row_ptr[rows]);
  for (int i = 0; i < rows; ++i) {
    std::copy(parts[i].col.begin(), parts[i].col.end(), m.col.begin() + m.row_ptr[i]);
    std::copy(parts[i].val.begin(), parts[i].val.end(), m.val.begin() + m.row_ptr[i]);
  }
  return m;
}

}  // namespace spechomog
