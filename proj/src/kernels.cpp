#include "spechomog/kernels.hpp"

#include <omp.h>

namespace spechomog {

double Csr::diagonal(int i) const {
  double d = 0.0;
  for (auto k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
    if (col[k] == i) d += val[k];
  return d;
}

Csr Csr::transposed() const {
  Csr t;
  t.rows = cols;
  t.cols = rows;
  t.row_ptr.assign(cols + 1, 0);
  for (int c : col) ++t.row_ptr[c + 1];
  for (int i = 0; i < cols; ++i) t.row_ptr[i + 1] += t.row_ptr[i];
  t.col.resize(val.size());
  t.val.resize(val.size());
  std::vector<std::int64_t> next(t.row_ptr.begin(), t.row_ptr.end() - 1);
  for (int i = 0; i < rows; ++i) {
    for (auto k = row_ptr[i]; k < row_ptr[i + 1]; ++k) {
      const auto dst = next[col[k]]++;
      t.col[dst] = i;
      t.val[dst] = val[k];
    }
  }
  return t;
}

DenseMatrix Csr::to_dense() const {
  DenseMatrix d = DenseMatrix::Zero(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (auto k = row_ptr[i]; k < row_ptr[i + 1]; ++k) d(i, col[k]) += val[k];
  return d;
}

Eigen::SparseMatrix<double> Csr::to_eigen() const {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(val.size());
  for (int i = 0; i < rows; ++i)
    for (auto k = row_ptr[i]; k < row_ptr[i + 1]; ++k) trip.emplace_back(i, col[k], val[k]);
  Eigen::SparseMatrix<double> m(rows, cols);
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

namespace kernels {

void dense_matvec_serial(const DenseMatrix& A, std::span<const double> x, std::span<double> y) {
  const auto n = A.cols();
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    const double* row = A.data() + i * n;
    double s = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) s += row[j] * x[j];
    y[i] = s;
  }
}

void dense_matvec(const DenseMatrix& A, std::span<const double> x, std::span<double> y) {
  const auto n = A.cols();
  const auto m = A.rows();
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < m; ++i) {
    const double* row = A.data() + i * n;
    double s = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) s += row[j] * x[j];
    y[i] = s;
  }
}

void csr_matvec_serial(const Csr& A, std::span<const double> x, std::span<double> y) {
  for (int i = 0; i < A.rows; ++i) {
    double s = 0.0;
    for (auto k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k) s += A.val[k] * x[A.col[k]];
    y[i] = s;
  }
}

void csr_matvec(const Csr& A, std::span<const double> x, std::span<double> y) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < A.rows; ++i) {
    double s = 0.0;
    for (auto k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k) s += A.val[k] * x[A.col[k]];
    y[i] = s;
  }
}

void shifted_csr_matvec(const Csr& A, double shift, std::span<const double> x, std::span<double> y) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < A.rows; ++i) {
    double s = 0.0;
    for (auto k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k) s += A.val[k] * x[A.col[k]];
    y[i] = shift * x[i] - s;
  }
}

int thread_count() { return omp_get_max_threads(); }

void set_thread_count(int k) {
  if (k > 0) omp_set_num_threads(k);
}

}  // namespace kernels
}  // namespace spechomog
