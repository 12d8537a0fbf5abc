#include "lfa/projection.hpp"

#include <algorithm>
#include <cmath>

namespace lfa {
namespace {

template <typename T>
std::size_t rows_of(const Tensor<T>& z, std::size_t n) {
  if (z.rank() == 1 && z.dim(0) == n) return 1;
  if (z.rank() == 2 && z.dim(1) == n) return z.dim(0);
  throw ShapeError("projection: latent shape " + shape_string(z.shape()) + " does not match dimension " +
                   std::to_string(n));
}

}  // namespace

template <typename T>
void ProjectionPair<T>::validate() const {
  if (p1.rank() != 2 || p1.dim(0) != p1.dim(1))
    throw ShapeError("projection: P1 must be square, got " + shape_string(p1.shape()));
  if (p2.shape() != p1.shape())
    throw ShapeError("projection: P2 shape " + shape_string(p2.shape()) + " differs from P1 " +
                     shape_string(p1.shape()));
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> project(const ProjectionPair<T>& pair, const Tensor<T>& z) {
  pair.validate();
  const std::size_t n = pair.dim();
  const std::size_t rows = rows_of(z, n);
  Tensor<T> z1(z.shape()), z2(z.shape());
  const auto zm = as_matrix(z, rows);
  as_matrix(z1, rows).noalias() = zm * as_matrix(pair.p1, n).transpose();
  as_matrix(z2, rows).noalias() = zm * as_matrix(pair.p2, n).transpose();
  return {std::move(z1), std::move(z2)};
}

template <typename T>
Tensor<T> project_backward(const ProjectionPair<T>& pair, const Tensor<T>& z, const Tensor<T>& dz1,
                           const Tensor<T>& dz2, Tensor<T>* dp1, Tensor<T>* dp2, bool need_dz) {
  const std::size_t n = pair.dim();
  const std::size_t rows = rows_of(z, n);
  require_shape(dz1.shape(), z.shape(), "project_backward dz1");
  require_shape(dz2.shape(), z.shape(), "project_backward dz2");
  const auto zm = as_matrix(z, rows);
  const auto d1 = as_matrix(dz1, rows);
  const auto d2 = as_matrix(dz2, rows);
  if (dp1) as_matrix(*dp1, n).noalias() += d1.transpose() * zm;
  if (dp2) as_matrix(*dp2, n).noalias() += d2.transpose() * zm;
  if (!need_dz) return {};
  Tensor<T> dz(z.shape());
  auto dzm = as_matrix(dz, rows);
  dzm.noalias() = d1 * as_matrix(pair.p1, n);
  dzm.noalias() += d2 * as_matrix(pair.p2, n);
  return dz;
}

template <typename T>
T proj_loss(const ProjectionPair<T>& pair, Tensor<T>* grad_p1, Tensor<T>* grad_p2) {
  pair.validate();
  const std::size_t n = pair.dim();
  const auto p1 = as_matrix(pair.p1, n);
  const auto p2 = as_matrix(pair.p2, n);
  RowMatrix<T> cross = p1.transpose() * p2;
  RowMatrix<T> a1 = p1 * p1;
  a1 -= p1;
  RowMatrix<T> a2 = p2 * p2;
  a2 -= p2;
  const T value = T(2) * cross.squaredNorm() + a1.squaredNorm() + a2.squaredNorm();
  if (grad_p1) {
    *grad_p1 = Tensor<T>({n, n});
    auto g = as_matrix(*grad_p1, n);
    g.noalias() = T(4) * (p2 * cross.transpose());
    g.noalias() += T(2) * (a1 * p1.transpose());
    g.noalias() += T(2) * (p1.transpose() * a1);
    g -= T(2) * a1;
  }
  if (grad_p2) {
    *grad_p2 = Tensor<T>({n, n});
    auto g = as_matrix(*grad_p2, n);
    g.noalias() = T(4) * (p1 * cross);
    g.noalias() += T(2) * (a2 * p2.transpose());
    g.noalias() += T(2) * (p2.transpose() * a2);
    g -= T(2) * a2;
  }
  return value;
}

template <typename T>
T idempotency_residual(const Tensor<T>& p) {
  if (p.rank() != 2 || p.dim(0) != p.dim(1))
    throw ShapeError("idempotency_residual: expected a square matrix, got " + shape_string(p.shape()));
  const std::size_t n = p.dim(0);
  const auto m = as_matrix(p, n);
  RowMatrix<T> a = m * m;
  a -= m;
  return a.norm() / std::max(m.norm(), static_cast<T>(kDiagnosticEps));
}

template <typename T>
T cross_orthogonality(const ProjectionPair<T>& pair) {
  pair.validate();
  const std::size_t n = pair.dim();
  const auto p1 = as_matrix(pair.p1, n);
  const auto p2 = as_matrix(pair.p2, n);
  const RowMatrix<T> cross = p1.transpose() * p2;
  return cross.norm() / std::max(p1.norm() * p2.norm(), static_cast<T>(kDiagnosticEps));
}

template <typename T>
T latent_orthogonality(const ProjectionPair<T>& pair, const Tensor<T>& z) {
  if (z.rank() != 1) throw ShapeError("latent_orthogonality: expected a single latent vector");
  return mean_latent_orthogonality(pair, z);
}

template <typename T>
T mean_latent_orthogonality(const ProjectionPair<T>& pair, const Tensor<T>& z) {
  auto [z1, z2] = project(pair, z);
  const std::size_t n = pair.dim();
  const std::size_t rows = rows_of(z, n);
  const auto a = as_matrix(z1, rows);
  const auto b = as_matrix(z2, rows);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double dot = std::abs(static_cast<double>(a.row(r).dot(b.row(r))));
    const double scale = static_cast<double>(a.row(r).norm()) * static_cast<double>(b.row(r).norm());
    total += dot / std::max(scale, kDiagnosticEps);
  }
  return static_cast<T>(rows ? total / static_cast<double>(rows) : 0.0);
}

#define LFA_INSTANTIATE(T)                                                                        \
  template struct ProjectionPair<T>;                                                              \
  template std::pair<Tensor<T>, Tensor<T>> project<T>(const ProjectionPair<T>&, const Tensor<T>&); \
  template Tensor<T> project_backward<T>(const ProjectionPair<T>&, const Tensor<T>&,               \
                                         const Tensor<T>&, const Tensor<T>&, Tensor<T>*,            \
                                         Tensor<T>*, bool);                                         \
  template T proj_loss<T>(const ProjectionPair<T>&, Tensor<T>*, Tensor<T>*);                       \
  template T idempotency_residual<T>(const Tensor<T>&);                                            \
  template T cross_orthogonality<T>(const ProjectionPair<T>&);                                     \
  template T latent_orthogonality<T>(const ProjectionPair<T>&, const Tensor<T>&);                  \
  template T mean_latent_orthogonality<T>(const ProjectionPair<T>&, const Tensor<T>&);

LFA_INSTANTIATE(float)
LFA_INSTANTIATE(double)

#undef LFA_INSTANTIATE

}  // namespace lfa
