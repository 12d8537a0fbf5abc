#pragma once

#include <utility>

#include "lfa/tensor.hpp"

namespace lfa {

inline constexpr double kDiagnosticEps = 1e-12;

// The learnable latent factorization: two square matrices, stored in
// checkpoints as "proj.P1" and "proj.P2".
template <typename T>
struct ProjectionPair {
  Tensor<T> p1;
  Tensor<T> p2;

  std::size_t dim() const { return p1.rank() == 2 ? p1.dim(0) : 0; }
  void validate() const;
};

// z [N, n] (or [n]) -> (z P1^T, z P2^T), i.e. z1 = P1 z and z2 = P2 z per row.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> project(const ProjectionPair<T>& pair, const Tensor<T>& z);

// Backward of project for a batch: accumulates dP1 = dz1^T z and
// dP2 = dz2^T z into the optional outputs and returns dz = dz1 P1 + dz2 P2.
template <typename T>
Tensor<T> project_backward(const ProjectionPair<T>& pair, const Tensor<T>& z, const Tensor<T>& dz1,
                           const Tensor<T>& dz2, Tensor<T>* dp1, Tensor<T>* dp2, bool need_dz = true);

// L_proj = 2 ||P1^T P2||_F^2 + ||P1^2 - P1||_F^2 + ||P2^2 - P2||_F^2.
// The factor 2 counts both ordered cross pairs (1,2) and (2,1). When the
// gradient outputs are given they receive dL/dP1 and dL/dP2 (overwritten).
template <typename T>
T proj_loss(const ProjectionPair<T>& pair, Tensor<T>* grad_p1 = nullptr, Tensor<T>* grad_p2 = nullptr);

// ||P^2 - P||_F / max(||P||_F, eps).
template <typename T>
T idempotency_residual(const Tensor<T>& p);

// ||P1^T P2||_F / max(||P1||_F ||P2||_F, eps).
template <typename T>
T cross_orthogonality(const ProjectionPair<T>& pair);

// |z1^T z2| / max(||z1|| ||z2||, eps) for a single latent z [n].
template <typename T>
T latent_orthogonality(const ProjectionPair<T>& pair, const Tensor<T>& z);

// Mean of latent_orthogonality over the rows of z [N, n].
template <typename T>
T mean_latent_orthogonality(const ProjectionPair<T>& pair, const Tensor<T>& z);

}  // namespace lfa
