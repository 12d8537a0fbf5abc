#include <doctest.h>

#include <random>

#include "lfa/projection.hpp"
#include "oracles.hpp"

using namespace lfa;

namespace {

Tensor<double> scaled_identity(std::size_t n, double s) {
  Tensor<double> t({n, n});
  for (std::size_t i = 0; i < n; ++i) t[i * n + i] = s;
  return t;
}

Tensor<double> diag_mask(std::size_t n, std::size_t begin, std::size_t end) {
  Tensor<double> t({n, n});
  for (std::size_t i = begin; i < end; ++i) t[i * n + i] = 1.0;
  return t;
}

Tensor<double> random_matrix(std::size_t n, std::mt19937_64& rng) {
  Tensor<double> t({n, n});
  oracle::fill_uniform(t, rng, -1, 1);
  return t;
}

double frob2(const std::vector<double>& m) {
  double s = 0;
  for (double v : m) s += v * v;
  return s;
}

std::vector<double> transpose(const std::vector<double>& m, std::size_t n) {
  std::vector<double> t(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) t[j * n + i] = m[i * n + j];
  return t;
}

std::vector<double> vec(const Tensor<double>& t) { return {t.values().begin(), t.values().end()}; }

// Direct evaluation of the penalty from dense products.
double proj_loss_oracle(const Tensor<double>& a, const Tensor<double>& b) {
  const std::size_t n = a.dim(0);
  const auto p1 = vec(a), p2 = vec(b);
  const auto c12 = oracle::matmul(transpose(p1, n), p2, n);
  const auto c21 = oracle::matmul(transpose(p2, n), p1, n);
  auto i1 = oracle::matmul(p1, p1, n), i2 = oracle::matmul(p2, p2, n);
  for (std::size_t i = 0; i < n * n; ++i) {
    i1[i] -= p1[i];
    i2[i] -= p2[i];
  }
  return frob2(c12) + frob2(c21) + frob2(i1) + frob2(i2);
}

}  // namespace

TEST_CASE("identity and annihilator project to (z, 0)") {
  const ProjectionPair<double> pair{scaled_identity(6, 1.0), Tensor<double>({6, 6})};
  Tensor<double> z({6}, std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
  const auto [z1, z2] = project(pair, z);
  CHECK(z1 == z);
  for (double v : z2.values()) CHECK(v == 0.0);
}

TEST_CASE("complementary coordinate projections split the latent") {
  const std::size_t n = 8;
  const ProjectionPair<double> pair{diag_mask(n, 0, n / 2), diag_mask(n, n / 2, n)};
  const Tensor<double> z({n}, 1.0);
  const auto [z1, z2] = project(pair, z);
  double dot = 0;
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(z1[i] == (i < n / 2 ? 1.0 : 0.0));
    CHECK(z2[i] == (i < n / 2 ? 0.0 : 1.0));
    dot += z1[i] * z2[i];
  }
  CHECK(dot == 0.0);
  CHECK(latent_orthogonality(pair, z) == 0.0);
  CHECK(proj_loss(pair) == 0.0);
}

TEST_CASE("project matches a loop mat-vec oracle") {
  std::mt19937_64 rng(7);
  const std::size_t n = 16;
  const ProjectionPair<double> pair{random_matrix(n, rng), random_matrix(n, rng)};
  Tensor<double> z({3, n});
  oracle::fill_uniform(z, rng, 0, 1);
  const auto [z1, z2] = project(pair, z);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t i = 0; i < n; ++i) {
      double a = 0, b = 0;
      for (std::size_t j = 0; j < n; ++j) {
        a += pair.p1[i * n + j] * z[r * n + j];
        b += pair.p2[i * n + j] * z[r * n + j];
      }
      CHECK(std::abs(z1[r * n + i] - a) < 1e-10);
      CHECK(std::abs(z2[r * n + i] - b) < 1e-10);
    }
  CHECK_THROWS_AS(project(pair, Tensor<double>({3, n + 1})), ShapeError);
  CHECK_THROWS_AS(project(ProjectionPair<double>{random_matrix(n, rng), random_matrix(n + 1, rng)}, z),
                  ShapeError);
}

TEST_CASE("closed-form penalty values") {
  CHECK(proj_loss(ProjectionPair<double>{scaled_identity(5, 1.0), Tensor<double>({5, 5})}) == 0.0);
  CHECK(proj_loss(ProjectionPair<double>{scaled_identity(4, 0.5), scaled_identity(4, 0.5)}) == 1.0);
  CHECK(proj_loss(ProjectionPair<float>{scaled_identity(4, 0.5).cast<float>(),
                                        scaled_identity(4, 0.5).cast<float>()}) == 1.0f);
  CHECK(proj_loss(ProjectionPair<double>{scaled_identity(1024, 1.0), scaled_identity(1024, 1.0)}) == 2048.0);
  CHECK(idempotency_residual(scaled_identity(1024, 1.0)) == 0.0);
  CHECK(idempotency_residual(scaled_identity(4, 0.5)) == 0.5);
  CHECK(idempotency_residual(diag_mask(7, 2, 5)) == 0.0);
}

TEST_CASE("penalty and residuals match dense-product oracles") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = 3 + trial * 3;
    const ProjectionPair<double> pair{random_matrix(n, rng), random_matrix(n, rng)};
    const double want = proj_loss_oracle(pair.p1, pair.p2);
    CHECK(oracle::rel_diff(proj_loss(pair), want) < 1e-10);
    // Symmetric under swapping the pair.
    CHECK(oracle::rel_diff(proj_loss(ProjectionPair<double>{pair.p2, pair.p1}), want) < 1e-12);

    auto sq = oracle::matmul(vec(pair.p1), vec(pair.p1), n);
    for (std::size_t i = 0; i < n * n; ++i) sq[i] -= pair.p1[i];
    const double resid = std::sqrt(frob2(sq)) / std::sqrt(frob2(vec(pair.p1)));
    CHECK(std::abs(idempotency_residual(pair.p1) - resid) < 1e-10);

    const auto cross = oracle::matmul(transpose(vec(pair.p1), n), vec(pair.p2), n);
    CHECK(std::abs(cross_orthogonality(pair) -
                   std::sqrt(frob2(cross) / (frob2(vec(pair.p1)) * frob2(vec(pair.p2))))) < 1e-12);
  }
}

TEST_CASE("latent orthogonality matches a direct dot-product oracle") {
  std::mt19937_64 rng(10);
  const std::size_t n = 12;
  const ProjectionPair<double> pair{random_matrix(n, rng), random_matrix(n, rng)};
  Tensor<double> z({n});
  oracle::fill_uniform(z, rng, 0, 1);
  std::vector<double> a(n, 0.0), b(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      a[i] += pair.p1[i * n + j] * z[j];
      b[i] += pair.p2[i * n + j] * z[j];
    }
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  CHECK(std::abs(latent_orthogonality(pair, z) - std::abs(dot) / std::sqrt(na * nb)) < 1e-12);

  const ProjectionPair<double> same{scaled_identity(n, 1.0), scaled_identity(n, 1.0)};
  CHECK(latent_orthogonality(same, z) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(latent_orthogonality(same, Tensor<double>({n})) == 0.0);  // zero vector, guarded
}

TEST_CASE("zero penalty holds exactly at constructed projector pairs") {
  // Oblique projector pair: P1 = [[1, a], [0, 0]] is idempotent, P2 has P1^T P2 = 0.
  const std::size_t n = 4;
  Tensor<double> p1({n, n}), p2({n, n});
  p1[0] = 1.0;
  p1[1] = 0.5;  // P1 = e0 (e0 + 0.5 e1)^T
  p2[2 * n + 2] = 1.0;
  p2[3 * n + 3] = 1.0;
  const ProjectionPair<double> pair{p1, p2};
  CHECK(idempotency_residual(p1) == 0.0);
  CHECK(idempotency_residual(p2) == 0.0);
  CHECK(cross_orthogonality(pair) == 0.0);
  CHECK(proj_loss(pair) == 0.0);
  std::mt19937_64 rng(11);
  for (int i = 0; i < 10; ++i) {
    Tensor<double> z({n});
    oracle::fill_uniform(z, rng, -1, 1);
    CHECK(latent_orthogonality(pair, z) == 0.0);
  }

  // Each way of breaking it makes the penalty positive.
  auto q = p1;
  q[0] = 0.9;  // no longer idempotent
  CHECK(proj_loss(ProjectionPair<double>{q, p2}) > 0.0);
  auto r = p2;
  r[0 * n + 0] = 1.0;  // overlaps P1
  CHECK(idempotency_residual(r) == 0.0);
  CHECK(proj_loss(ProjectionPair<double>{p1, r}) > 0.0);
}

TEST_CASE("penalty gradient matches central differences at dimension 8") {
  std::mt19937_64 rng(12);
  const std::size_t n = 8;
  ProjectionPair<double> pair{random_matrix(n, rng), random_matrix(n, rng)};
  Tensor<double> g1, g2;
  proj_loss(pair, &g1, &g2);
  const double h = 1e-5;
  double worst = 0;
  for (int which = 0; which < 2; ++which) {
    auto& m = which == 0 ? pair.p1 : pair.p2;
    const auto& g = which == 0 ? g1 : g2;
    for (std::size_t i = 0; i < n * n; ++i) {
      const double saved = m[i];
      m[i] = saved + h;
      const double up = proj_loss(pair);
      m[i] = saved - h;
      const double down = proj_loss(pair);
      m[i] = saved;
      worst = std::max(worst, oracle::rel_diff(g[i], (up - down) / (2 * h)));
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("projection backward matches finite differences") {
  std::mt19937_64 rng(13);
  const std::size_t n = 6, rows = 3;
  ProjectionPair<double> pair{random_matrix(n, rng), random_matrix(n, rng)};
  Tensor<double> z({rows, n}), w1({rows, n}), w2({rows, n});
  oracle::fill_uniform(z, rng, 0, 1);
  oracle::fill_uniform(w1, rng, -1, 1);
  oracle::fill_uniform(w2, rng, -1, 1);
  // Linear probe sum(w1 . z1) + sum(w2 . z2).
  auto probe = [&] {
    const auto [a, b] = project(pair, z);
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += w1[i] * a[i] + w2[i] * b[i];
    return s;
  };
  Tensor<double> dp1({n, n}), dp2({n, n});
  const auto dz = project_backward(pair, z, w1, w2, &dp1, &dp2, true);
  const double h = 1e-6;
  using Slot = std::pair<Tensor<double>*, const Tensor<double>*>;
  for (auto [m, g] : {Slot{&pair.p1, &dp1}, Slot{&pair.p2, &dp2}, Slot{&z, &dz}}) {
    for (std::size_t i = 0; i < m->size(); ++i) {
      const double saved = (*m)[i];
      (*m)[i] = saved + h;
      const double up = probe();
      (*m)[i] = saved - h;
      const double down = probe();
      (*m)[i] = saved;
      CHECK(std::abs((*g)[i] - (up - down) / (2 * h)) < 1e-8);
    }
  }
}
