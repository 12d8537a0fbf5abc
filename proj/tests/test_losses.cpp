#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "lfa/losses.hpp"
#include "oracles.hpp"

using namespace lfa;

namespace {

constexpr double kFloor = 1e-6;
const double kLn2 = std::numbers::ln2;

Tensor<double> probs(std::size_t n, std::mt19937_64& rng) {
  Tensor<double> t({n});
  oracle::fill_uniform(t, rng, 0.05, 0.95);
  return t;
}

double mean_log(const Tensor<double>& t, bool complement) {
  double s = 0;
  for (double v : t.values()) s += std::log(complement ? 1 - v : v);
  return s / double(t.size());
}

// Central differences of f w.r.t. every entry of x against g.
double fd_error(Tensor<double>& x, const Tensor<double>& g, const std::function<double()>& f) {
  const double h = 1e-6;
  double worst = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f();
    x[i] = saved - h;
    const double down = f();
    x[i] = saved;
    worst = std::max(worst, oracle::rel_diff(g[i], (up - down) / (2 * h)));
  }
  return worst;
}

}  // namespace

TEST_CASE("reconstruction loss") {
  std::mt19937_64 rng(1);
  Tensor<double> x({3, 4, 4}), r({3, 4, 4});
  oracle::fill_uniform(x, rng, -1, 1);
  oracle::fill_uniform(r, rng, -1, 1);
  CHECK(rec_loss(x, x) == 0.0);
  CHECK(rec_loss(Tensor<double>({2, 4, 4}, 1.0), Tensor<double>({2, 4, 4})) == 1.0);

  double s = 0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t p = 0; p < 16; ++p) s += (x[i * 16 + p] - r[i * 16 + p]) * (x[i * 16 + p] - r[i * 16 + p]);
  CHECK(std::abs(rec_loss(x, r) - s / 48) < 1e-10);
  CHECK(rec_loss(x, r) >= 0.0);

  Tensor<double> g;
  rec_loss(x, r, &g);
  CHECK(fd_error(r, g, [&] { return rec_loss(x, r); }) < 1e-5);
  CHECK_THROWS_AS(rec_loss(x, Tensor<double>({3, 4, 5})), ShapeError);
}

TEST_CASE("image adversarial losses") {
  const Tensor<double> half({6}, 0.5);
  CHECK(adv1_discriminator_loss(half, half) == doctest::Approx(2 * kLn2).epsilon(1e-14));
  CHECK(adv1_generator_loss(half) == doctest::Approx(-kLn2).epsilon(1e-14));
  const Tensor<double> hi({6}, 1 - kFloor), lo({6}, kFloor);
  CHECK(adv1_discriminator_loss(hi, lo) == doctest::Approx(-2 * std::log(1 - kFloor)).epsilon(1e-9));
  CHECK(adv1_discriminator_loss(hi, lo) < 1e-5);
  CHECK(adv1_generator_loss(hi) == doctest::Approx(std::log(kFloor)).epsilon(1e-9));
  CHECK(adv1_generator_loss(hi) == doctest::Approx(-13.8155).epsilon(1e-5));

  std::mt19937_64 rng(2);
  auto real = probs(7, rng), fake = probs(7, rng);
  CHECK(std::abs(adv1_discriminator_loss(real, fake) - -(mean_log(real, false) + mean_log(fake, true))) < 1e-12);
  CHECK(std::abs(adv1_generator_loss(fake) - mean_log(fake, true)) < 1e-12);
  CHECK(std::abs(adv1_generator_loss<double>(fake, nullptr, true) - -mean_log(fake, false)) < 1e-12);

  Tensor<double> gr, gf, gg, gn;
  adv1_discriminator_loss(real, fake, &gr, &gf);
  CHECK(fd_error(real, gr, [&] { return adv1_discriminator_loss(real, fake); }) < 1e-5);
  CHECK(fd_error(fake, gf, [&] { return adv1_discriminator_loss(real, fake); }) < 1e-5);
  adv1_generator_loss(fake, &gg);
  CHECK(fd_error(fake, gg, [&] { return adv1_generator_loss(fake); }) < 1e-5);
  adv1_generator_loss(fake, &gn, true);
  CHECK(fd_error(fake, gn, [&] { return adv1_generator_loss<double>(fake, nullptr, true); }) < 1e-5);
}

TEST_CASE("latent adversarial losses") {
  const Tensor<double> half({5}, 0.5);
  CHECK(adv2_discriminator_loss(half, half) == doctest::Approx(2 * kLn2).epsilon(1e-14));
  CHECK(adv2_encoder_loss(half) == doctest::Approx(-kLn2).epsilon(1e-14));
  const Tensor<double> hi({5}, 1 - kFloor), lo({5}, kFloor);
  CHECK(adv2_discriminator_loss(hi, lo) < 1e-5);
  CHECK(adv2_encoder_loss(lo) == doctest::Approx(-13.8155).epsilon(1e-5));

  std::mt19937_64 rng(3);
  auto enc = probs(9, rng), uni = probs(9, rng);
  CHECK(std::abs(adv2_discriminator_loss(enc, uni) - -(mean_log(enc, false) + mean_log(uni, true))) < 1e-12);
  CHECK(std::abs(adv2_encoder_loss(enc) - mean_log(enc, false)) < 1e-12);

  Tensor<double> ge, gu, gz;
  adv2_discriminator_loss(enc, uni, &ge, &gu);
  CHECK(fd_error(enc, ge, [&] { return adv2_discriminator_loss(enc, uni); }) < 1e-5);
  CHECK(fd_error(uni, gu, [&] { return adv2_discriminator_loss(enc, uni); }) < 1e-5);
  adv2_encoder_loss(enc, &gz);
  CHECK(fd_error(enc, gz, [&] { return adv2_encoder_loss(enc); }) < 1e-5);
}

TEST_CASE("adversarial losses ignore batch order") {
  std::mt19937_64 rng(4);
  auto a = probs(8, rng), b = probs(8, rng);
  auto pa = a, pb = b;
  std::reverse(pa.values().begin(), pa.values().end());
  std::rotate(pb.values().begin(), pb.values().begin() + 3, pb.values().end());
  CHECK(adv1_discriminator_loss(a, b) == doctest::Approx(adv1_discriminator_loss(pa, pb)).epsilon(1e-14));
  CHECK(adv2_discriminator_loss(a, b) == doctest::Approx(adv2_discriminator_loss(pa, pb)).epsilon(1e-14));
  CHECK(adv1_generator_loss(b) == doctest::Approx(adv1_generator_loss(pb)).epsilon(1e-14));
  CHECK(adv2_encoder_loss(a) == doctest::Approx(adv2_encoder_loss(pa)).epsilon(1e-14));
}

TEST_CASE("branch difference loss") {
  std::mt19937_64 rng(5);
  Tensor<double> y1({3, 4, 4}), y2({3, 4, 4});
  oracle::fill_uniform(y1, rng, -1, 1);
  oracle::fill_uniform(y2, rng, -1, 1);
  CHECK(diff_loss(y1, y1) == 0.0);
  CHECK(diff_loss(Tensor<double>({1, 4, 4}, 1.0), Tensor<double>({1, 4, 4})) == -1.0);

  double s = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    double img = 0;
    for (std::size_t p = 0; p < 16; ++p) img += std::abs(y1[i * 16 + p] - y2[i * 16 + p]);
    s += img / 16;
  }
  CHECK(std::abs(diff_loss(y1, y2) - -s) < 1e-10);
  CHECK(diff_loss(y1, y2) <= 0.0);

  Tensor<double> g1, g2;
  diff_loss(y1, y2, &g1, &g2);
  CHECK(fd_error(y1, g1, [&] { return diff_loss(y1, y2); }) < 1e-5);
  CHECK(fd_error(y2, g2, [&] { return diff_loss(y1, y2); }) < 1e-5);
  diff_loss(y1, y1, &g1, &g2);
  for (double v : g1.values()) CHECK(v == 0.0);
  CHECK_THROWS_AS(diff_loss(y1, Tensor<double>({2, 4, 4})), ShapeError);
}

TEST_CASE("loss bundle arithmetic") {
  LossBundle a{1, 2, 3, 4, 5, -6, 7};
  LossBundle b = a;
  b += a;
  b /= 2.0;
  CHECK(b.l_rec == 1.0);
  CHECK(b.l_diff == -6.0);
  CHECK(b.all_finite());
  b.l_proj = std::nan("");
  CHECK_FALSE(b.all_finite());
}
