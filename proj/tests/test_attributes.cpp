#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "lfa/attributes.hpp"
#include "lfa/errors.hpp"
#include "oracles.hpp"

using namespace lfa;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> random_trace(std::size_t t, std::mt19937_64& rng) {
  std::vector<double> x(t);
  std::uniform_real_distribution<double> d(-1, 1);
  for (auto& v : x) v = d(rng);
  return x;
}

std::vector<double> quad(const std::vector<double>& x) { return analytic_signal(x).quadrature; }

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Columns are traces: column c of an H x W section.
std::vector<double> column(const Tensor<double>& s, std::size_t c) {
  std::vector<double> out(s.dim(0));
  for (std::size_t r = 0; r < s.dim(0); ++r) out[r] = s[r * s.dim(1) + c];
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("quadrature of cosines is the matching sine") {
  for (std::size_t t : {16u, 63u, 64u, 100u}) {
    for (std::size_t k = 1; 2 * k < t; k += 3) {
      std::vector<double> c(t), s(t);
      for (std::size_t j = 0; j < t; ++j) {
        c[j] = std::cos(2 * kPi * double(k * j) / double(t));
        s[j] = std::sin(2 * kPi * double(k * j) / double(t));
      }
      const auto a = analytic_signal(c);
      CHECK(a.real == c);
      CHECK(max_abs_diff(a.quadrature, s) < 1e-10);
    }
  }
}

TEST_CASE("quadrature matches an explicit DFT oracle") {
  std::mt19937_64 rng(1);
  for (std::size_t t : {4u, 5u, 17u, 32u, 99u}) {
    const auto x = random_trace(t, rng);
    CHECK(max_abs_diff(quad(x), oracle::hilbert(x)) < 1e-8);
  }
  for (double v : quad(std::vector<double>(12, 0.0))) CHECK(v == 0.0);
  CHECK_THROWS_AS(analytic_signal(std::vector<double>(3, 1.0)), ParameterError);
}

TEST_CASE("Hilbert transform is linear and anti-involutive on DC-free, Nyquist-free traces") {
  std::mt19937_64 rng(2);
  const std::size_t t = 48;
  const auto x = random_trace(t, rng), y = random_trace(t, rng);
  std::vector<double> mix(t);
  for (std::size_t i = 0; i < t; ++i) mix[i] = 2.5 * x[i] - 0.75 * y[i];
  const auto hx = quad(x), hy = quad(y), hm = quad(mix);
  for (std::size_t i = 0; i < t; ++i) CHECK(std::abs(hm[i] - (2.5 * hx[i] - 0.75 * hy[i])) < 1e-10);

  // The first application strips DC and Nyquist, so H(H(H(x))) = -H(x).
  const auto clean = hx;
  const auto twice = quad(quad(clean));
  for (std::size_t i = 0; i < t; ++i) CHECK(std::abs(twice[i] + clean[i]) < 1e-8);
}

TEST_CASE("pure cosine sections have unit envelope") {
  const std::size_t h = 64, w = 5;
  Tensor<double> s({h, w});
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) s[r * w + c] = std::cos(2 * kPi * double((c + 3) * r) / double(h));
  const auto amp = instantaneous_amplitude(s, TraceAxis::Columns);
  for (std::size_t r = 4; r + 4 < h; ++r)
    for (std::size_t c = 0; c < w; ++c) CHECK(std::abs(amp[r * w + c] - 1.0) < 0.02);
  const auto ph = instantaneous_phase(s, TraceAxis::Columns);
  for (std::size_t c = 0; c < w; ++c) CHECK(std::abs(ph[c]) < 1e-10);  // cos = 1 at r = 0

  for (double v : oracle::values_of(instantaneous_amplitude(Tensor<double>({8, 8})))) CHECK(v == 0.0);
  for (double v : oracle::values_of(instantaneous_phase(Tensor<double>({8, 8})))) CHECK(v == 0.0);
  CHECK_THROWS_AS(instantaneous_amplitude(Tensor<double>({3, 8}), TraceAxis::Columns), ParameterError);
  CHECK_NOTHROW(instantaneous_amplitude(Tensor<double>({3, 8}), TraceAxis::Rows));
}

TEST_CASE("attributes of chirp and random sections match per-trace oracles") {
  const std::size_t h = 40, w = 6;
  Tensor<double> chirp({h, w});
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const double t = double(r) / double(h);
      chirp[r * w + c] = std::cos(2 * kPi * (2.0 + double(c)) * t * (1 + 2 * t));
    }
  std::mt19937_64 rng(3);
  Tensor<double> noise({h, w});
  oracle::fill_uniform(noise, rng, -1, 1);

  for (const auto* s : {&chirp, &noise}) {
    const auto attrs = compute_attributes(*s, TraceAxis::Columns, "id");
    CHECK(attrs.source_id == "id");
    for (std::size_t c = 0; c < w; ++c) {
      const auto x = column(*s, c);
      const auto q = oracle::hilbert(x);
      for (std::size_t r = 0; r < h; ++r) {
        CHECK(std::abs(attrs.amplitude[r * w + c] - std::hypot(x[r], q[r])) < 1e-6);
        CHECK(std::abs(attrs.phase[r * w + c] - std::atan2(q[r], x[r])) < 1e-8);
        CHECK(attrs.amplitude[r * w + c] >= std::abs(x[r]) - 1e-8);
        CHECK(attrs.phase[r * w + c] > -kPi);
        CHECK(attrs.phase[r * w + c] <= kPi);
      }
    }
  }

  // Row traces are the transpose problem.
  Tensor<double> t({w, h});
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) t[c * h + r] = noise[r * w + c];
  const auto by_rows = instantaneous_amplitude(t, TraceAxis::Rows);
  const auto by_cols = instantaneous_amplitude(noise, TraceAxis::Columns);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) CHECK(std::abs(by_rows[c * h + r] - by_cols[r * w + c]) < 1e-12);
}

TEST_CASE("trace axis parsing") {
  CHECK(parse_trace_axis("rows") == TraceAxis::Rows);
  CHECK(parse_trace_axis("columns") == TraceAxis::Columns);
  CHECK(to_string(TraceAxis::Rows) == "rows");
  CHECK_THROWS_AS(parse_trace_axis("diagonal"), ConfigError);
}

TEST_CASE("comparison panel layout and determinism") {
  const std::size_t h = 16, w = 20, m = kPanelMargin;
  std::mt19937_64 rng(4);
  Tensor<double> x({h, w});
  oracle::fill_uniform(x, rng, -1, 1);
  const auto attrs = compute_attributes(x);
  const auto conf = confidence_map(instantaneous_amplitude(x), 1);
  const auto img = compare_panel_image(x, conf, attrs);
  CHECK(img.width == 4 * w + 5 * m);
  CHECK(img.height == h + 2 * m);

  const auto dir = fs::temp_directory_path() / "lfa_test_compare";
  fs::remove_all(dir);
  fs::create_directories(dir);
  compare_panels(x, conf, attrs, dir / "a.png");
  compare_panels(x, conf, attrs, dir / "b.png");
  CHECK(slurp(dir / "a.png") == slurp(dir / "b.png"));

  // Degenerate all-zero input: every panel at the colormap zero.
  const Tensor<double> zero({h, w});
  const auto zimg = compare_panel_image(zero, confidence_map(zero), compute_attributes(zero));
  const auto c0 = confidence_color(0.0);
  for (std::size_t p = 0; p < 4; ++p) {
    const std::size_t col = m + p * (w + m) + w / 2, row = m + h / 2;
    const auto* px = &zimg.pixels[(row * zimg.width + col) * 3];
    CHECK(px[0] == c0[0]);
    CHECK(px[1] == c0[1]);
    CHECK(px[2] == c0[2]);
  }
  CHECK_THROWS_AS(compare_panel_image(x, confidence_map(Tensor<double>({h, w + 1})), attrs), ShapeError);
}
