#include "lfa/attributes.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <memory>
#include <numbers>

#include "lfa/errors.hpp"

namespace lfa {
namespace {

// Reusable r2c/c2r plan pair for one transform length.
class HilbertPlan {
 public:
  explicit HilbertPlan(std::size_t n) : n_(n) {
    if (n < 4) throw ParameterError("analytic signal needs at least 4 samples, got " + std::to_string(n));
    time_ = static_cast<double*>(fftw_malloc(sizeof(double) * n));
    freq_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)));
    const int len = static_cast<int>(n);
    forward_ = fftw_plan_dft_r2c_1d(len, time_, freq_, FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_1d(len, freq_, time_, FFTW_ESTIMATE);
  }
  ~HilbertPlan() {
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
    fftw_free(time_);
    fftw_free(freq_);
  }
  HilbertPlan(const HilbertPlan&) = delete;
  HilbertPlan& operator=(const HilbertPlan&) = delete;

  void quadrature(const double* in, std::size_t stride, double* out, std::size_t out_stride) {
    for (std::size_t t = 0; t < n_; ++t) time_[t] = in[t * stride];
    fftw_execute(forward_);
    const std::size_t bins = n_ / 2 + 1;
    freq_[0][0] = freq_[0][1] = 0.0;
    if (n_ % 2 == 0) freq_[bins - 1][0] = freq_[bins - 1][1] = 0.0;
    const std::size_t last_positive = (n_ % 2 == 0) ? bins - 2 : bins - 1;
    for (std::size_t k = 1; k <= last_positive; ++k) {
      // (a + ib)(-i) = b - ia
      const double a = freq_[k][0], b = freq_[k][1];
      freq_[k][0] = b;
      freq_[k][1] = -a;
    }
    fftw_execute(inverse_);
    const double scale = 1.0 / double(n_);
    for (std::size_t t = 0; t < n_; ++t) out[t * out_stride] = time_[t] * scale;
  }

 private:
  std::size_t n_;
  double* time_ = nullptr;
  fftw_complex* freq_ = nullptr;
  fftw_plan forward_ = nullptr;
  fftw_plan inverse_ = nullptr;
};

void require_section(const Tensor<double>& s, const char* what) {
  if (s.rank() != 2) throw ShapeError(std::string(what) + ": expected an [H, W] section");
}

// Quadrature of every trace of the section, same layout.
Tensor<double> quadrature_section(const Tensor<double>& s, TraceAxis axis) {
  require_section(s, "instantaneous attribute");
  const std::size_t h = s.dim(0), w = s.dim(1);
  Tensor<double> q(s.shape());
  if (axis == TraceAxis::Columns) {
    HilbertPlan plan(h);
    for (std::size_t x = 0; x < w; ++x) plan.quadrature(s.data() + x, w, q.data() + x, w);
  } else {
    HilbertPlan plan(w);
    for (std::size_t y = 0; y < h; ++y) plan.quadrature(s.data() + y * w, 1, q.data() + y * w, 1);
  }
  return q;
}

double phase_of(double q, double r) {
  if (q == 0.0 && r == 0.0) return 0.0;
  const double p = std::atan2(q, r);
  return p <= -std::numbers::pi ? std::numbers::pi : p;
}

Tensor<double> scaled(const Tensor<double>& t) {
  Tensor<double> out(t.shape());
  if (t.empty()) return out;
  const auto [lo, hi] = std::minmax_element(t.values().begin(), t.values().end());
  if (!(*hi > *lo)) return out;
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = (t[i] - *lo) / (*hi - *lo);
  return out;
}

}  // namespace

TraceAxis parse_trace_axis(std::string_view text) {
  if (text == "columns") return TraceAxis::Columns;
  if (text == "rows") return TraceAxis::Rows;
  throw ConfigError("trace axis must be 'rows' or 'columns', got '" + std::string(text) + "'");
}

std::string_view to_string(TraceAxis axis) { return axis == TraceAxis::Rows ? "rows" : "columns"; }

AnalyticSignal analytic_signal(std::span<const double> trace) {
  HilbertPlan plan(trace.size());
  AnalyticSignal out{std::vector<double>(trace.begin(), trace.end()), std::vector<double>(trace.size())};
  plan.quadrature(trace.data(), 1, out.quadrature.data(), 1);
  return out;
}

Tensor<double> instantaneous_amplitude(const Tensor<double>& section, TraceAxis axis) {
  const auto q = quadrature_section(section, axis);
  Tensor<double> out(section.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::hypot(section[i], q[i]);
  return out;
}

Tensor<double> instantaneous_phase(const Tensor<double>& section, TraceAxis axis) {
  const auto q = quadrature_section(section, axis);
  Tensor<double> out(section.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = phase_of(q[i], section[i]);
  return out;
}

AttributeSection compute_attributes(const Tensor<double>& section, TraceAxis axis, std::string source_id) {
  const auto q = quadrature_section(section, axis);
  AttributeSection a{Tensor<double>(section.shape()), Tensor<double>(section.shape()), std::move(source_id)};
  for (std::size_t i = 0; i < section.size(); ++i) {
    a.amplitude[i] = std::hypot(section[i], q[i]);
    a.phase[i] = phase_of(q[i], section[i]);
  }
  return a;
}

RgbImage compare_panel_image(const Tensor<double>& x, const ConfidenceMap& conf, const AttributeSection& attrs) {
  require_section(x, "compare_panels");
  for (const auto* t : {&conf.values, &attrs.amplitude, &attrs.phase})
    require_shape(t->shape(), x.shape(), "compare_panels");
  const std::size_t h = x.dim(0), w = x.dim(1), m = kPanelMargin;
  RgbImage img(h + 2 * m, 4 * w + 5 * m, 255);
  const Tensor<double> panels[4] = {scaled(x), conf.values, scaled(attrs.amplitude), scaled(attrs.phase)};
  for (std::size_t p = 0; p < 4; ++p)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) {
        const auto c = confidence_color(panels[p][y * w + xx]);
        img.set(m + y, m + p * (w + m) + xx, c[0], c[1], c[2]);
      }
  return img;
}

void compare_panels(const Tensor<double>& x, const ConfidenceMap& conf, const AttributeSection& attrs,
                    const std::filesystem::path& path) {
  write_png(path, compare_panel_image(x, conf, attrs));
}

}  // namespace lfa
