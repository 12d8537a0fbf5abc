#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lfa/annotator.hpp"
#include "lfa/tensor.hpp"

namespace lfa {

// Traces run down columns (vertical time axis) or along rows.
enum class TraceAxis { Rows, Columns };

TraceAxis parse_trace_axis(std::string_view text);
std::string_view to_string(TraceAxis axis);

struct AnalyticSignal {
  std::vector<double> real;
  std::vector<double> quadrature;
};

// Hilbert quadrature via the spectral multiplier -i sign(f): positive
// frequencies are multiplied by -i, negative ones by +i, and the DC and (for
// even lengths) Nyquist bins are zeroed. Hence cos -> sin. Requires T >= 4.
AnalyticSignal analytic_signal(std::span<const double> trace);

// Per trace sqrt(real^2 + quadrature^2); section is [H, W].
Tensor<double> instantaneous_amplitude(const Tensor<double>& section, TraceAxis axis = TraceAxis::Columns);
// Per sample atan2(quadrature, real) in (-pi, pi]; atan2(0, 0) is taken as 0.
Tensor<double> instantaneous_phase(const Tensor<double>& section, TraceAxis axis = TraceAxis::Columns);

struct AttributeSection {
  Tensor<double> amplitude;
  Tensor<double> phase;
  std::string source_id;
};

AttributeSection compute_attributes(const Tensor<double>& section, TraceAxis axis = TraceAxis::Columns,
                                    std::string source_id = {});

// Input, confidence, amplitude and phase side by side, each min-max scaled
// through the confidence colormap (a constant panel renders at the zero
// color). Size (4 W + 5 m) x (H + 2 m) with m = kPanelMargin.
RgbImage compare_panel_image(const Tensor<double>& x, const ConfidenceMap& conf, const AttributeSection& attrs);
void compare_panels(const Tensor<double>& x, const ConfidenceMap& conf, const AttributeSection& attrs,
                    const std::filesystem::path& path);

}  // namespace lfa
