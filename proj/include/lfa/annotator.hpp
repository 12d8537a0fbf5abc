#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lfa/data.hpp"
#include "lfa/image_io.hpp"
#include "lfa/networks.hpp"
#include "lfa/tensor.hpp"

namespace lfa {

// Per-pixel trust in [0, 1] that a pixel belongs to the dominant structure.
struct ConfidenceMap {
  Tensor<double> values;  // [H, W]
  std::string source_id;

  std::size_t height() const { return values.dim(0); }
  std::size_t width() const { return values.dim(1); }
};

using BinaryMask = std::vector<std::uint8_t>;

// |Y1 - Y2| elementwise; inputs are [H, W].
Tensor<double> sparse_difference_map(const Tensor<double>& y1, const Tensor<double>& y2);

// Box blur of the given radius (clamped at the borders), then per-image
// min-max scaling. A constant map yields all zeros.
ConfidenceMap confidence_map(const Tensor<double>& diff, std::size_t smoothing_radius = 1,
                             std::string source_id = {});

// conf >= tau. Throws ParameterError unless tau is in [0, 1].
BinaryMask threshold_mask(const ConfidenceMap& conf, double tau);

// |A and B| / |A or B|; two empty masks give 1.
double iou(const BinaryMask& a, const BinaryMask& b);

// Monotone yellow-to-red map: t -> (255, 255 (1 - t), 0), t clamped to [0, 1].
std::array<std::uint8_t, 3> confidence_color(double t);

inline constexpr std::size_t kPanelMargin = 4;

// 2 x 3 grid: X, Y1, Y2 on top; R, |Y1 - Y2|, colored confidence below.
// Image panels map [-1, 1] to black..white, the difference panel maps
// [0, max] likewise. Size (3 W + 4 m) x (2 H + 3 m) with m = kPanelMargin.
RgbImage render_panel_image(const Tensor<double>& x, const Tensor<double>& y1, const Tensor<double>& y2,
                            const Tensor<double>& r, const Tensor<double>& diff, const ConfidenceMap& conf);
void render_panels(const Tensor<double>& x, const Tensor<double>& y1, const Tensor<double>& y2,
                   const Tensor<double>& r, const Tensor<double>& diff, const ConfidenceMap& conf,
                   const std::filesystem::path& path);

// 8-bit raster of round(255 * conf).
void write_confidence_png(const ConfidenceMap& conf, const std::filesystem::path& path);

// 16-byte header ("LFAMAP01", uint32 H, uint32 W, little-endian) then H*W float32.
void write_raw_map(const Tensor<double>& map, const std::filesystem::path& path);
Tensor<double> read_raw_map(const std::filesystem::path& path);

struct Annotation {
  Tensor<double> x, y1, y2, r, diff;
  ConfidenceMap conf;
  double mse_y1 = 0.0;  // MSE(X, Y1)
  double mse_y2 = 0.0;
  double mse_r = 0.0;
};

// Runs the trained model in inference mode over `patches` (batched) and
// derives the confidence maps.
std::vector<Annotation> annotate(const Networks<float>& nets, const ParameterSet<float>& params,
                                 const std::vector<ImagePatch>& patches, std::size_t smoothing_radius = 1,
                                 std::size_t batch_size = 32);

Tensor<double> patch_tensor(const ImagePatch& patch);
BinaryMask mask_bits(const GroundTruthMask& mask);

}  // namespace lfa
