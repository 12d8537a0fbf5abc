#include "lfa/annotator.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lfa/errors.hpp"
#include "lfa/trainer.hpp"

namespace lfa {
namespace {

void require_map(const Tensor<double>& t, const char* what) {
  if (t.rank() != 2) throw ShapeError(std::string(what) + ": expected an [H, W] map, got " + shape_string(t.shape()));
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0)); }

void blit_gray(RgbImage& img, std::size_t top, std::size_t left, const Tensor<double>& t, double lo, double hi) {
  const double span = hi > lo ? hi - lo : 1.0;
  for (std::size_t y = 0; y < t.dim(0); ++y)
    for (std::size_t x = 0; x < t.dim(1); ++x) {
      const auto g = to_byte(255.0 * (t[y * t.dim(1) + x] - lo) / span);
      img.set(top + y, left + x, g, g, g);
    }
}

void blit_color(RgbImage& img, std::size_t top, std::size_t left, const Tensor<double>& t) {
  for (std::size_t y = 0; y < t.dim(0); ++y)
    for (std::size_t x = 0; x < t.dim(1); ++x) {
      const auto c = confidence_color(t[y * t.dim(1) + x]);
      img.set(top + y, left + x, c[0], c[1], c[2]);
    }
}

}  // namespace

Tensor<double> sparse_difference_map(const Tensor<double>& y1, const Tensor<double>& y2) {
  require_map(y1, "sparse_difference_map");
  require_shape(y2.shape(), y1.shape(), "sparse_difference_map");
  Tensor<double> out(y1.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(y1[i] - y2[i]);
  return out;
}

ConfidenceMap confidence_map(const Tensor<double>& diff, std::size_t radius, std::string source_id) {
  require_map(diff, "confidence_map");
  const std::size_t h = diff.dim(0), w = diff.dim(1);
  Tensor<double> blurred(diff.shape());
  const auto r = static_cast<std::ptrdiff_t>(radius);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double sum = 0.0;
      std::size_t n = 0;
      for (auto dy = -r; dy <= r; ++dy)
        for (auto dx = -r; dx <= r; ++dx) {
          const auto yy = static_cast<std::ptrdiff_t>(y) + dy, xx = static_cast<std::ptrdiff_t>(x) + dx;
          if (yy < 0 || xx < 0 || yy >= std::ptrdiff_t(h) || xx >= std::ptrdiff_t(w)) continue;
          sum += diff[std::size_t(yy) * w + std::size_t(xx)];
          ++n;
        }
      blurred[y * w + x] = sum / double(n);
    }
  ConfidenceMap out{Tensor<double>(diff.shape()), std::move(source_id)};
  if (blurred.empty()) return out;
  const auto [lo, hi] = std::minmax_element(blurred.values().begin(), blurred.values().end());
  const double min = *lo, max = *hi;
  if (!(max > min) || !std::isfinite(max - min)) return out;
  for (std::size_t i = 0; i < blurred.size(); ++i) out.values[i] = std::clamp((blurred[i] - min) / (max - min), 0.0, 1.0);
  return out;
}

BinaryMask threshold_mask(const ConfidenceMap& conf, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ParameterError("threshold must lie in [0, 1]");
  BinaryMask m(conf.values.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = conf.values[i] >= tau ? 1 : 0;
  return m;
}

double iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.size() != b.size()) throw ShapeError("iou: masks differ in size");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += (a[i] && b[i]) ? 1 : 0;
    uni += (a[i] || b[i]) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : double(inter) / double(uni);
}

std::array<std::uint8_t, 3> confidence_color(double t) {
  t = std::isfinite(t) ? std::clamp(t, 0.0, 1.0) : 0.0;
  return {255, to_byte(255.0 * (1.0 - t)), 0};
}

RgbImage render_panel_image(const Tensor<double>& x, const Tensor<double>& y1, const Tensor<double>& y2,
                            const Tensor<double>& r, const Tensor<double>& diff, const ConfidenceMap& conf) {
  require_map(x, "render_panels");
  for (const auto* t : {&y1, &y2, &r, &diff, &conf.values}) require_shape(t->shape(), x.shape(), "render_panels");
  const std::size_t h = x.dim(0), w = x.dim(1), m = kPanelMargin;
  RgbImage img(2 * h + 3 * m, 3 * w + 4 * m, 255);
  auto left = [&](std::size_t col) { return m + col * (w + m); };
  auto top = [&](std::size_t row) { return m + row * (h + m); };
  blit_gray(img, top(0), left(0), x, -1.0, 1.0);
  blit_gray(img, top(0), left(1), y1, -1.0, 1.0);
  blit_gray(img, top(0), left(2), y2, -1.0, 1.0);
  blit_gray(img, top(1), left(0), r, -1.0, 1.0);
  double dmax = 0.0;
  for (double v : diff.values()) dmax = std::max(dmax, v);
  blit_gray(img, top(1), left(1), diff, 0.0, dmax);
  blit_color(img, top(1), left(2), conf.values);
  return img;
}

void render_panels(const Tensor<double>& x, const Tensor<double>& y1, const Tensor<double>& y2,
                   const Tensor<double>& r, const Tensor<double>& diff, const ConfidenceMap& conf,
                   const std::filesystem::path& path) {
  write_png(path, render_panel_image(x, y1, y2, r, diff, conf));
}

void write_confidence_png(const ConfidenceMap& conf, const std::filesystem::path& path) {
  GrayImage img(conf.height(), conf.width());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = to_byte(255.0 * conf.values[i]);
  write_png(path, img);
}

void write_raw_map(const Tensor<double>& map, const std::filesystem::path& path) {
  static_assert(std::endian::native == std::endian::little, "raw map I/O assumes a little-endian host");
  require_map(map, "write_raw_map");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write("LFAMAP01", 8);
  const std::uint32_t dims[2] = {static_cast<std::uint32_t>(map.dim(0)), static_cast<std::uint32_t>(map.dim(1))};
  out.write(reinterpret_cast<const char*>(dims), sizeof dims);
  std::vector<float> data(map.values().begin(), map.values().end());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!out) throw IoError("cannot write " + path.string());
}

Tensor<double> read_raw_map(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  char magic[8];
  std::uint32_t dims[2];
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(dims), sizeof dims);
  if (!in || std::memcmp(magic, "LFAMAP01", 8) != 0) throw DecodeError(path.string() + " is not a raw map");
  std::vector<float> data(std::size_t(dims[0]) * dims[1]);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!in) throw DecodeError(path.string() + " is truncated");
  return Tensor<double>({dims[0], dims[1]}, std::vector<double>(data.begin(), data.end()));
}

Tensor<double> patch_tensor(const ImagePatch& patch) {
  return Tensor<double>({patch.height, patch.width}, std::vector<double>(patch.pixels.begin(), patch.pixels.end()));
}

BinaryMask mask_bits(const GroundTruthMask& mask) { return mask.mask; }

std::vector<Annotation> annotate(const Networks<float>& nets, const ParameterSet<float>& params,
                                 const std::vector<ImagePatch>& patches, std::size_t radius, std::size_t batch_size) {
  std::vector<Annotation> out;
  out.reserve(patches.size());
  const Objective<float> obj(nets);
  const ForwardContext ctx{Mode::Inference, nullptr};
  const std::size_t h = nets.config().patch_size, w = h, pixels = h * w;
  for (std::size_t b = 0; b < patches.size(); b += batch_size) {
    const std::size_t e = std::min(patches.size(), b + batch_size);
    const auto batch = stack_patches<float>(std::span<const ImagePatch>(patches.data() + b, e - b));
    const auto fp = obj.forward(params, batch, ctx);
    for (std::size_t i = b; i < e; ++i) {
      Annotation a;
      auto slice = [&](const Tensor<float>& t) {
        const float* p = t.data() + (i - b) * pixels;
        return Tensor<double>({h, w}, std::vector<double>(p, p + pixels));
      };
      a.x = patch_tensor(patches[i]);
      a.y1 = slice(fp.y1);
      a.y2 = slice(fp.y2);
      a.r = slice(fp.r);
      a.diff = sparse_difference_map(a.y1, a.y2);
      a.conf = confidence_map(a.diff, radius, patches[i].source_id);
      for (std::size_t k = 0; k < pixels; ++k) {
        a.mse_y1 += std::pow(a.x[k] - a.y1[k], 2);
        a.mse_y2 += std::pow(a.x[k] - a.y2[k], 2);
        a.mse_r += std::pow(a.x[k] - a.r[k], 2);
      }
      a.mse_y1 /= double(pixels);
      a.mse_y2 /= double(pixels);
      a.mse_r /= double(pixels);
      out.push_back(std::move(a));
    }
  }
  return out;
}

}  // namespace lfa
