#include "lfa/data.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "lfa/config.hpp"
#include "lfa/errors.hpp"

namespace lfa {

std::string_view to_string(ClassTag tag) {
  switch (tag) {
    case ClassTag::Horizon: return "horizon";
    case ClassTag::Fault: return "fault";
    case ClassTag::Chaotic: return "chaotic";
    case ClassTag::Salt: return "salt";
    case ClassTag::Synthetic: return "synthetic";
  }
  return "synthetic";
}

ClassTag parse_class_tag(std::string_view text) {
  for (auto tag : {ClassTag::Horizon, ClassTag::Fault, ClassTag::Chaotic, ClassTag::Salt,
                   ClassTag::Synthetic})
    if (text == to_string(tag)) return tag;
  throw ConfigError("unknown class tag '" + std::string(text) + "'");
}

bool ImagePatch::in_range() const {
  if (pixels.size() != height * width) return false;
  return std::all_of(pixels.begin(), pixels.end(),
                     [](Real v) { return std::isfinite(v) && v >= Real(-1) && v <= Real(1); });
}

double GroundTruthMask::area_fraction() const {
  if (mask.empty()) return 0.0;
  const auto on = std::count(mask.begin(), mask.end(), std::uint8_t{1});
  return static_cast<double>(on) / static_cast<double>(mask.size());
}

namespace {

Real normalize_value(int v) { return static_cast<Real>(static_cast<double>(v) / 127.5 - 1.0); }

}  // namespace

ImagePatch normalize(std::span<const std::vector<int>> raw, std::string source_id) {
  if (raw.empty() || raw.front().empty()) throw ShapeError("normalize: empty input");
  const std::size_t w = raw.front().size();
  ImagePatch patch;
  patch.height = raw.size();
  patch.width = w;
  patch.source_id = std::move(source_id);
  patch.pixels.reserve(raw.size() * w);
  for (std::size_t r = 0; r < raw.size(); ++r) {
    if (raw[r].size() != w)
      throw ShapeError("normalize: row " + std::to_string(r) + " has " + std::to_string(raw[r].size()) +
                       " values, expected " + std::to_string(w));
    for (int v : raw[r]) {
      if (v < 0 || v > 255) throw ParameterError("normalize: raw value " + std::to_string(v) + " outside [0, 255]");
      patch.pixels.push_back(normalize_value(v));
    }
  }
  return patch;
}

ImagePatch normalize(const GrayImage& raw, std::string source_id) {
  if (raw.height == 0 || raw.width == 0) throw ShapeError("normalize: empty input");
  if (raw.pixels.size() != raw.height * raw.width) throw ShapeError("normalize: inconsistent image buffer");
  ImagePatch patch;
  patch.height = raw.height;
  patch.width = raw.width;
  patch.source_id = std::move(source_id);
  patch.pixels.reserve(raw.pixels.size());
  for (auto v : raw.pixels) patch.pixels.push_back(normalize_value(v));
  return patch;
}

GrayImage denormalize(const ImagePatch& patch) {
  GrayImage out(patch.height, patch.width);
  for (std::size_t i = 0; i < patch.pixels.size(); ++i) {
    const double v = std::round((static_cast<double>(patch.pixels[i]) + 1.0) * 127.5);
    out.pixels[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
  }
  return out;
}

GrayImage mask_to_image(const GroundTruthMask& mask) {
  GrayImage out(mask.height, mask.width);
  for (std::size_t i = 0; i < mask.mask.size(); ++i) out.pixels[i] = mask.mask[i] ? 255 : 0;
  return out;
}

GroundTruthMask image_to_mask(const GrayImage& image, std::string source_id) {
  GroundTruthMask m;
  m.height = image.height;
  m.width = image.width;
  m.source_id = std::move(source_id);
  m.mask.resize(image.pixels.size());
  for (std::size_t i = 0; i < image.pixels.size(); ++i) m.mask[i] = image.pixels[i] >= 128 ? 1 : 0;
  return m;
}

GrayImage resize_bilinear(const GrayImage& image, std::size_t height, std::size_t width) {
  if (image.height == height && image.width == width) return image;
  if (image.height == 0 || image.width == 0) throw ShapeError("resize: empty image");
  GrayImage out(height, width);
  const double sy = static_cast<double>(image.height) / static_cast<double>(height);
  const double sx = static_cast<double>(image.width) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0,
                                 static_cast<double>(image.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(image.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - static_cast<double>(x0);
      const double top = image.at(y0, x0) * (1 - wx) + image.at(y0, x1) * wx;
      const double bottom = image.at(y1, x0) * (1 - wx) + image.at(y1, x1) * wx;
      out.at(y, x) = static_cast<std::uint8_t>(std::clamp(std::round(top * (1 - wy) + bottom * wy), 0.0, 255.0));
    }
  }
  return out;
}

GrayImage resize_nearest(const GrayImage& image, std::size_t height, std::size_t width) {
  if (image.height == height && image.width == width) return image;
  GrayImage out(height, width);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = std::min(image.height - 1, (2 * y + 1) * image.height / (2 * height));
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t sx = std::min(image.width - 1, (2 * x + 1) * image.width / (2 * width));
      out.at(y, x) = image.at(sy, sx);
    }
  }
  return out;
}

std::string ManifestEntry::source_id() const { return image_path.stem().string(); }

DatasetManifest DatasetManifest::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest " + path.string());
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path q(p);
    return q.is_absolute() ? q : base / q;
  };
  DatasetManifest m;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    if (fields[0] == "#normalization") {
      if (fields.size() != 3) throw ConfigError("manifest line " + std::to_string(line_no) + ": bad normalization record");
      m.normalization.raw_min = std::stoi(fields[1]);
      m.normalization.raw_max = std::stoi(fields[2]);
      continue;
    }
    if (fields[0].front() == '#') continue;
    if (fields.size() != 3)
      throw ConfigError("manifest line " + std::to_string(line_no) + ": expected 3 tab-separated fields");
    ManifestEntry e;
    e.image_path = resolve(fields[0]);
    if (fields[1] != "-") e.mask_path = resolve(fields[1]);
    if (fields[2] != "-") e.class_tag = parse_class_tag(fields[2]);
    m.entries.push_back(std::move(e));
  }
  return m;
}

void DatasetManifest::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest " + path.string());
  const auto base = path.parent_path();
  auto rel = [&](const std::filesystem::path& p) {
    auto r = p.lexically_relative(base);
    return (r.empty() ? p : r).generic_string();
  };
  out << "#normalization\t" << normalization.raw_min << '\t' << normalization.raw_max << '\n';
  for (const auto& e : entries) {
    out << rel(e.image_path) << '\t' << (e.mask_path ? rel(*e.mask_path) : std::string("-")) << '\t'
        << (e.class_tag ? std::string(to_string(*e.class_tag)) : std::string("-")) << '\n';
  }
  if (!out) throw IoError("cannot write manifest " + path.string());
}

bool DatasetManifest::has_masks() const {
  return !entries.empty() &&
         std::all_of(entries.begin(), entries.end(), [](const ManifestEntry& e) { return e.mask_path.has_value(); });
}

void DatasetManifest::validate() const {
  std::set<std::string> ids;
  for (const auto& e : entries) {
    if (!std::filesystem::exists(e.image_path)) throw IoError("manifest image missing: " + e.image_path.string());
    if (e.mask_path && !std::filesystem::exists(*e.mask_path))
      throw IoError("manifest mask missing: " + e.mask_path->string());
    if (!ids.insert(e.source_id()).second) throw ConfigError("manifest: duplicate source id '" + e.source_id() + "'");
  }
}

LoadedSample load_sample(const ManifestEntry& entry, std::size_t patch_size) {
  const auto raw = read_png_gray(entry.image_path);
  LoadedSample s;
  s.patch = normalize(resize_bilinear(raw, patch_size, patch_size), entry.source_id());
  s.patch.class_tag = entry.class_tag;
  if (entry.mask_path) {
    const auto m = read_png_gray(*entry.mask_path);
    s.mask = image_to_mask(resize_nearest(m, patch_size, patch_size), entry.source_id());
  }
  return s;
}

BatchStream::BatchStream(DatasetManifest manifest, std::size_t patch_size, std::size_t batch_size,
                         std::optional<std::uint64_t> shuffle_seed)
    : manifest_(std::move(manifest)), patch_size_(patch_size), batch_size_(batch_size) {
  if (batch_size_ == 0) throw ConfigError("batch_size must be positive");
  manifest_.validate();
  order_.resize(manifest_.entries.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (shuffle_seed) {
    std::mt19937_64 rng(*shuffle_seed);
    std::shuffle(order_.begin(), order_.end(), rng);
  }
}

std::vector<LoadedSample> BatchStream::next() {
  std::vector<LoadedSample> batch;
  while (cursor_ < order_.size() && batch.size() < batch_size_) {
    batch.push_back(load_sample(manifest_.entries[order_[cursor_]], patch_size_));
    assert(batch.back().patch.in_range());
    ++cursor_;
  }
  return batch;
}

void BatchStream::rewind() { cursor_ = 0; }

BatchStream load_dataset(const DatasetManifest& manifest, std::size_t patch_size, std::size_t batch_size,
                         std::optional<std::uint64_t> shuffle_seed) {
  return BatchStream(manifest, patch_size, batch_size, shuffle_seed);
}

std::vector<LoadedSample> load_all(const DatasetManifest& manifest, std::size_t patch_size) {
  manifest.validate();
  std::vector<LoadedSample> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) out.push_back(load_sample(e, patch_size));
  return out;
}

template <typename T>
Tensor<T> stack_patches(std::span<const ImagePatch* const> patches) {
  if (patches.empty()) throw ShapeError("stack_patches: empty batch");
  const std::size_t h = patches.front()->height, w = patches.front()->width;
  Tensor<T> out({patches.size(), h, w});
  for (std::size_t i = 0; i < patches.size(); ++i) {
    if (patches[i]->height != h || patches[i]->width != w)
      throw ShapeError("stack_patches: patch " + patches[i]->source_id + " has a different size");
    std::copy(patches[i]->pixels.begin(), patches[i]->pixels.end(), out.data() + i * h * w);
  }
  return out;
}

template <typename T>
Tensor<T> stack_patches(std::span<const ImagePatch> patches) {
  std::vector<const ImagePatch*> ptrs;
  for (const auto& p : patches) ptrs.push_back(&p);
  return stack_patches<T>(std::span<const ImagePatch* const>(ptrs));
}

template Tensor<float> stack_patches<float>(std::span<const ImagePatch>);
template Tensor<double> stack_patches<double>(std::span<const ImagePatch>);
template Tensor<float> stack_patches<float>(std::span<const ImagePatch* const>);
template Tensor<double> stack_patches<double>(std::span<const ImagePatch* const>);

}  // namespace lfa
