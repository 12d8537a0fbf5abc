#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lfa/image_io.hpp"
#include "lfa/tensor.hpp"

namespace lfa {

using Real = float;

enum class ClassTag { Horizon, Fault, Chaotic, Salt, Synthetic };

std::string_view to_string(ClassTag tag);
ClassTag parse_class_tag(std::string_view text);

// Single-channel patch with pixels in [-1, 1]. The class tag is metadata
// only; training never reads it.
struct ImagePatch {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Real> pixels;
  std::optional<ClassTag> class_tag;
  std::string source_id;

  bool in_range() const;
  bool operator==(const ImagePatch&) const = default;
};

struct GroundTruthMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> mask;  // 0 or 1
  std::string source_id;

  double area_fraction() const;
  bool operator==(const GroundTruthMask&) const = default;
};

// pixels = raw / 127.5 - 1. Rows must be equally long and values in [0, 255].
ImagePatch normalize(std::span<const std::vector<int>> raw, std::string source_id = {});
ImagePatch normalize(const GrayImage& raw, std::string source_id = {});
// Inverse of normalize up to rounding; exact for patches produced by normalize.
GrayImage denormalize(const ImagePatch& patch);

GrayImage mask_to_image(const GroundTruthMask& mask);           // {0, 255}
GroundTruthMask image_to_mask(const GrayImage& image, std::string source_id = {});  // >= 128 -> 1

// Bilinear resampling with pixel-center alignment.
GrayImage resize_bilinear(const GrayImage& image, std::size_t height, std::size_t width);
GrayImage resize_nearest(const GrayImage& image, std::size_t height, std::size_t width);

struct ManifestEntry {
  std::filesystem::path image_path;
  std::optional<std::filesystem::path> mask_path;
  std::optional<ClassTag> class_tag;

  std::string source_id() const;  // image file stem
};

struct NormalizationRecord {
  int raw_min = 0;
  int raw_max = 255;
};

// One record per line: image_path <TAB> mask_path or '-' <TAB> class_tag.
// A leading "#normalization<TAB>min<TAB>max" line records the raw range.
// Relative paths are resolved against the manifest's directory.
struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  NormalizationRecord normalization;

  static DatasetManifest read(const std::filesystem::path& path);
  void write(const std::filesystem::path& path) const;
  bool has_masks() const;
  void validate() const;  // paths exist, unique source ids
};

struct LoadedSample {
  ImagePatch patch;
  std::optional<GroundTruthMask> mask;
};

// Deterministic batch stream over a manifest. Each image is decoded,
// resized to patch_size (bilinear; masks nearest) and normalized when its
// batch is requested.
class BatchStream {
 public:
  BatchStream(DatasetManifest manifest, std::size_t patch_size, std::size_t batch_size,
              std::optional<std::uint64_t> shuffle_seed);

  // Next batch in order, or an empty vector at the end.
  std::vector<LoadedSample> next();
  void rewind();
  std::size_t size() const { return order_.size(); }

 private:
  DatasetManifest manifest_;
  std::size_t patch_size_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

BatchStream load_dataset(const DatasetManifest& manifest, std::size_t patch_size,
                         std::size_t batch_size = 32,
                         std::optional<std::uint64_t> shuffle_seed = std::nullopt);

// Whole manifest in manifest order.
std::vector<LoadedSample> load_all(const DatasetManifest& manifest, std::size_t patch_size);

LoadedSample load_sample(const ManifestEntry& entry, std::size_t patch_size);

// Stacks patches into an [N, H, W] tensor.
template <typename T>
Tensor<T> stack_patches(std::span<const ImagePatch> patches);
template <typename T>
Tensor<T> stack_patches(std::span<const ImagePatch* const> patches);

}  // namespace lfa
