#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lfa/config.hpp"
#include "lfa/data.hpp"

namespace lfa {

// Texture composites: a layered-sinusoid background with one high-amplitude
// structure pasted on top. The mask marks the structure support.
struct SyntheticSpec {
  std::size_t patch_size = 64;
  std::size_t n_per_class = 50;
  std::vector<std::string> structure_kinds{"blob", "fault_line", "chaotic_patch", "layered_band"};
  std::size_t layers_min = 2;
  std::size_t layers_max = 4;
  double frequency_min = 0.06;  // cycles per pixel
  double frequency_max = 0.18;
  double dip_min = -0.25;  // vertical shift per horizontal pixel
  double dip_max = 0.25;
  double background_amplitude = 0.3;
  double structure_amplitude = 0.9;
  double area_min = 0.1;
  double area_max = 0.4;
  double noise_sigma = 0.02;
  std::uint64_t seed = 0;
  std::size_t max_attempts = 200;

  void validate() const;
  void write(KeyValues& kv) const;
  static SyntheticSpec read(const KeyValues& kv);
};

struct SyntheticSample {
  ImagePatch patch;
  GroundTruthMask mask;
  std::string kind;
};

bool is_structure_kind(const std::string& kind);

// Pure function of the spec. Pixels are quantized to the 8-bit grid so a
// PNG round trip reproduces them exactly.
std::vector<SyntheticSample> generate_synthetic(const SyntheticSpec& spec);

// Writes images/<id>.png, masks/<id>.png and manifest.tsv under dir and
// returns the manifest.
DatasetManifest write_synthetic(const std::filesystem::path& dir,
                                const std::vector<SyntheticSample>& samples);

}  // namespace lfa
