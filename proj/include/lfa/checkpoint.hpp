#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "lfa/config.hpp"
#include "lfa/parameters.hpp"

namespace lfa {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Adam moments of one parameter group.
struct AdamState {
  ParameterSet<float> m;
  ParameterSet<float> v;
  std::uint64_t step = 0;

  bool operator==(const AdamState&) const = default;
};

// Everything needed to resume training bit-for-bit.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::size_t epoch = 0;
  KeyValues config;  // resolved architecture + training settings
  ParameterSet<float> params;
  std::array<AdamState, 5> optimizer;  // indexed like kAllGroups
  std::string rng_state;

  bool operator==(const Checkpoint& o) const {
    return version == o.version && epoch == o.epoch && config.entries() == o.config.entries() &&
           params == o.params && optimizer == o.optimizer && rng_state == o.rng_state;
  }
};

// Text header (magic, version, epoch, config hash, config, generator state)
// followed by little-endian named float32 arrays and a checksum trailer.
// The file is written to a temporary name and renamed into place.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);

// Throws CheckpointVersionError on a version mismatch and
// CheckpointIntegrityError on truncation or corruption.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lfa
