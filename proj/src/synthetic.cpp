#include "lfa/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "lfa/errors.hpp"
#include "lfa/image_io.hpp"

namespace lfa {
namespace {

constexpr const char* kKinds[] = {"blob", "fault_line", "chaotic_patch", "layered_band"};

using Field = std::vector<double>;

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  std::size_t integer(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }
  double normal(double sigma) { return std::normal_distribution<double>(0.0, sigma)(rng_); }

 private:
  std::mt19937_64 rng_;
};

Field background(const SyntheticSpec& spec, Sampler& s) {
  const std::size_t n = spec.patch_size;
  Field img(n * n, 0.0);
  const std::size_t layers = s.integer(spec.layers_min, spec.layers_max);
  for (std::size_t l = 0; l < layers; ++l) {
    const double f = s.uniform(spec.frequency_min, spec.frequency_max);
    const double dip = s.uniform(spec.dip_min, spec.dip_max);
    const double phase = s.uniform(0.0, 2 * std::numbers::pi);
    const double a = s.uniform(0.5, 1.0);
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x)
        img[y * n + x] += a * std::sin(2 * std::numbers::pi * f * (double(y) + dip * double(x)) + phase);
  }
  double peak = 1e-9;
  for (double v : img) peak = std::max(peak, std::abs(v));
  for (double& v : img) v *= spec.background_amplitude / peak;
  return img;
}

// Bilinear interpolation of a coarse random grid, scaled to unit peak.
Field smooth_noise(std::size_t n, std::size_t grid, Sampler& s) {
  std::vector<double> c((grid + 1) * (grid + 1));
  for (double& v : c) v = s.uniform(-1.0, 1.0);
  Field out(n * n);
  auto coord = [&](std::size_t i, std::size_t& lo, double& frac) {
    const double t = n > 1 ? double(i) * double(grid) / double(n - 1) : 0.0;
    lo = std::min(static_cast<std::size_t>(t), grid - 1);
    frac = t - double(lo);
  };
  double peak = 1e-12;
  for (std::size_t y = 0; y < n; ++y) {
    std::size_t y0;
    double fy;
    coord(y, y0, fy);
    for (std::size_t x = 0; x < n; ++x) {
      std::size_t x0;
      double fx;
      coord(x, x0, fx);
      auto g = [&](std::size_t a, std::size_t b) { return c[a * (grid + 1) + b]; };
      const double v = (g(y0, x0) * (1 - fx) + g(y0, x0 + 1) * fx) * (1 - fy) +
                       (g(y0 + 1, x0) * (1 - fx) + g(y0 + 1, x0 + 1) * fx) * fy;
      out[y * n + x] = v;
      peak = std::max(peak, std::abs(v));
    }
  }
  for (double& v : out) v /= peak;
  return out;
}

struct Structure {
  std::vector<std::uint8_t> mask;
  Field texture;
};

Structure draw_structure(const SyntheticSpec& spec, const std::string& kind, Sampler& s) {
  const std::size_t n = spec.patch_size;
  const double S = double(n);
  const double amp = spec.structure_amplitude;
  Structure st{std::vector<std::uint8_t>(n * n, 0), Field(n * n, 0.0)};
  auto paint = [&](auto inside, auto texture) {
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        st.mask[y * n + x] = inside(double(y), double(x)) ? 1 : 0;
        st.texture[y * n + x] = texture(y, x);
      }
  };
  if (kind == "blob") {
    const double cy = s.uniform(0.3 * S, 0.7 * S), cx = s.uniform(0.3 * S, 0.7 * S);
    const double ry = s.uniform(0.15 * S, 0.35 * S), rx = s.uniform(0.15 * S, 0.35 * S);
    Field jitter(n * n);
    for (double& v : jitter) v = s.uniform(0.0, 0.1);
    paint([&](double y, double x) { return std::pow((y - cy) / ry, 2) + std::pow((x - cx) / rx, 2) <= 1.0; },
          [&](std::size_t y, std::size_t x) { return amp * (1.0 - jitter[y * n + x]); });
  } else if (kind == "fault_line") {
    const double slope = std::tan(s.uniform(-0.6, 0.6));
    const double c = s.uniform(0.35 * S, 0.65 * S);
    const double half = s.uniform(S / 32, 5 * S / 64);
    paint([&](double y, double x) { return std::abs((x - c) - slope * (y - S / 2)) <= half; },
          [&](std::size_t y, std::size_t) {
            return amp * (std::sin(2 * std::numbers::pi * 0.25 * double(y)) >= 0 ? 1.0 : -1.0);
          });
  } else if (kind == "chaotic_patch") {
    const double cy = s.uniform(0.3 * S, 0.7 * S), cx = s.uniform(0.3 * S, 0.7 * S);
    const double h = s.uniform(0.3 * S, 0.6 * S), w = s.uniform(0.3 * S, 0.6 * S);
    const Field noise = smooth_noise(n, 8, s);
    paint([&](double y, double x) { return std::abs(y - cy) <= h / 2 && std::abs(x - cx) <= w / 2; },
          [&](std::size_t y, std::size_t x) { return amp * noise[y * n + x]; });
  } else {
    const double c = s.uniform(0.3 * S, 0.7 * S), h = s.uniform(0.15 * S, 0.35 * S);
    const double dip = s.uniform(-0.2, 0.2);
    paint([&](double y, double x) { return std::abs(y - c - dip * (x - S / 2)) <= h / 2; },
          [&](std::size_t y, std::size_t) { return amp * std::sin(2 * std::numbers::pi * 0.3 * double(y)); });
  }
  return st;
}

double area(const std::vector<std::uint8_t>& mask) {
  return double(std::count(mask.begin(), mask.end(), std::uint8_t{1})) / double(mask.size());
}

ClassTag tag_for(const std::string& kind) {
  if (kind == "blob") return ClassTag::Salt;
  if (kind == "fault_line") return ClassTag::Fault;
  if (kind == "chaotic_patch") return ClassTag::Chaotic;
  return ClassTag::Horizon;
}

}  // namespace

bool is_structure_kind(const std::string& kind) {
  return std::find(std::begin(kKinds), std::end(kKinds), kind) != std::end(kKinds);
}

void SyntheticSpec::validate() const {
  if (patch_size < 4) throw ConfigError("synthetic patch_size must be at least 4");
  if (n_per_class == 0) throw ConfigError("synthetic n_per_class must be positive");
  if (structure_kinds.empty()) throw ConfigError("synthetic structure_kinds must be nonempty");
  for (const auto& k : structure_kinds)
    if (!is_structure_kind(k)) throw ConfigError("unknown structure kind '" + k + "'");
  if (!(area_min > 0.0 && area_max < 1.0 && area_min <= area_max))
    throw ConfigError("structure_area_fraction [" + format_double(area_min) + ", " + format_double(area_max) +
                      "] must be a nonempty interval within (0, 1)");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
  if (layers_min == 0 || layers_min > layers_max) throw ConfigError("background layer count range is empty");
  if (!(frequency_min > 0.0 && frequency_min <= frequency_max)) throw ConfigError("background frequency range is invalid");
  if (!(dip_min <= dip_max)) throw ConfigError("background dip range is empty");
  if (max_attempts == 0) throw ConfigError("max_attempts must be positive");
}

void SyntheticSpec::write(KeyValues& kv) const {
  kv.set("patch_size", std::to_string(patch_size));
  kv.set("n_per_class", std::to_string(n_per_class));
  kv.set("structure_kinds", join(structure_kinds, ","));
  kv.set("background_layers", std::to_string(layers_min) + "," + std::to_string(layers_max));
  kv.set("background_frequency", format_double(frequency_min) + "," + format_double(frequency_max));
  kv.set("background_dip", format_double(dip_min) + "," + format_double(dip_max));
  kv.set("background_amplitude", format_double(background_amplitude));
  kv.set("structure_amplitude", format_double(structure_amplitude));
  kv.set("area_fraction", format_double(area_min) + "," + format_double(area_max));
  kv.set("noise_sigma", format_double(noise_sigma));
  kv.set("seed", std::to_string(seed));
}

SyntheticSpec SyntheticSpec::read(const KeyValues& kv) {
  SyntheticSpec s;
  auto pair = [&](const char* key, double& lo, double& hi) {
    const auto v = kv.get_doubles(key, {lo, hi});
    if (v.size() != 2) throw ConfigError(std::string(key) + " expects two values");
    lo = v[0];
    hi = v[1];
  };
  s.patch_size = static_cast<std::size_t>(kv.get_int("patch_size", std::int64_t(s.patch_size)));
  s.n_per_class = static_cast<std::size_t>(kv.get_int("n_per_class", std::int64_t(s.n_per_class)));
  s.structure_kinds = kv.get_strings("structure_kinds", s.structure_kinds);
  const auto layers = kv.get_ints("background_layers", {std::int64_t(s.layers_min), std::int64_t(s.layers_max)});
  if (layers.size() != 2 || layers[0] < 0 || layers[1] < 0)
    throw ConfigError("background_layers expects two nonnegative integers");
  s.layers_min = std::size_t(layers[0]);
  s.layers_max = std::size_t(layers[1]);
  pair("background_frequency", s.frequency_min, s.frequency_max);
  pair("background_dip", s.dip_min, s.dip_max);
  s.background_amplitude = kv.get_double("background_amplitude", s.background_amplitude);
  s.structure_amplitude = kv.get_double("structure_amplitude", s.structure_amplitude);
  pair("area_fraction", s.area_min, s.area_max);
  s.noise_sigma = kv.get_double("noise_sigma", s.noise_sigma);
  s.seed = kv.get_uint64("seed", s.seed);
  return s;
}

std::vector<SyntheticSample> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Sampler s(spec.seed);
  const std::size_t n = spec.patch_size;
  std::vector<SyntheticSample> out;
  out.reserve(spec.n_per_class * spec.structure_kinds.size());
  for (const auto& kind : spec.structure_kinds) {
    for (std::size_t i = 0; i < spec.n_per_class; ++i) {
      const Field bg = background(spec, s);
      Structure st;
      bool ok = false;
      for (std::size_t attempt = 0; attempt < spec.max_attempts && !ok; ++attempt) {
        st = draw_structure(spec, kind, s);
        const double a = area(st.mask);
        ok = a >= spec.area_min && a <= spec.area_max;
      }
      if (!ok)
        throw GenerationError("cannot draw a '" + kind + "' structure with area fraction in [" +
                              format_double(spec.area_min) + ", " + format_double(spec.area_max) + "] after " +
                              std::to_string(spec.max_attempts) + " attempts");
      char id[64];
      std::snprintf(id, sizeof id, "%s_%04zu", kind.c_str(), i);
      GrayImage raw(n, n);
      for (std::size_t p = 0; p < n * n; ++p) {
        double v = st.mask[p] ? st.texture[p] : bg[p];
        if (spec.noise_sigma > 0) v += s.normal(spec.noise_sigma);
        v = std::clamp(v, -1.0, 1.0);
        raw.pixels[p] = static_cast<std::uint8_t>(std::lround((v + 1.0) * 127.5));
      }
      SyntheticSample sample;
      sample.patch = normalize(raw, id);
      sample.patch.class_tag = tag_for(kind);
      sample.mask = GroundTruthMask{n, n, std::move(st.mask), id};
      sample.kind = kind;
      out.push_back(std::move(sample));
    }
  }
  return out;
}

DatasetManifest write_synthetic(const std::filesystem::path& dir, const std::vector<SyntheticSample>& samples) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "images", ec);
  if (!ec) std::filesystem::create_directories(dir / "masks", ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  DatasetManifest manifest;
  for (const auto& s : samples) {
    ManifestEntry e;
    e.image_path = dir / "images" / (s.patch.source_id + ".png");
    e.mask_path = dir / "masks" / (s.patch.source_id + ".png");
    e.class_tag = s.patch.class_tag;
    write_png(e.image_path, denormalize(s.patch));
    write_png(*e.mask_path, mask_to_image(s.mask));
    manifest.entries.push_back(std::move(e));
  }
  manifest.write(dir / "manifest.tsv");
  return manifest;
}

}  // namespace lfa
