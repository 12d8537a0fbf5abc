#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "lfa/data.hpp"
#include "lfa/errors.hpp"
#include "lfa/synthetic.hpp"

using namespace lfa;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("lfa_test_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

SyntheticSpec small_spec(std::uint64_t seed) {
  SyntheticSpec s;
  s.n_per_class = 3;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("normalize endpoints and the elementwise formula") {
  const std::vector<std::vector<int>> zeros(3, std::vector<int>(4, 0)), full(3, std::vector<int>(4, 255));
  for (float v : normalize(zeros).pixels) CHECK(v == -1.0f);
  for (float v : normalize(full).pixels) CHECK(v == 1.0f);
  const std::vector<std::vector<int>> mid{{127}};
  CHECK(normalize(mid).pixels[0] == doctest::Approx(-0.00392157).epsilon(1e-5));

  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> d(0, 255);
  std::vector<std::vector<int>> raw(8, std::vector<int>(8));
  for (auto& row : raw)
    for (auto& v : row) v = d(rng);
  const auto p = normalize(raw, "r");
  CHECK(p.height == 8);
  CHECK(p.width == 8);
  CHECK(p.source_id == "r");
  CHECK(p.in_range());
  for (std::size_t r = 0; r < 8; ++r)
    for (std::size_t c = 0; c < 8; ++c)
      CHECK(p.pixels[r * 8 + c] == static_cast<float>(double(raw[r][c]) / 127.5 - 1.0));

  // Exact inverse on integers.
  GrayImage img(8, 8);
  img.pixels.clear();
  for (const auto& row : raw)
    for (int v : row) img.pixels.push_back(static_cast<std::uint8_t>(v));
  CHECK(denormalize(normalize(img)).pixels == img.pixels);
}

TEST_CASE("normalize rejects ragged and out-of-range input") {
  const std::vector<std::vector<int>> ragged{{1, 2}, {3}};
  CHECK_THROWS_AS(normalize(ragged), ShapeError);
  const std::vector<std::vector<int>> high{{256}};
  CHECK_THROWS_AS(normalize(high), ParameterError);
  CHECK_THROWS_AS(normalize(std::vector<std::vector<int>>{}), ShapeError);
}

TEST_CASE("synthetic generation counts, determinism and mask areas") {
  SyntheticSpec spec;  // 50 per class, 4 kinds
  const auto a = generate_synthetic(spec);
  REQUIRE(a.size() == 200);
  const auto b = generate_synthetic(spec);
  bool identical = true;
  for (std::size_t i = 0; i < a.size(); ++i)
    identical = identical && a[i].patch == b[i].patch && a[i].mask == b[i].mask;
  CHECK(identical);

  std::size_t outside = 0;
  for (const auto& s : a) {
    CHECK(s.patch.height == 64);
    CHECK(s.mask.mask.size() == 64 * 64);
    CHECK(s.patch.in_range());
    CHECK(s.patch.source_id == s.mask.source_id);
    std::size_t on = 0;
    for (auto m : s.mask.mask) on += m;
    const double frac = double(on) / double(s.mask.mask.size());
    if (frac < spec.area_min || frac > spec.area_max) ++outside;
  }
  CHECK(outside == 0);

  auto other = spec;
  other.seed = 1;
  CHECK_FALSE(generate_synthetic(other)[0].patch == a[0].patch);
}

TEST_CASE("synthetic spec validation and unsatisfiable areas") {
  auto spec = small_spec(0);
  spec.area_min = 0.9;
  spec.area_max = 0.8;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = small_spec(0);
  spec.structure_kinds = {"volcano"};
  CHECK_THROWS_AS(spec.validate(), ConfigError);

  spec = small_spec(0);
  spec.structure_kinds = {"fault_line"};
  spec.area_min = 0.95;
  spec.area_max = 0.99;
  spec.max_attempts = 20;
  try {
    generate_synthetic(spec);
    FAIL("expected a generation error");
  } catch (const GenerationError& e) {
    CHECK(std::string(e.what()).find("fault_line") != std::string::npos);
  }
}

TEST_CASE("synthetic spec round-trips through key=value text") {
  auto spec = small_spec(42);
  spec.area_min = 0.15;
  spec.structure_kinds = {"blob", "layered_band"};
  KeyValues kv;
  spec.write(kv);
  const auto back = SyntheticSpec::read(kv);
  CHECK(back.seed == 42);
  CHECK(back.area_min == 0.15);
  CHECK(back.structure_kinds == spec.structure_kinds);
  CHECK(back.n_per_class == 3);
}

TEST_CASE("manifest round trip, loading and deterministic shuffling") {
  const auto dir = scratch("manifest");
  const auto samples = generate_synthetic(small_spec(3));
  const auto manifest = write_synthetic(dir, samples);
  CHECK(manifest.entries.size() == samples.size());
  CHECK(manifest.has_masks());

  const auto read = DatasetManifest::read(dir / "manifest.tsv");
  REQUIRE(read.entries.size() == samples.size());
  read.validate();
  CHECK(read.normalization.raw_min == 0);
  CHECK(read.normalization.raw_max == 255);
  CHECK(read.entries[0].class_tag.has_value());

  const auto all = load_all(read, 64);
  for (std::size_t i = 0; i < all.size(); ++i) {
    CHECK(all[i].patch.pixels == samples[i].patch.pixels);
    REQUIRE(all[i].mask.has_value());
    CHECK(all[i].mask->mask == samples[i].mask.mask);
  }

  auto ids = [&](BatchStream s) {
    std::vector<std::string> out;
    for (auto batch = s.next(); !batch.empty(); batch = s.next())
      for (const auto& b : batch) out.push_back(b.patch.source_id);
    return out;
  };
  const auto first = ids(load_dataset(read, 64, 5, 9));
  const auto second = ids(load_dataset(read, 64, 5, 9));
  CHECK(first.size() == samples.size());
  CHECK(first == second);
  CHECK(first != ids(load_dataset(read, 64, 5, std::nullopt)));

  auto stream = load_dataset(read, 64, 5, 9);
  const auto once = ids(stream);
  stream.rewind();
  CHECK(ids(stream) == once);
}

TEST_CASE("99x99 sources are resized to the patch size") {
  const auto dir = scratch("resize");
  GrayImage img(99, 99);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i % 251);
  write_png(dir / "a.png", img);
  GrayImage mask(99, 99);
  for (std::size_t r = 0; r < 50; ++r)
    for (std::size_t c = 0; c < 99; ++c) mask.pixels[r * 99 + c] = 255;
  write_png(dir / "a_mask.png", mask);
  DatasetManifest m;
  m.entries.push_back({dir / "a.png", dir / "a_mask.png", ClassTag::Salt});
  m.write(dir / "manifest.tsv");
  const auto s = load_sample(DatasetManifest::read(dir / "manifest.tsv").entries.at(0), 64);
  CHECK(s.patch.height == 64);
  CHECK(s.patch.width == 64);
  CHECK(s.patch.in_range());
  REQUIRE(s.mask);
  CHECK(s.mask->mask.size() == 64 * 64);
  CHECK(s.mask->mask[0] == 1);
  CHECK(s.mask->mask.back() == 0);
}

TEST_CASE("bilinear resize preserves constants and identity") {
  const GrayImage flat(10, 13, 77);
  for (auto v : resize_bilinear(flat, 7, 21).pixels) CHECK(v == 77);
  GrayImage ramp(4, 4);
  ramp.pixels.clear();
  for (int i = 0; i < 16; ++i) ramp.pixels.push_back(static_cast<std::uint8_t>(i * 10));
  CHECK(resize_bilinear(ramp, 4, 4).pixels == ramp.pixels);
  CHECK(resize_nearest(ramp, 4, 4).pixels == ramp.pixels);
}

TEST_CASE("empty manifest gives an empty stream") {
  const auto dir = scratch("empty");
  {
    std::ofstream out(dir / "manifest.tsv");
  }
  const auto m = DatasetManifest::read(dir / "manifest.tsv");
  CHECK(m.entries.empty());
  auto stream = load_dataset(m, 64, 8, 1);
  CHECK(stream.next().empty());
  CHECK(load_all(m, 64).empty());
}

TEST_CASE("missing and corrupt files raise the right errors") {
  const auto dir = scratch("errors");
  CHECK_THROWS_AS(DatasetManifest::read(dir / "nope.tsv"), IoError);

  DatasetManifest m;
  m.entries.push_back({dir / "missing.png", std::nullopt, std::nullopt});
  CHECK_THROWS_AS(m.validate(), IoError);
  try {
    load_sample(m.entries[0], 64);
    FAIL("expected an IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("missing.png") != std::string::npos);
  }

  {
    std::ofstream out(dir / "bad.png", std::ios::binary);
    out << "definitely not a png";
  }
  CHECK_THROWS_AS(load_sample(ManifestEntry{dir / "bad.png", std::nullopt, std::nullopt}, 64), DecodeError);

  const GrayImage img(4, 4, 1);
  write_png(dir / "x.png", img);
  fs::create_directories(dir / "sub");
  write_png(dir / "sub" / "x.png", img);
  DatasetManifest dup;
  dup.entries.push_back({dir / "x.png", std::nullopt, std::nullopt});
  dup.entries.push_back({dir / "sub" / "x.png", std::nullopt, std::nullopt});
  CHECK_THROWS_AS(dup.validate(), ConfigError);
}

TEST_CASE("class tags and stacking") {
  for (auto t : {ClassTag::Horizon, ClassTag::Fault, ClassTag::Chaotic, ClassTag::Salt, ClassTag::Synthetic})
    CHECK(parse_class_tag(to_string(t)) == t);
  CHECK_THROWS(parse_class_tag("Basalt"));

  std::vector<ImagePatch> ps(2);
  for (std::size_t i = 0; i < 2; ++i) ps[i] = ImagePatch{2, 2, {0.f, 0.1f, 0.2f, float(i)}, std::nullopt, ""};
  const auto t = stack_patches<float>(std::span<const ImagePatch>(ps));
  CHECK(t.shape() == Shape{2, 2, 2});
  CHECK(t[7] == 1.0f);
}
