#include "lfa/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lfa/errors.hpp"

namespace lfa {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr std::string_view kMagic = "LFACKPT\n";
constexpr std::string_view kHeaderEnd = "end_header\n";
constexpr std::string_view kTrailer = "CHECKSUM";

template <typename U>
void put(std::string& out, U value) {
  char bytes[sizeof(U)];
  std::memcpy(bytes, &value, sizeof(U));
  out.append(bytes, sizeof(U));
}

void put_array(std::string& out, const std::string& name, const Tensor<float>& t) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put<std::uint64_t>(out, d);
  out.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(float));
}

class Reader {
 public:
  Reader(std::string_view bytes, const std::filesystem::path& path) : bytes_(bytes), path_(path) {}

  template <typename U>
  U get() {
    U value;
    std::memcpy(&value, take(sizeof(U)).data(), sizeof(U));
    return value;
  }
  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw CheckpointIntegrityError("checkpoint " + path_.string() + " is truncated");
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

std::string group_tag(std::size_t g) { return std::to_string(g); }

}  // namespace

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  const std::string config_text = c.config.serialize();
  std::string out;
  out += kMagic;
  out += "version=" + std::to_string(c.version) + "\n";
  out += "epoch=" + std::to_string(c.epoch) + "\n";
  out += "config_hash=" + hex64(fnv1a64(config_text)) + "\n";
  out += "rng=" + c.rng_state + "\n";
  std::string steps;
  for (std::size_t g = 0; g < c.optimizer.size(); ++g)
    steps += (g ? "," : "") + std::to_string(c.optimizer[g].step);
  out += "adam_steps=" + steps + "\n";
  for (const auto& [k, v] : c.config.entries()) out += "config." + k + "=" + v + "\n";
  out += kHeaderEnd;

  std::size_t arrays = c.params.count();
  for (const auto& a : c.optimizer) arrays += a.m.count() + a.v.count();
  put<std::uint64_t>(out, arrays);
  for (const auto& [name, t] : c.params) put_array(out, "p/" + name, t);
  for (std::size_t g = 0; g < c.optimizer.size(); ++g) {
    for (const auto& [name, t] : c.optimizer[g].m) put_array(out, "m" + group_tag(g) + "/" + name, t);
    for (const auto& [name, t] : c.optimizer[g].v) put_array(out, "v" + group_tag(g) + "/" + name, t);
  }
  const std::uint64_t sum = fnv1a64(out);
  out += kTrailer;
  put<std::uint64_t>(out, sum);

  std::error_code ec;
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path(), ec);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write checkpoint " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("cannot write checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot write checkpoint " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read checkpoint " + path.string());
  std::ostringstream buf;
  buf << f.rdbuf();
  const std::string bytes = buf.str();
  const std::string_view all(bytes);

  if (!all.starts_with(kMagic)) throw CheckpointIntegrityError(path.string() + " is not a checkpoint");
  const auto header_end = all.find(kHeaderEnd);
  if (header_end == std::string_view::npos)
    throw CheckpointIntegrityError("checkpoint " + path.string() + " is truncated");

  Checkpoint c;
  KeyValues header;
  std::istringstream lines(std::string(all.substr(kMagic.size(), header_end - kMagic.size())));
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointIntegrityError("checkpoint " + path.string() + ": bad header line");
    const auto key = line.substr(0, eq);
    auto value = line.substr(eq + 1);
    if (key.starts_with("config."))
      c.config.set(key.substr(7), std::move(value));
    else
      header.set(key, std::move(value));
  }
  try {
    c.version = static_cast<std::uint32_t>(header.get_int("version", -1));
  } catch (const ConfigError&) {
    throw CheckpointIntegrityError("checkpoint " + path.string() + ": unreadable version");
  }
  if (c.version != kCheckpointVersion)
    throw CheckpointVersionError("checkpoint " + path.string() + " has format version " + std::to_string(c.version) +
                                 "; this build reads version " + std::to_string(kCheckpointVersion));

  const std::size_t trailer = kTrailer.size() + sizeof(std::uint64_t);
  if (all.size() < header_end + kHeaderEnd.size() + trailer ||
      all.substr(all.size() - trailer, kTrailer.size()) != kTrailer)
    throw CheckpointIntegrityError("checkpoint " + path.string() + " is truncated");
  std::uint64_t stored;
  std::memcpy(&stored, all.data() + all.size() - sizeof(std::uint64_t), sizeof stored);
  if (fnv1a64(all.substr(0, all.size() - trailer)) != stored)
    throw CheckpointIntegrityError("checkpoint " + path.string() + " failed its checksum");
  if (header.get("config_hash") != hex64(fnv1a64(c.config.serialize())))
    throw CheckpointIntegrityError("checkpoint " + path.string() + ": config hash mismatch");

  try {
    c.epoch = static_cast<std::size_t>(header.get_int("epoch", 0));
    c.rng_state = header.get_string("rng", "");
    const auto steps = header.get_ints("adam_steps", {});
    if (steps.size() != c.optimizer.size()) throw ConfigError("adam_steps");
    for (std::size_t g = 0; g < steps.size(); ++g) c.optimizer[g].step = static_cast<std::uint64_t>(steps[g]);
  } catch (const ConfigError& e) {
    throw CheckpointIntegrityError("checkpoint " + path.string() + ": bad header (" + e.what() + ")");
  }

  Reader r(all.substr(header_end + kHeaderEnd.size(), all.size() - trailer - header_end - kHeaderEnd.size()), path);
  const auto arrays = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < arrays; ++i) {
    const std::string name(r.take(r.get<std::uint32_t>()));
    Shape shape(r.get<std::uint32_t>());
    for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
    Tensor<float> t(shape);
    const auto data = r.take(t.size() * sizeof(float));
    std::memcpy(t.data(), data.data(), data.size());
    const auto slash = name.find('/');
    if (slash == std::string::npos) throw CheckpointIntegrityError("checkpoint " + path.string() + ": bad array name");
    const auto kind = name.substr(0, slash);
    auto key = name.substr(slash + 1);
    if (kind == "p") {
      c.params.add(std::move(key), std::move(t));
    } else if ((kind[0] == 'm' || kind[0] == 'v') && kind.size() == 2 && kind[1] >= '0' &&
               std::size_t(kind[1] - '0') < c.optimizer.size()) {
      auto& state = c.optimizer[std::size_t(kind[1] - '0')];
      (kind[0] == 'm' ? state.m : state.v).add(std::move(key), std::move(t));
    } else {
      throw CheckpointIntegrityError("checkpoint " + path.string() + ": unknown array '" + name + "'");
    }
  }
  if (!r.done()) throw CheckpointIntegrityError("checkpoint " + path.string() + ": trailing bytes");
  return c;
}

}  // namespace lfa
