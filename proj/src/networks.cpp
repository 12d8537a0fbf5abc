#include "lfa/networks.hpp"

#include <random>

namespace lfa {
namespace {

std::vector<std::size_t> to_sizes(const std::vector<std::int64_t>& v, const char* key) {
  std::vector<std::size_t> out;
  for (auto x : v) {
    if (x <= 0) throw ConfigError(std::string(key) + ": entries must be positive");
    out.push_back(static_cast<std::size_t>(x));
  }
  return out;
}

std::vector<std::int64_t> to_ints(const std::vector<std::size_t>& v) {
  return {v.begin(), v.end()};
}

std::string list_text(const std::vector<std::size_t>& v) {
  std::vector<std::string> parts;
  for (auto x : v) parts.push_back(std::to_string(x));
  return join(parts, ",");
}

}  // namespace

void ArchitectureConfig::validate() const {
  if (encoder_channels.empty()) throw ConfigError("architecture: encoder_channels must be nonempty");
  if (kernel % 2 == 0) throw ConfigError("architecture: kernel must be odd");
  if (stride != 2) throw ConfigError("architecture: stride must be 2");
  const std::size_t layers = encoder_channels.size();
  if (layers >= 31 || (patch_size >> layers) < 2)
    throw ConfigError("architecture: patch_size / 2^" + std::to_string(layers) + " must be >= 2 (patch_size " +
                      std::to_string(patch_size) + ")");
  if (patch_size % (std::size_t{1} << layers) != 0)
    throw ConfigError("architecture: patch_size must be divisible by 2^" + std::to_string(layers));
  const std::size_t b = bottleneck_size();
  if (b * b * encoder_channels.back() != latent_dim)
    throw ConfigError("architecture: final feature volume " + std::to_string(b) + "x" + std::to_string(b) +
                      "x" + std::to_string(encoder_channels.back()) + " != latent_dim " +
                      std::to_string(latent_dim));
  if (image_disc_channels.empty())
    throw ConfigError("architecture: image_disc_channels must be nonempty");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0))
    throw ConfigError("architecture: leaky_slope must be in [0, 1)");
  if (!(probability_floor > 0.0 && probability_floor < 0.5))
    throw ConfigError("architecture: probability_floor must be in (0, 0.5)");
  if (!(batch_norm_momentum > 0.0 && batch_norm_momentum <= 1.0))
    throw ConfigError("architecture: batch_norm_momentum must be in (0, 1]");
  if (!(init_std >= 0.0) || !(projection_init_noise >= 0.0))
    throw ConfigError("architecture: initialization scales must be >= 0");
}

void ArchitectureConfig::write(KeyValues& kv) const {
  kv.set("patch_size", std::to_string(patch_size));
  kv.set("latent_dim", std::to_string(latent_dim));
  kv.set("encoder_channels", list_text(encoder_channels));
  kv.set("image_disc_channels", list_text(image_disc_channels));
  kv.set("latent_disc_hidden", list_text(latent_disc_hidden));
  kv.set("kernel", std::to_string(kernel));
  kv.set("stride", std::to_string(stride));
  kv.set("leaky_slope", format_double(leaky_slope));
  kv.set("batch_norm_eps", format_double(batch_norm_eps));
  kv.set("batch_norm_momentum", format_double(batch_norm_momentum));
  kv.set("init_std", format_double(init_std));
  kv.set("projection_init_noise", format_double(projection_init_noise));
  kv.set("probability_floor", format_double(probability_floor));
}

ArchitectureConfig ArchitectureConfig::read(const KeyValues& kv) {
  ArchitectureConfig c;
  c.patch_size = static_cast<std::size_t>(kv.get_int("patch_size", static_cast<std::int64_t>(c.patch_size)));
  c.latent_dim = static_cast<std::size_t>(kv.get_int("latent_dim", static_cast<std::int64_t>(c.latent_dim)));
  c.encoder_channels =
      to_sizes(kv.get_ints("encoder_channels", to_ints(c.encoder_channels)), "encoder_channels");
  c.image_disc_channels =
      to_sizes(kv.get_ints("image_disc_channels", to_ints(c.image_disc_channels)), "image_disc_channels");
  c.latent_disc_hidden =
      to_sizes(kv.get_ints("latent_disc_hidden", to_ints(c.latent_disc_hidden)), "latent_disc_hidden");
  c.kernel = static_cast<std::size_t>(kv.get_int("kernel", static_cast<std::int64_t>(c.kernel)));
  c.stride = static_cast<std::size_t>(kv.get_int("stride", static_cast<std::int64_t>(c.stride)));
  c.leaky_slope = kv.get_double("leaky_slope", c.leaky_slope);
  c.batch_norm_eps = kv.get_double("batch_norm_eps", c.batch_norm_eps);
  c.batch_norm_momentum = kv.get_double("batch_norm_momentum", c.batch_norm_momentum);
  c.init_std = kv.get_double("init_std", c.init_std);
  c.projection_init_noise = kv.get_double("projection_init_noise", c.projection_init_noise);
  c.probability_floor = kv.get_double("probability_floor", c.probability_floor);
  return c;
}

ArchitectureConfig ArchitectureConfig::toy() {
  ArchitectureConfig c;
  c.patch_size = 8;
  c.latent_dim = 16;
  c.encoder_channels = {4, 4};
  c.image_disc_channels = {4, 8};
  c.latent_disc_hidden = {8, 4};
  return c;
}

std::string_view group_prefix(ParamGroup g) {
  switch (g) {
    case ParamGroup::Encoder: return "enc.";
    case ParamGroup::Decoder: return "dec.";
    case ParamGroup::ImageDisc: return "d1.";
    case ParamGroup::LatentDisc: return "d2.";
    case ParamGroup::Projection: return "proj.";
  }
  return "";
}

std::string_view group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::Encoder: return "E";
    case ParamGroup::Decoder: return "G";
    case ParamGroup::ImageDisc: return "D1";
    case ParamGroup::LatentDisc: return "D2";
    case ParamGroup::Projection: return "P";
  }
  return "";
}

ParamGroup group_of(std::string_view name) {
  for (auto g : kAllGroups)
    if (has_prefix(name, group_prefix(g))) return g;
  throw ConfigError("parameter '" + std::string(name) + "' belongs to no group");
}

template <typename T>
Networks<T>::Networks(ArchitectureConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& c = config_;
  const std::size_t k = c.kernel, s = c.stride, pad = (c.kernel - 1) / 2;
  const std::size_t layers = c.encoder_channels.size();

  std::size_t in = 1;
  for (std::size_t i = 0; i < layers; ++i) {
    const auto id = std::to_string(i);
    encoder_.template emplace<Conv2d<T>>("enc.conv" + id, in, c.encoder_channels[i], k, s, pad);
    encoder_.template emplace<BatchNorm<T>>("enc.bn" + id, c.encoder_channels[i], c.batch_norm_eps);
    encoder_.template emplace<LeakyRelu<T>>(c.leaky_slope);
    in = c.encoder_channels[i];
  }
  encoder_.template emplace<Flatten<T>>();
  encoder_.template emplace<Sigmoid<T>>();

  const std::size_t b = c.bottleneck_size();
  decoder_.template emplace<Unflatten<T>>(c.encoder_channels.back(), b, b);
  for (std::size_t i = 0; i < layers; ++i) {
    const auto id = std::to_string(i);
    const std::size_t from = c.encoder_channels[layers - 1 - i];
    const std::size_t to = i + 1 < layers ? c.encoder_channels[layers - 2 - i] : 1;
    decoder_.template emplace<ConvTranspose2d<T>>("dec.tconv" + id, from, to, k, s, pad);
    if (i + 1 < layers) {
      decoder_.template emplace<BatchNorm<T>>("dec.bn" + id, to, c.batch_norm_eps);
      decoder_.template emplace<LeakyRelu<T>>(0.0);
    }
  }

  in = 1;
  for (std::size_t i = 0; i < c.image_disc_channels.size(); ++i) {
    image_disc_.template emplace<Conv2d<T>>("d1.conv" + std::to_string(i), in,
                                            c.image_disc_channels[i], k, s, pad);
    image_disc_.template emplace<LeakyRelu<T>>(c.leaky_slope);
    in = c.image_disc_channels[i];
  }
  image_disc_.template emplace<GlobalAveragePool<T>>();
  image_disc_.template emplace<Linear<T>>("d1.fc", in, 1);
  image_disc_.template emplace<Sigmoid<T>>(c.probability_floor);

  in = c.latent_dim;
  for (std::size_t i = 0; i < c.latent_disc_hidden.size(); ++i) {
    latent_disc_.template emplace<Linear<T>>("d2.fc" + std::to_string(i), in, c.latent_disc_hidden[i]);
    latent_disc_.template emplace<LeakyRelu<T>>(c.leaky_slope);
    in = c.latent_disc_hidden[i];
  }
  latent_disc_.template emplace<Linear<T>>("d2.out", in, 1);
  latent_disc_.template emplace<Sigmoid<T>>(c.probability_floor);
}

template <typename T>
ParameterSet<T> Networks<T>::init_parameters(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  ParameterSet<T> params;
  encoder_.declare(params, rng, config_.init_std);
  decoder_.declare(params, rng, config_.init_std);
  image_disc_.declare(params, rng, config_.init_std);
  latent_disc_.declare(params, rng, config_.init_std);
  const std::size_t n = config_.latent_dim;
  for (const char* name : {"proj.P1", "proj.P2"}) {
    Tensor<T> p({n, n});
    std::normal_distribution<double> noise(0.0, config_.projection_init_noise);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        p[i * n + j] = static_cast<T>((i == j ? 0.5 : 0.0) + noise(rng));
    params.add(name, std::move(p));
  }
  return params;
}

template <typename T>
void Networks<T>::check_images(const Tensor<T>& images, const char* what) const {
  if (images.rank() != 3 || images.dim(1) != config_.patch_size || images.dim(2) != config_.patch_size)
    throw ShapeError(std::string(what) + ": expected [N, " + std::to_string(config_.patch_size) + ", " +
                     std::to_string(config_.patch_size) + "] images, got " + shape_string(images.shape()));
}

template <typename T>
void Networks<T>::check_latents(const Tensor<T>& latents, const char* what) const {
  if (latents.rank() != 2 || latents.dim(1) != config_.latent_dim)
    throw ShapeError(std::string(what) + ": expected [N, " + std::to_string(config_.latent_dim) +
                     "] latents, got " + shape_string(latents.shape()));
}

template <typename T>
Tensor<T> Networks<T>::encode(const ParameterSet<T>& params, const Tensor<T>& images,
                              const ForwardContext& ctx, Tape<T>* tape) const {
  check_images(images, "encode");
  auto x = images.reshaped({1, images.dim(0), images.dim(1), images.dim(2)});
  return encoder_.forward(params, std::move(x), ctx, tape);
}

template <typename T>
Tensor<T> Networks<T>::decode(const ParameterSet<T>& params, const Tensor<T>& latents,
                              const ForwardContext& ctx, Tape<T>* tape) const {
  check_latents(latents, "decode");
  auto y = decoder_.forward(params, latents, ctx, tape);
  return std::move(y).reshaped({y.dim(1), y.dim(2), y.dim(3)});
}

template <typename T>
Tensor<T> Networks<T>::discriminate_image(const ParameterSet<T>& params, const Tensor<T>& images,
                                          const ForwardContext& ctx, Tape<T>* tape) const {
  check_images(images, "discriminate_image");
  auto x = images.reshaped({1, images.dim(0), images.dim(1), images.dim(2)});
  auto p = image_disc_.forward(params, std::move(x), ctx, tape);
  return std::move(p).reshaped({images.dim(0)});
}

template <typename T>
Tensor<T> Networks<T>::discriminate_latent(const ParameterSet<T>& params, const Tensor<T>& latents,
                                           const ForwardContext& ctx, Tape<T>* tape) const {
  check_latents(latents, "discriminate_latent");
  auto p = latent_disc_.forward(params, latents, ctx, tape);
  return std::move(p).reshaped({latents.dim(0)});
}

template <typename T>
Tensor<T> Networks<T>::encode_backward(const ParameterSet<T>& params, const Tape<T>& tape,
                                       const Tensor<T>& dz, ParameterSet<T>* grads, bool need_dx) const {
  auto dx = encoder_.backward(params, tape, dz, grads, need_dx);
  if (!need_dx) return dx;
  return std::move(dx).reshaped({dx.dim(1), dx.dim(2), dx.dim(3)});
}

template <typename T>
Tensor<T> Networks<T>::decode_backward(const ParameterSet<T>& params, const Tape<T>& tape,
                                       const Tensor<T>& dy, ParameterSet<T>* grads, bool need_dx) const {
  auto d = dy.reshaped({1, dy.dim(0), dy.dim(1), dy.dim(2)});
  return decoder_.backward(params, tape, std::move(d), grads, need_dx);
}

template <typename T>
Tensor<T> Networks<T>::discriminate_image_backward(const ParameterSet<T>& params, const Tape<T>& tape,
                                                   const Tensor<T>& dp, ParameterSet<T>* grads,
                                                   bool need_dx) const {
  auto d = dp.reshaped({dp.size(), 1});
  auto dx = image_disc_.backward(params, tape, std::move(d), grads, need_dx);
  if (!need_dx) return dx;
  return std::move(dx).reshaped({dx.dim(1), dx.dim(2), dx.dim(3)});
}

template <typename T>
Tensor<T> Networks<T>::discriminate_latent_backward(const ParameterSet<T>& params, const Tape<T>& tape,
                                                    const Tensor<T>& dp, ParameterSet<T>* grads,
                                                    bool need_dx) const {
  auto d = dp.reshaped({dp.size(), 1});
  return latent_disc_.backward(params, tape, std::move(d), grads, need_dx);
}

template <typename T>
void Networks<T>::update_encoder_stats(ParameterSet<T>& params, const Tape<T>& tape) const {
  encoder_.update_running_stats(params, tape, config_.batch_norm_momentum);
}

template <typename T>
void Networks<T>::update_decoder_stats(ParameterSet<T>& params, const Tape<T>& tape) const {
  decoder_.update_running_stats(params, tape, config_.batch_norm_momentum);
}

template class Networks<float>;
template class Networks<double>;

}  // namespace lfa
