#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lfa/config.hpp"
#include "lfa/layers.hpp"

namespace lfa {

// Shape contract of the four networks. The encoder has one stride-2 block
// per entry of `encoder_channels`; the decoder mirrors it.
struct ArchitectureConfig {
  std::size_t patch_size = 64;
  std::size_t latent_dim = 1024;
  std::vector<std::size_t> encoder_channels{32, 64, 128, 256, 256};
  std::vector<std::size_t> image_disc_channels{32, 64, 128, 256};
  std::vector<std::size_t> latent_disc_hidden{512, 256};
  std::size_t kernel = 5;
  std::size_t stride = 2;
  double leaky_slope = 0.2;
  double batch_norm_eps = 1e-5;
  double batch_norm_momentum = 0.1;
  double init_std = 0.02;
  double projection_init_noise = 0.01;
  double probability_floor = 1e-6;

  // Throws ConfigError naming the first violated constraint.
  void validate() const;
  std::size_t bottleneck_size() const { return patch_size >> encoder_channels.size(); }

  void write(KeyValues& kv) const;
  static ArchitectureConfig read(const KeyValues& kv);

  // Toy dimensions used for gradient checking: 8x8 patches, latent 16.
  static ArchitectureConfig toy();
};

enum class ParamGroup { Encoder, Decoder, ImageDisc, LatentDisc, Projection };

inline constexpr std::array<ParamGroup, 5> kAllGroups{ParamGroup::Encoder, ParamGroup::Decoder,
                                                      ParamGroup::ImageDisc, ParamGroup::LatentDisc,
                                                      ParamGroup::Projection};

std::string_view group_prefix(ParamGroup g);
std::string_view group_name(ParamGroup g);
ParamGroup group_of(std::string_view param_name);

template <typename T>
class Networks {
 public:
  explicit Networks(ArchitectureConfig config);

  const ArchitectureConfig& config() const { return config_; }

  // Deterministic given `seed`: conv/affine weights ~ N(0, init_std^2),
  // zero biases, batch-norm scale 1 / shift 0, and each projection matrix
  // (1/2) I + N(0, projection_init_noise^2).
  ParameterSet<T> init_parameters(std::uint64_t seed) const;

  // images [N, H, W] -> latents [N, latent_dim] in [0, 1].
  Tensor<T> encode(const ParameterSet<T>& params, const Tensor<T>& images, const ForwardContext& ctx,
                   Tape<T>* tape = nullptr) const;
  // latents [N, latent_dim] -> images [N, H, W], linear output.
  Tensor<T> decode(const ParameterSet<T>& params, const Tensor<T>& latents,
                   const ForwardContext& ctx, Tape<T>* tape = nullptr) const;
  // images [N, H, W] -> probabilities [N], clamped to [floor, 1 - floor].
  Tensor<T> discriminate_image(const ParameterSet<T>& params, const Tensor<T>& images,
                               const ForwardContext& ctx, Tape<T>* tape = nullptr) const;
  // latents [N, latent_dim] -> probabilities [N], clamped likewise.
  Tensor<T> discriminate_latent(const ParameterSet<T>& params, const Tensor<T>& latents,
                                const ForwardContext& ctx, Tape<T>* tape = nullptr) const;

  // Backward passes return the gradient w.r.t. the network input when
  // `need_dx` and accumulate parameter gradients into `grads` when non-null.
  Tensor<T> encode_backward(const ParameterSet<T>& params, const Tape<T>& tape, const Tensor<T>& dz,
                            ParameterSet<T>* grads, bool need_dx = false) const;
  Tensor<T> decode_backward(const ParameterSet<T>& params, const Tape<T>& tape, const Tensor<T>& dy,
                            ParameterSet<T>* grads, bool need_dx = true) const;
  Tensor<T> discriminate_image_backward(const ParameterSet<T>& params, const Tape<T>& tape,
                                        const Tensor<T>& dp, ParameterSet<T>* grads,
                                        bool need_dx = true) const;
  Tensor<T> discriminate_latent_backward(const ParameterSet<T>& params, const Tape<T>& tape,
                                         const Tensor<T>& dp, ParameterSet<T>* grads,
                                         bool need_dx = true) const;

  void update_encoder_stats(ParameterSet<T>& params, const Tape<T>& tape) const;
  void update_decoder_stats(ParameterSet<T>& params, const Tape<T>& tape) const;

 private:
  void check_images(const Tensor<T>& images, const char* what) const;
  void check_latents(const Tensor<T>& latents, const char* what) const;

  ArchitectureConfig config_;
  Sequential<T> encoder_;
  Sequential<T> decoder_;
  Sequential<T> image_disc_;
  Sequential<T> latent_disc_;
};

}  // namespace lfa
