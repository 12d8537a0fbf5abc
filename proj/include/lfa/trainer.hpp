#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "lfa/checkpoint.hpp"
#include "lfa/data.hpp"
#include "lfa/losses.hpp"
#include "lfa/networks.hpp"
#include "lfa/projection.hpp"

namespace lfa {

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 32;
  double lr_encoder = 1e-4;
  double lr_decoder = 1e-4;
  double lr_projection = 1e-4;
  double lr_image_disc = 1e-4;
  double lr_latent_disc = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double w_rec = 1.0;
  double w_adv1 = 1.0;
  double w_adv2 = 1.0;
  double w_diff = 1.0;
  double w_proj = 1.0;
  std::uint64_t seed = 0;
  bool non_saturating_g = false;
  std::size_t checkpoint_every = 50;
  double grad_clip = 0.0;  // max global norm per group update; 0 disables
  std::size_t probe_size = 32;
  bool deterministic = false;
  // Test hook: replace the named loss with NaN in the given epoch.
  std::string inject_nan_loss;
  std::size_t inject_nan_epoch = 0;

  void validate() const;
  void write(KeyValues& kv) const;
  static TrainConfig read(const KeyValues& kv);
  double learning_rate(ParamGroup g) const;
};

// i.i.d. U[0, 1] samples, [batch, dim].
template <typename T>
Tensor<T> sample_uniform_prior(std::size_t batch, std::size_t dim, std::mt19937_64& rng);

std::string rng_to_string(const std::mt19937_64& rng);
std::mt19937_64 rng_from_string(const std::string& text);

ProjectionPair<float> projection_of(const ParameterSet<float>& params);

// Forward quantities shared by the sub-steps: X -> z -> (z1, z2) -> (Y1, Y2) -> R.
// The decoder sees the stacked batch [z1; z2], so both branches share one
// set of batch-norm statistics.
template <typename T>
struct ForwardPass {
  Tensor<T> z;        // [B, L]
  Tensor<T> stacked;  // [2B, L]
  Tensor<T> y;        // [2B, H, W]
  Tensor<T> y1, y2, r;
  Tape<T> encoder_tape;
  Tape<T> decoder_tape;
};

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_rows(const Tensor<T>& stacked);

// Loss terms of one mini-batch as functions of the parameters. Every method
// returns the unweighted loss value and, when `grads` is non-null,
// accumulates gradients of that loss for the parameter groups the sub-step
// updates.
template <typename T>
class Objective {
 public:
  explicit Objective(const Networks<T>& nets, bool non_saturating_g = false)
      : nets_(nets), non_saturating_(non_saturating_g) {}

  ForwardPass<T> forward(const ParameterSet<T>& params, const Tensor<T>& x, const ForwardContext& ctx) const;

  // E, G, P
  T rec(const ParameterSet<T>& params, const Tensor<T>& x, const ForwardPass<T>& fp,
        ParameterSet<T>* grads) const;
  // D1
  T adv1_d(const ParameterSet<T>& params, const Tensor<T>& x, const ForwardPass<T>& fp,
           const ForwardContext& ctx, ParameterSet<T>* grads) const;
  // G
  T adv1_g(const ParameterSet<T>& params, const ForwardPass<T>& fp, const ForwardContext& ctx,
           ParameterSet<T>* grads) const;
  // D2
  T adv2_d(const ParameterSet<T>& params, const ForwardPass<T>& fp, const Tensor<T>& prior,
           const ForwardContext& ctx, ParameterSet<T>* grads) const;
  // E
  T adv2_e(const ParameterSet<T>& params, const ForwardPass<T>& fp, const ForwardContext& ctx,
           ParameterSet<T>* grads) const;
  // P only; the gradient flows through G without touching its parameters.
  // Pushes the sign pattern of Y1 - Y2 into ctx.kinks.
  T diff(const ParameterSet<T>& params, const ForwardPass<T>& fp, const ForwardContext& ctx,
         ParameterSet<T>* grads) const;
  // P
  T proj(const ParameterSet<T>& params, ParameterSet<T>* grads) const;

 private:
  const Networks<T>& nets_;
  bool non_saturating_;
};

inline constexpr std::array<std::string_view, 6> kSubsteps{"rec", "adv1_d", "adv1_g", "adv2_d", "adv2_e", "proj+diff"};

enum class HookPhase { Before, After };

struct TrainHooks {
  std::function<void(std::string_view substep, HookPhase phase, const ParameterSet<float>& params)> on_substep;
  std::function<void(std::size_t epoch, std::size_t step)> on_step;
};

struct MetricsRecord {
  std::size_t epoch = 0;
  LossBundle losses;
  double idempotency_p1 = 0.0;
  double idempotency_p2 = 0.0;
  double latent_orthogonality = 0.0;
  double wall_clock_seconds = 0.0;

  std::string to_json() const;
  static MetricsRecord from_json(const std::string& line);
};

struct TrainState {
  ParameterSet<float> params;
  std::array<AdamState, 5> optimizer;
  std::mt19937_64 rng;
  std::size_t epoch = 0;  // completed epochs
};

// Adam with per-group moments; groups not listed in an update keep their
// moments and step counts untouched.
void adam_update(ParameterSet<float>& params, const ParameterSet<float>& grads, ParamGroup group,
                 AdamState& state, const TrainConfig& config);

class Trainer {
 public:
  Trainer(ArchitectureConfig arch, TrainConfig config);

  const ArchitectureConfig& arch() const { return arch_; }
  const TrainConfig& config() const { return config_; }
  const Networks<float>& networks() const { return nets_; }

  TrainState initial_state() const;

  // One ordered sequence of sub-steps on `batch` [B, H, W]. Throws
  // DivergenceError when a loss is non-finite.
  LossBundle train_step(TrainState& state, const Tensor<float>& batch, const TrainHooks& hooks = {}) const;

  // Runs the remaining epochs of `state` over `images`, appending one
  // metrics record per epoch to out_dir/metrics.jsonl and writing
  // checkpoints. Returns the records produced by this call.
  std::vector<MetricsRecord> train(TrainState& state, const std::vector<ImagePatch>& images,
                                   const std::filesystem::path& out_dir, const TrainHooks& hooks = {}) const;

  MetricsRecord evaluate(const TrainState& state, const Tensor<float>& probe, std::size_t epoch) const;

  Checkpoint to_checkpoint(const TrainState& state) const;
  TrainState from_checkpoint(const Checkpoint& checkpoint) const;
  KeyValues resolved_config() const;

 private:
  ArchitectureConfig arch_;
  TrainConfig config_;
  Networks<float> nets_;
};

// Restores a trainer and its state from a checkpoint; training settings
// come from the checkpoint unless overridden in `overrides`.
std::pair<Trainer, TrainState> resume_from(const Checkpoint& checkpoint, const KeyValues& overrides = {});

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path);

}  // namespace lfa
