#include "lfa/trainer.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "lfa/errors.hpp"

namespace lfa {

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  for (double lr : {lr_encoder, lr_decoder, lr_projection, lr_image_disc, lr_latent_disc})
    if (!(lr > 0.0)) throw ConfigError("learning rates must be > 0");
  for (double w : {w_rec, w_adv1, w_adv2, w_diff, w_proj})
    if (!(w >= 0.0)) throw ConfigError("loss weights must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("Adam coefficients must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be > 0");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
  if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be >= 0");
  if (probe_size < 1) throw ConfigError("probe_size must be >= 1");
}

void TrainConfig::write(KeyValues& kv) const {
  kv.set("epochs", std::to_string(epochs));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("lr_encoder", format_double(lr_encoder));
  kv.set("lr_decoder", format_double(lr_decoder));
  kv.set("lr_projection", format_double(lr_projection));
  kv.set("lr_image_disc", format_double(lr_image_disc));
  kv.set("lr_latent_disc", format_double(lr_latent_disc));
  kv.set("beta1", format_double(beta1));
  kv.set("beta2", format_double(beta2));
  kv.set("adam_eps", format_double(adam_eps));
  kv.set("w_rec", format_double(w_rec));
  kv.set("w_adv1", format_double(w_adv1));
  kv.set("w_adv2", format_double(w_adv2));
  kv.set("w_diff", format_double(w_diff));
  kv.set("w_proj", format_double(w_proj));
  kv.set("seed", std::to_string(seed));
  kv.set("non_saturating_g", non_saturating_g ? "true" : "false");
  kv.set("checkpoint_every", std::to_string(checkpoint_every));
  kv.set("grad_clip", format_double(grad_clip));
  kv.set("probe_size", std::to_string(probe_size));
  kv.set("deterministic", deterministic ? "true" : "false");
  kv.set("inject_nan_loss", inject_nan_loss);
  kv.set("inject_nan_epoch", std::to_string(inject_nan_epoch));
}

TrainConfig TrainConfig::read(const KeyValues& kv) {
  TrainConfig c;
  auto count = [&](const char* key, std::size_t fallback) {
    const auto v = kv.get_int(key, std::int64_t(fallback));
    if (v < 0) throw ConfigError(std::string(key) + " must be nonnegative");
    return std::size_t(v);
  };
  c.epochs = count("epochs", c.epochs);
  c.batch_size = count("batch_size", c.batch_size);
  c.lr_encoder = kv.get_double("lr_encoder", c.lr_encoder);
  c.lr_decoder = kv.get_double("lr_decoder", c.lr_decoder);
  c.lr_projection = kv.get_double("lr_projection", c.lr_projection);
  c.lr_image_disc = kv.get_double("lr_image_disc", c.lr_image_disc);
  c.lr_latent_disc = kv.get_double("lr_latent_disc", c.lr_latent_disc);
  c.beta1 = kv.get_double("beta1", c.beta1);
  c.beta2 = kv.get_double("beta2", c.beta2);
  c.adam_eps = kv.get_double("adam_eps", c.adam_eps);
  c.w_rec = kv.get_double("w_rec", c.w_rec);
  c.w_adv1 = kv.get_double("w_adv1", c.w_adv1);
  c.w_adv2 = kv.get_double("w_adv2", c.w_adv2);
  c.w_diff = kv.get_double("w_diff", c.w_diff);
  c.w_proj = kv.get_double("w_proj", c.w_proj);
  c.seed = kv.get_uint64("seed", c.seed);
  c.non_saturating_g = kv.get_bool("non_saturating_g", c.non_saturating_g);
  c.checkpoint_every = count("checkpoint_every", c.checkpoint_every);
  c.grad_clip = kv.get_double("grad_clip", c.grad_clip);
  c.probe_size = count("probe_size", c.probe_size);
  c.deterministic = kv.get_bool("deterministic", c.deterministic);
  c.inject_nan_loss = kv.get_string("inject_nan_loss", c.inject_nan_loss);
  c.inject_nan_epoch = count("inject_nan_epoch", c.inject_nan_epoch);
  return c;
}

double TrainConfig::learning_rate(ParamGroup g) const {
  switch (g) {
    case ParamGroup::Encoder: return lr_encoder;
    case ParamGroup::Decoder: return lr_decoder;
    case ParamGroup::ImageDisc: return lr_image_disc;
    case ParamGroup::LatentDisc: return lr_latent_disc;
    case ParamGroup::Projection: return lr_projection;
  }
  return lr_encoder;
}

// ---------------------------------------------------------------- helpers

template <typename T>
Tensor<T> sample_uniform_prior(std::size_t batch, std::size_t dim, std::mt19937_64& rng) {
  Tensor<T> out({batch, dim});
  for (auto& v : out.values()) v = static_cast<T>(std::uniform_real_distribution<double>(0.0, 1.0)(rng));
  return out;
}

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

std::mt19937_64 rng_from_string(const std::string& text) {
  std::mt19937_64 rng;
  std::istringstream is(text);
  is >> rng;
  if (!is) throw CheckpointIntegrityError("unreadable random generator state");
  return rng;
}

namespace {

template <typename T>
ProjectionPair<T> pair_of(const ParameterSet<T>& params) {
  return {params.at("proj.P1"), params.at("proj.P2")};
}

template <typename T>
Tensor<T> stack_rows(const Tensor<T>& a, const Tensor<T>& b) {
  Shape s = a.shape();
  s[0] += b.dim(0);
  Tensor<T> out(s);
  std::copy(a.data(), a.data() + a.size(), out.data());
  std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
  return out;
}

template <typename T>
void scale(ParameterSet<T>& grads, T w) {
  for (auto& [_, t] : grads)
    for (auto& v : t.values()) v *= w;
}

}  // namespace

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_rows(const Tensor<T>& stacked) {
  Shape s = stacked.shape();
  s[0] /= 2;
  Tensor<T> a(s), b(s);
  std::copy(stacked.data(), stacked.data() + a.size(), a.data());
  std::copy(stacked.data() + a.size(), stacked.data() + stacked.size(), b.data());
  return {std::move(a), std::move(b)};
}

ProjectionPair<float> projection_of(const ParameterSet<float>& params) { return pair_of(params); }

// ---------------------------------------------------------------- objective

template <typename T>
ForwardPass<T> Objective<T>::forward(const ParameterSet<T>& params, const Tensor<T>& x,
                                     const ForwardContext& ctx) const {
  ForwardPass<T> fp;
  fp.z = nets_.encode(params, x, ctx, &fp.encoder_tape);
  auto [z1, z2] = project(pair_of(params), fp.z);
  fp.stacked = stack_rows(z1, z2);
  fp.y = nets_.decode(params, fp.stacked, ctx, &fp.decoder_tape);
  std::tie(fp.y1, fp.y2) = split_rows(fp.y);
  fp.r = fp.y1;
  for (std::size_t i = 0; i < fp.r.size(); ++i) fp.r[i] += fp.y2[i];
  return fp;
}

template <typename T>
T Objective<T>::rec(const ParameterSet<T>& params, const Tensor<T>& x, const ForwardPass<T>& fp,
                    ParameterSet<T>* grads) const {
  Tensor<T> dr;
  const T loss = rec_loss(x, fp.r, grads ? &dr : nullptr);
  if (!grads) return loss;
  const auto dstacked = nets_.decode_backward(params, fp.decoder_tape, stack_rows(dr, dr), grads, true);
  auto [dz1, dz2] = split_rows(dstacked);
  const auto pair = pair_of(params);
  const Shape sq{pair.dim(), pair.dim()};
  auto dz = project_backward(pair, fp.z, dz1, dz2, &grads->accumulator("proj.P1", sq),
                             &grads->accumulator("proj.P2", sq), true);
  nets_.encode_backward(params, fp.encoder_tape, dz, grads, false);
  return loss;
}

template <typename T>
T Objective<T>::adv1_d(const ParameterSet<T>& params, const Tensor<T>& x, const ForwardPass<T>& fp,
                       const ForwardContext& ctx, ParameterSet<T>* grads) const {
  Tape<T> real_tape, fake_tape;
  const auto d_real = nets_.discriminate_image(params, x, ctx, &real_tape);
  const auto d_fake = nets_.discriminate_image(params, fp.r, ctx, &fake_tape);
  Tensor<T> g_real, g_fake;
  const T loss = adv1_discriminator_loss(d_real, d_fake, grads ? &g_real : nullptr, grads ? &g_fake : nullptr);
  if (grads) {
    nets_.discriminate_image_backward(params, real_tape, g_real, grads, false);
    nets_.discriminate_image_backward(params, fake_tape, g_fake, grads, false);
  }
  return loss;
}

template <typename T>
T Objective<T>::adv1_g(const ParameterSet<T>& params, const ForwardPass<T>& fp, const ForwardContext& ctx,
                       ParameterSet<T>* grads) const {
  Tape<T> tape;
  const auto d_fake = nets_.discriminate_image(params, fp.r, ctx, &tape);
  Tensor<T> g;
  const T loss = adv1_generator_loss(d_fake, grads ? &g : nullptr, non_saturating_);
  if (grads) {
    const auto dr = nets_.discriminate_image_backward(params, tape, g, nullptr, true);
    nets_.decode_backward(params, fp.decoder_tape, stack_rows(dr, dr), grads, false);
  }
  return loss;
}

template <typename T>
T Objective<T>::adv2_d(const ParameterSet<T>& params, const ForwardPass<T>& fp, const Tensor<T>& prior,
                       const ForwardContext& ctx, ParameterSet<T>* grads) const {
  Tape<T> enc_tape, prior_tape;
  const auto d_enc = nets_.discriminate_latent(params, fp.z, ctx, &enc_tape);
  const auto d_prior = nets_.discriminate_latent(params, prior, ctx, &prior_tape);
  Tensor<T> g_enc, g_prior;
  const T loss = adv2_discriminator_loss(d_enc, d_prior, grads ? &g_enc : nullptr, grads ? &g_prior : nullptr);
  if (grads) {
    nets_.discriminate_latent_backward(params, enc_tape, g_enc, grads, false);
    nets_.discriminate_latent_backward(params, prior_tape, g_prior, grads, false);
  }
  return loss;
}

template <typename T>
T Objective<T>::adv2_e(const ParameterSet<T>& params, const ForwardPass<T>& fp, const ForwardContext& ctx,
                       ParameterSet<T>* grads) const {
  Tape<T> tape;
  const auto d_enc = nets_.discriminate_latent(params, fp.z, ctx, &tape);
  Tensor<T> g;
  const T loss = adv2_encoder_loss(d_enc, grads ? &g : nullptr);
  if (grads) {
    const auto dz = nets_.discriminate_latent_backward(params, tape, g, nullptr, true);
    nets_.encode_backward(params, fp.encoder_tape, dz, grads, false);
  }
  return loss;
}

template <typename T>
T Objective<T>::diff(const ParameterSet<T>& params, const ForwardPass<T>& fp, const ForwardContext& ctx,
                     ParameterSet<T>* grads) const {
  Tensor<T> g1, g2;
  const T loss = diff_loss(fp.y1, fp.y2, grads ? &g1 : nullptr, grads ? &g2 : nullptr);
  if (ctx.kinks)
    for (std::size_t i = 0; i < fp.y1.size(); ++i)
      ctx.kinks->push_back(fp.y1[i] > fp.y2[i] ? 2 : (fp.y1[i] < fp.y2[i] ? 0 : 1));
  if (grads) {
    const auto dstacked = nets_.decode_backward(params, fp.decoder_tape, stack_rows(g1, g2), nullptr, true);
    auto [dz1, dz2] = split_rows(dstacked);
    const auto pair = pair_of(params);
    const Shape sq{pair.dim(), pair.dim()};
    project_backward(pair, fp.z, dz1, dz2, &grads->accumulator("proj.P1", sq), &grads->accumulator("proj.P2", sq),
                     false);
  }
  return loss;
}

template <typename T>
T Objective<T>::proj(const ParameterSet<T>& params, ParameterSet<T>* grads) const {
  if (!grads) return proj_loss(pair_of(params));
  Tensor<T> g1, g2;
  const T loss = proj_loss(pair_of(params), &g1, &g2);
  auto& a1 = grads->accumulator("proj.P1", g1.shape());
  auto& a2 = grads->accumulator("proj.P2", g2.shape());
  for (std::size_t i = 0; i < g1.size(); ++i) {
    a1[i] += g1[i];
    a2[i] += g2[i];
  }
  return loss;
}

template class Objective<float>;
template class Objective<double>;
template std::pair<Tensor<float>, Tensor<float>> split_rows(const Tensor<float>&);
template std::pair<Tensor<double>, Tensor<double>> split_rows(const Tensor<double>&);
template Tensor<float> sample_uniform_prior<float>(std::size_t, std::size_t, std::mt19937_64&);
template Tensor<double> sample_uniform_prior<double>(std::size_t, std::size_t, std::mt19937_64&);

// ---------------------------------------------------------------- optimizer

void adam_update(ParameterSet<float>& params, const ParameterSet<float>& grads, ParamGroup group,
                 AdamState& state, const TrainConfig& config) {
  const auto prefix = group_prefix(group);
  double clip = 1.0;
  if (config.grad_clip > 0.0) {
    double sq = 0.0;
    for (const auto& [name, g] : grads)
      if (has_prefix(name, prefix) && is_trainable(name))
        for (float v : g.values()) sq += double(v) * double(v);
    const double norm = std::sqrt(sq);
    if (norm > config.grad_clip) clip = config.grad_clip / norm;
  }
  ++state.step;
  const double t = double(state.step);
  const double lr = config.learning_rate(group);
  const auto b1 = static_cast<float>(config.beta1), b2 = static_cast<float>(config.beta2);
  const auto c1 = static_cast<float>(1.0 / (1.0 - std::pow(config.beta1, t)));
  const auto c2 = static_cast<float>(1.0 / (1.0 - std::pow(config.beta2, t)));
  const auto step = static_cast<float>(lr), eps = static_cast<float>(config.adam_eps);
  const auto gscale = static_cast<float>(clip);
  for (const auto& [name, g] : grads) {
    if (!has_prefix(name, prefix) || !is_trainable(name)) continue;
    auto& p = params.at(name);
    auto& m = state.m.accumulator(name, p.shape());
    auto& v = state.v.accumulator(name, p.shape());
    for (std::size_t i = 0; i < p.size(); ++i) {
      const float gi = g[i] * gscale;
      m[i] = b1 * m[i] + (1.0f - b1) * gi;
      v[i] = b2 * v[i] + (1.0f - b2) * gi * gi;
      p[i] -= step * (m[i] * c1) / (std::sqrt(v[i] * c2) + eps);
    }
  }
}

// ---------------------------------------------------------------- metrics

std::string MetricsRecord::to_json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["l_rec"] = losses.l_rec;
  j["l_adv1_d"] = losses.l_adv1_d;
  j["l_adv1_g"] = losses.l_adv1_g;
  j["l_adv2_d"] = losses.l_adv2_d;
  j["l_adv2_e"] = losses.l_adv2_e;
  j["l_diff"] = losses.l_diff;
  j["l_proj"] = losses.l_proj;
  j["idempotency_p1"] = idempotency_p1;
  j["idempotency_p2"] = idempotency_p2;
  j["latent_orthogonality"] = latent_orthogonality;
  j["wall_clock_seconds"] = wall_clock_seconds;
  return j.dump();
}

MetricsRecord MetricsRecord::from_json(const std::string& line) {
  MetricsRecord r;
  try {
    const auto j = nlohmann::json::parse(line);
    r.epoch = j.at("epoch").get<std::size_t>();
    r.losses.l_rec = j.at("l_rec").get<double>();
    r.losses.l_adv1_d = j.at("l_adv1_d").get<double>();
    r.losses.l_adv1_g = j.at("l_adv1_g").get<double>();
    r.losses.l_adv2_d = j.at("l_adv2_d").get<double>();
    r.losses.l_adv2_e = j.at("l_adv2_e").get<double>();
    r.losses.l_diff = j.at("l_diff").get<double>();
    r.losses.l_proj = j.at("l_proj").get<double>();
    r.idempotency_p1 = j.at("idempotency_p1").get<double>();
    r.idempotency_p2 = j.at("idempotency_p2").get<double>();
    r.latent_orthogonality = j.at("latent_orthogonality").get<double>();
    r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad metrics record: ") + e.what());
  }
  return r;
}

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<MetricsRecord> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(MetricsRecord::from_json(line));
  return out;
}

// ---------------------------------------------------------------- trainer

Trainer::Trainer(ArchitectureConfig arch, TrainConfig config)
    : arch_(std::move(arch)), config_(std::move(config)), nets_(arch_) {
  config_.validate();
}

TrainState Trainer::initial_state() const {
  TrainState s;
  s.params = nets_.init_parameters(config_.seed);
  std::seed_seq seq{config_.seed, std::uint64_t{0x7452414eULL}};
  s.rng.seed(seq);
  return s;
}

LossBundle Trainer::train_step(TrainState& state, const Tensor<float>& x, const TrainHooks& hooks) const {
  if (x.rank() != 3 || x.dim(0) == 0) throw ShapeError("train_step: expected a nonempty [B, H, W] batch");
  const Objective<float> obj(nets_, config_.non_saturating_g);
  const ForwardContext ctx{Mode::Train, nullptr};
  auto& params = state.params;
  const int epoch = static_cast<int>(state.epoch + 1);
  LossBundle out;

  auto hook = [&](std::string_view name, HookPhase phase) {
    if (hooks.on_substep) hooks.on_substep(name, phase, params);
  };
  auto check = [&](const char* name, float value) -> double {
    double v = value;
    if (!config_.inject_nan_loss.empty() && config_.inject_nan_loss == name &&
        config_.inject_nan_epoch == state.epoch + 1)
      v = std::numeric_limits<double>::quiet_NaN();
    if (!std::isfinite(v)) throw DivergenceError(name, epoch);
    return v;
  };
  auto update = [&](ParameterSet<float>& grads, std::initializer_list<ParamGroup> groups) {
    for (auto g : groups) adam_update(params, grads, g, state.optimizer[std::size_t(g)], config_);
  };

  // Reconstruction: E, G, P.
  hook("rec", HookPhase::Before);
  auto fp = obj.forward(params, x, ctx);
  {
    ParameterSet<float> grads;
    out.l_rec = check("l_rec", obj.rec(params, x, fp, &grads));
    scale(grads, float(config_.w_rec));
    update(grads, {ParamGroup::Encoder, ParamGroup::Decoder, ParamGroup::Projection});
    nets_.update_encoder_stats(params, fp.encoder_tape);
    nets_.update_decoder_stats(params, fp.decoder_tape);
  }
  hook("rec", HookPhase::After);

  // Image adversary: D1 first, then G against the updated D1.
  hook("adv1_d", HookPhase::Before);
  fp = obj.forward(params, x, ctx);
  {
    ParameterSet<float> grads;
    out.l_adv1_d = check("l_adv1_d", obj.adv1_d(params, x, fp, ctx, &grads));
    scale(grads, float(config_.w_adv1));
    update(grads, {ParamGroup::ImageDisc});
  }
  hook("adv1_d", HookPhase::After);
  hook("adv1_g", HookPhase::Before);
  {
    ParameterSet<float> grads;
    out.l_adv1_g = check("l_adv1_g", obj.adv1_g(params, fp, ctx, &grads));
    scale(grads, float(config_.w_adv1));
    update(grads, {ParamGroup::Decoder});
  }
  hook("adv1_g", HookPhase::After);

  // Latent adversary: D2 first, then E. z depends only on E, unchanged so far.
  hook("adv2_d", HookPhase::Before);
  {
    const auto prior = sample_uniform_prior<float>(x.dim(0), arch_.latent_dim, state.rng);
    ParameterSet<float> grads;
    out.l_adv2_d = check("l_adv2_d", obj.adv2_d(params, fp, prior, ctx, &grads));
    scale(grads, float(config_.w_adv2));
    update(grads, {ParamGroup::LatentDisc});
  }
  hook("adv2_d", HookPhase::After);
  hook("adv2_e", HookPhase::Before);
  {
    ParameterSet<float> grads;
    out.l_adv2_e = check("l_adv2_e", obj.adv2_e(params, fp, ctx, &grads));
    scale(grads, float(config_.w_adv2));
    update(grads, {ParamGroup::Encoder});
  }
  hook("adv2_e", HookPhase::After);

  // Projection algebra and branch separation: P only.
  hook("proj+diff", HookPhase::Before);
  fp = obj.forward(params, x, ctx);
  {
    ParameterSet<float> diff_grads, proj_grads;
    out.l_diff = check("l_diff", obj.diff(params, fp, ctx, &diff_grads));
    out.l_proj = check("l_proj", obj.proj(params, &proj_grads));
    scale(diff_grads, float(config_.w_diff));
    scale(proj_grads, float(config_.w_proj));
    for (auto& [name, g] : proj_grads) {
      auto& d = diff_grads.accumulator(name, g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
    update(diff_grads, {ParamGroup::Projection});
  }
  hook("proj+diff", HookPhase::After);
  return out;
}

MetricsRecord Trainer::evaluate(const TrainState& state, const Tensor<float>& probe, std::size_t epoch) const {
  MetricsRecord r;
  r.epoch = epoch;
  const auto pair = pair_of(state.params);
  r.idempotency_p1 = idempotency_residual(pair.p1);
  r.idempotency_p2 = idempotency_residual(pair.p2);
  const auto z = nets_.encode(state.params, probe, ForwardContext{Mode::Inference, nullptr});
  r.latent_orthogonality = mean_latent_orthogonality(pair, z);
  return r;
}

namespace {

Tensor<float> gather(const Tensor<float>& all, const std::vector<std::size_t>& order, std::size_t begin,
                     std::size_t end) {
  const std::size_t pixels = all.dim(1) * all.dim(2);
  Tensor<float> out({end - begin, all.dim(1), all.dim(2)});
  for (std::size_t i = begin; i < end; ++i)
    std::copy(all.data() + order[i] * pixels, all.data() + (order[i] + 1) * pixels,
              out.data() + (i - begin) * pixels);
  return out;
}

void shuffle(std::vector<std::size_t>& order, std::mt19937_64& rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
    std::swap(order[i - 1], order[j]);
  }
}

}  // namespace

std::vector<MetricsRecord> Trainer::train(TrainState& state, const std::vector<ImagePatch>& images,
                                          const std::filesystem::path& out_dir, const TrainHooks& hooks) const {
  if (images.empty()) throw ConfigError("train: dataset is empty");
  for (const auto& p : images)
    if (p.height != arch_.patch_size || p.width != arch_.patch_size)
      throw ShapeError("train: patch " + p.source_id + " is not " + std::to_string(arch_.patch_size) + "x" +
                       std::to_string(arch_.patch_size));
  const auto all = stack_patches<float>(std::span<const ImagePatch>(images));
  std::vector<std::size_t> probe_idx(std::min(config_.probe_size, images.size()));
  std::iota(probe_idx.begin(), probe_idx.end(), std::size_t{0});
  const auto probe = gather(all, probe_idx, 0, probe_idx.size());

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  const auto metrics_path = out_dir / "metrics.jsonl";
  std::vector<MetricsRecord> kept;
  if (state.epoch > 0 && std::filesystem::exists(metrics_path))
    for (auto& r : read_metrics(metrics_path))
      if (r.epoch <= state.epoch) kept.push_back(r);
  std::ofstream metrics(metrics_path, std::ios::binary | std::ios::trunc);
  if (!metrics) throw IoError("cannot write " + metrics_path.string());
  for (const auto& r : kept) metrics << r.to_json() << '\n';
  metrics.flush();

  const auto start = std::chrono::steady_clock::now();
  std::vector<MetricsRecord> produced;
  std::vector<std::size_t> order(images.size());
  while (state.epoch < config_.epochs) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order, state.rng);
    LossBundle sum;
    std::size_t steps = 0;
    for (std::size_t b = 0; b < order.size(); b += config_.batch_size) {
      const auto batch = gather(all, order, b, std::min(order.size(), b + config_.batch_size));
      sum += train_step(state, batch, hooks);
      ++steps;
      if (hooks.on_step) hooks.on_step(state.epoch + 1, steps);
    }
    sum /= double(steps);
    ++state.epoch;
    auto record = evaluate(state, probe, state.epoch);
    record.losses = sum;
    if (!config_.deterministic)
      record.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    metrics << record.to_json() << '\n';
    metrics.flush();
    if (!metrics) throw IoError("cannot write " + metrics_path.string());
    produced.push_back(record);
    if (state.epoch % config_.checkpoint_every == 0 && state.epoch < config_.epochs) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04zu.ckpt", state.epoch);
      save_checkpoint(to_checkpoint(state), out_dir / "checkpoints" / name);
    }
  }
  save_checkpoint(to_checkpoint(state), out_dir / "final.ckpt");
  return produced;
}

KeyValues Trainer::resolved_config() const {
  KeyValues kv;
  arch_.write(kv);
  config_.write(kv);
  return kv;
}

Checkpoint Trainer::to_checkpoint(const TrainState& state) const {
  Checkpoint c;
  c.epoch = state.epoch;
  c.config = resolved_config();
  c.params = state.params;
  c.optimizer = state.optimizer;
  c.rng_state = rng_to_string(state.rng);
  return c;
}

TrainState Trainer::from_checkpoint(const Checkpoint& c) const {
  TrainState s;
  s.params = c.params;
  s.optimizer = c.optimizer;
  s.rng = rng_from_string(c.rng_state);
  s.epoch = c.epoch;
  const auto expected = nets_.init_parameters(0);
  for (const auto& [name, t] : expected) {
    if (!s.params.contains(name)) throw CheckpointIntegrityError("checkpoint lacks parameter '" + name + "'");
    if (s.params.at(name).shape() != t.shape())
      throw CheckpointIntegrityError("checkpoint parameter '" + name + "' has shape " +
                                     shape_string(s.params.at(name).shape()) + ", expected " + shape_string(t.shape()));
  }
  return s;
}

std::pair<Trainer, TrainState> resume_from(const Checkpoint& checkpoint, const KeyValues& overrides) {
  KeyValues kv = checkpoint.config;
  kv.merge(overrides);
  Trainer trainer(ArchitectureConfig::read(kv), TrainConfig::read(kv));
  auto state = trainer.from_checkpoint(checkpoint);
  return {std::move(trainer), std::move(state)};
}

}  // namespace lfa
