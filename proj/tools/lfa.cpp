// lfa: data generation, training, annotation, baseline comparison and
// gradient checking from one entry point.
//
// Exit codes: 0 success, 1 gradcheck failure, 2 usage/validation/I/O,
// 3 training divergence.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>

#include "lfa/annotator.hpp"
#include "lfa/attributes.hpp"
#include "lfa/checkpoint.hpp"
#include "lfa/data.hpp"
#include "lfa/errors.hpp"
#include "lfa/gradcheck.hpp"
#include "lfa/synthetic.hpp"
#include "lfa/trainer.hpp"

namespace fs = std::filesystem;
using namespace lfa;

namespace {

constexpr int kUsage = 2;
constexpr int kDivergence = 3;

// Flags that map one-to-one onto config keys: --batch-size sets batch_size.
struct KeyFlags {
  std::vector<std::pair<std::string, std::vector<std::string>>> slots;

  void add(CLI::App* app, const std::vector<std::pair<std::string, std::string>>& keys) {
    slots.reserve(slots.size() + keys.size());
    for (const auto& [key, help] : keys) {
      slots.emplace_back(key, std::vector<std::string>{});
      std::string flag = "--" + key;
      std::replace(flag.begin() + 2, flag.end(), '_', '-');
      app->add_option(flag, slots.back().second, help)->expected(1, 8)->allow_extra_args(false);
    }
  }
  void apply(KeyValues& kv) const {
    for (const auto& [key, values] : slots)
      if (!values.empty()) kv.set(key, join(values, ","));
  }
};

struct Common {
  std::string config_file;
  std::string out;
  std::vector<std::string> sets;
  bool deterministic = false;
  KeyFlags flags;

  void add(CLI::App* app) {
    app->add_option("--config", config_file, "key=value file; flags override its values");
    app->add_option("--out", out, "output directory (default: runs/<timestamp>)");
    app->add_option("--set", sets, "extra key=value override, repeatable");
    app->add_flag("--deterministic", deterministic, "deterministic mode (also LFA_DETERMINISTIC=1)");
  }

  bool is_deterministic() const {
    const char* env = std::getenv("LFA_DETERMINISTIC");
    return deterministic || (env && std::string(env) == "1");
  }

  // defaults < config file < flags
  KeyValues resolve(const KeyValues& defaults) const {
    KeyValues kv = defaults;
    if (!config_file.empty()) kv.merge(KeyValues::load(config_file));
    flags.apply(kv);
    for (const auto& s : sets) kv.merge(KeyValues::parse(s));
    if (is_deterministic()) kv.set("deterministic", "true");
    return kv;
  }

  fs::path out_dir() const {
    if (!out.empty()) return out;
    if (is_deterministic()) throw ConfigError("deterministic mode requires --out (no timestamped default)");
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", std::localtime(&now));
    return fs::path("runs") / buf;
  }
};

void echo_config(const fs::path& dir, const KeyValues& kv) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const auto path = dir / "config.resolved.txt";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << kv.serialize();
  if (!out) throw IoError("cannot write " + path.string());
  std::cout << "resolved config: " << path.string() << "\n";
}

std::vector<std::pair<std::string, std::string>> synthetic_keys() {
  return {{"patch_size", "patch edge in pixels"},
          {"n_per_class", "images per structure kind"},
          {"structure_kinds", "comma list of blob, fault_line, chaotic_patch, layered_band"},
          {"background_layers", "min max sinusoid layers"},
          {"background_frequency", "min max layer frequency (cycles/pixel)"},
          {"background_dip", "min max layer dip"},
          {"background_amplitude", "background peak amplitude"},
          {"structure_amplitude", "structure peak amplitude"},
          {"area_fraction", "min max structure area fraction"},
          {"noise_sigma", "additive Gaussian noise"},
          {"seed", "generator seed"}};
}

std::vector<std::pair<std::string, std::string>> model_keys() {
  return {{"patch_size", "patch edge in pixels"},
          {"latent_dim", "latent length"},
          {"encoder_channels", "encoder channel schedule"},
          {"image_disc_channels", "image discriminator channels"},
          {"latent_disc_hidden", "latent discriminator widths"},
          {"kernel", "convolution kernel"},
          {"epochs", "training epochs"},
          {"batch_size", "mini-batch size"},
          {"lr_encoder", "encoder learning rate"},
          {"lr_decoder", "decoder learning rate"},
          {"lr_projection", "projection learning rate"},
          {"lr_image_disc", "image discriminator learning rate"},
          {"lr_latent_disc", "latent discriminator learning rate"},
          {"beta1", "Adam beta1"},
          {"beta2", "Adam beta2"},
          {"w_rec", "reconstruction weight"},
          {"w_adv1", "image adversarial weight"},
          {"w_adv2", "latent adversarial weight"},
          {"w_diff", "branch difference weight"},
          {"w_proj", "projection algebra weight"},
          {"seed", "initialization and shuffling seed"},
          {"non_saturating_g", "non-saturating generator loss"},
          {"checkpoint_every", "epochs between checkpoints"},
          {"grad_clip", "per-group gradient norm clip, 0 disables"},
          {"probe_size", "probe batch size for latent orthogonality"},
          {"inject_nan_loss", "test hook: loss name to poison"},
          {"inject_nan_epoch", "test hook: epoch to poison"}};
}

KeyValues model_defaults() {
  KeyValues kv;
  ArchitectureConfig{}.write(kv);
  TrainConfig{}.write(kv);
  return kv;
}

std::vector<ImagePatch> load_patches(const std::vector<LoadedSample>& samples) {
  std::vector<ImagePatch> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.patch);
  return out;
}

int cmd_generate(const Common& c) {
  KeyValues defaults;
  SyntheticSpec{}.write(defaults);
  const auto kv = c.resolve(defaults);
  const auto spec = SyntheticSpec::read(kv);
  spec.validate();
  const auto dir = c.out_dir();
  echo_config(dir, kv);
  const auto samples = generate_synthetic(spec);
  const auto manifest = write_synthetic(dir, samples);
  std::cout << "wrote " << samples.size() << " images, " << samples.size() << " masks, manifest with "
            << manifest.entries.size() << " entries to " << dir.string() << "\n";
  return 0;
}

int cmd_train(const Common& c, const std::string& manifest_path, const std::string& resume) {
  if (manifest_path.empty()) throw ConfigError("train requires --manifest");
  const auto dir = c.out_dir();
  std::optional<Trainer> trainer;
  TrainState state;
  if (!resume.empty()) {
    KeyValues overrides;
    if (!c.config_file.empty()) overrides.merge(KeyValues::load(c.config_file));
    c.flags.apply(overrides);
    for (const auto& s : c.sets) overrides.merge(KeyValues::parse(s));
    if (c.is_deterministic()) overrides.set("deterministic", "true");
    auto [t, s] = resume_from(load_checkpoint(resume), overrides);
    trainer.emplace(std::move(t));
    state = std::move(s);
  } else {
    const auto kv = c.resolve(model_defaults());
    trainer.emplace(ArchitectureConfig::read(kv), TrainConfig::read(kv));
    state = trainer->initial_state();
  }
  echo_config(dir, trainer->resolved_config());
  const auto manifest = DatasetManifest::read(manifest_path);
  const auto images = load_patches(load_all(manifest, trainer->arch().patch_size));
  std::cout << "training on " << images.size() << " images from epoch " << state.epoch + 1 << " to "
            << trainer->config().epochs << "\n";
  TrainHooks hooks;
  const auto records = trainer->train(state, images, dir, hooks);
  if (!records.empty()) {
    const auto& r = records.back();
    std::cout << "epoch " << r.epoch << ": l_rec=" << r.losses.l_rec << " l_diff=" << r.losses.l_diff
              << " l_proj=" << r.losses.l_proj << " latent_orthogonality=" << r.latent_orthogonality << "\n";
  }
  std::cout << "final checkpoint: " << (dir / "final.ckpt").string() << "\n";
  return 0;
}

struct Loaded {
  Trainer trainer;
  TrainState state;
};

Loaded load_model(const std::string& checkpoint) {
  if (checkpoint.empty()) throw ConfigError("--checkpoint is required");
  auto [t, s] = resume_from(load_checkpoint(checkpoint));
  return {std::move(t), std::move(s)};
}

int cmd_annotate(const Common& c, const std::string& checkpoint, const std::string& manifest_path, double tau,
                 std::size_t radius) {
  if (manifest_path.empty()) throw ConfigError("annotate requires --manifest");
  if (!(tau >= 0.0 && tau <= 1.0)) throw ParameterError("--tau must lie in [0, 1]");
  auto model = load_model(checkpoint);
  KeyValues kv = model.trainer.resolved_config();
  kv.set("checkpoint", checkpoint);
  kv.set("manifest", manifest_path);
  kv.set("tau", format_double(tau));
  kv.set("smoothing_radius", std::to_string(radius));
  const auto dir = c.out_dir();
  echo_config(dir, kv);
  const auto manifest = DatasetManifest::read(manifest_path);
  const auto samples = load_all(manifest, model.trainer.arch().patch_size);
  const auto annotations = annotate(model.trainer.networks(), model.state.params, load_patches(samples), radius);
  for (const auto* sub : {"confidence", "panels"}) fs::create_directories(dir / sub);

  std::ofstream log(dir / "annotations.jsonl", std::ios::binary | std::ios::trunc);
  const bool masks = manifest.has_masks();
  std::ofstream ious;
  if (masks) ious.open(dir / "iou.jsonl", std::ios::binary | std::ios::trunc);
  double total = 0.0;
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const auto& a = annotations[i];
    const auto& id = a.conf.source_id;
    write_confidence_png(a.conf, dir / "confidence" / (id + ".png"));
    write_raw_map(a.conf.values, dir / "confidence" / (id + ".raw"));
    render_panels(a.x, a.y1, a.y2, a.r, a.diff, a.conf, dir / "panels" / (id + ".png"));
    nlohmann::ordered_json j{{"source_id", id}, {"mse_x_y1", a.mse_y1}, {"mse_x_y2", a.mse_y2}, {"mse_x_r", a.mse_r}};
    log << j.dump() << '\n';
    if (masks) {
      const double v = iou(threshold_mask(a.conf, tau), mask_bits(*samples[i].mask));
      total += v;
      ious << nlohmann::ordered_json{{"source_id", id}, {"iou", v}}.dump() << '\n';
    }
  }
  std::cout << "annotated " << annotations.size() << " images";
  if (masks && !annotations.empty()) {
    const double mean = total / double(annotations.size());
    ious << nlohmann::ordered_json{{"mean_iou", mean}, {"tau", tau}, {"count", annotations.size()}}.dump() << '\n';
    std::cout << ", mean IoU " << mean;
  }
  std::cout << "\n";
  if (!log || (masks && !ious)) throw IoError("cannot write annotation logs under " + dir.string());
  return 0;
}

int cmd_compare(const Common& c, const std::string& checkpoint, const std::string& manifest_path,
                const std::string& axis_text, std::size_t radius) {
  if (manifest_path.empty()) throw ConfigError("compare-baseline requires --manifest");
  const auto axis = parse_trace_axis(axis_text);
  auto model = load_model(checkpoint);
  KeyValues kv = model.trainer.resolved_config();
  kv.set("checkpoint", checkpoint);
  kv.set("manifest", manifest_path);
  kv.set("trace_axis", std::string(to_string(axis)));
  kv.set("smoothing_radius", std::to_string(radius));
  const auto dir = c.out_dir();
  echo_config(dir, kv);
  const auto samples = load_all(DatasetManifest::read(manifest_path), model.trainer.arch().patch_size);
  const auto annotations = annotate(model.trainer.networks(), model.state.params, load_patches(samples), radius);
  fs::create_directories(dir / "compare");
  for (const auto& a : annotations)
    compare_panels(a.x, a.conf, compute_attributes(a.x, axis, a.conf.source_id),
                   dir / "compare" / (a.conf.source_id + ".png"));
  std::cout << "wrote " << annotations.size() << " comparison panels (trace axis " << to_string(axis)
            << "; Hilbert multiplier -i sign(f), DC and Nyquist zeroed)\n";
  return 0;
}

int cmd_gradcheck(const Common& c, const GradcheckOptions& opt) {
  const auto arch = ArchitectureConfig::toy();
  KeyValues kv;
  arch.write(kv);
  kv.set("fd_step", format_double(opt.fd_step));
  kv.set("tolerance", format_double(opt.tolerance));
  kv.set("seed", std::to_string(opt.seed));
  kv.set("batch", std::to_string(opt.batch));
  kv.set("init_std", format_double(opt.init_std));
  kv.set("stencil", std::to_string(opt.stencil));
  if (!c.out.empty()) echo_config(c.out, kv);
  const auto start = std::chrono::steady_clock::now();
  const auto report = gradcheck(arch, opt);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << report.format() << "elapsed " << secs << " s\n";
  if (!report.passed()) {
    std::cout << "failing rows:";
    for (const auto& r : report.rows)
      if (!r.passed) std::cout << " " << r.loss << "/" << r.group;
    std::cout << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-space factorization for self-supervised image annotation"};
  app.require_subcommand(1);

  Common gen_c, train_c, ann_c, cmp_c, gc_c;
  auto* gen = app.add_subcommand("generate-data", "write a synthetic image/mask dataset");
  gen_c.add(gen);
  gen_c.flags.add(gen, synthetic_keys());

  std::string train_manifest, resume;
  auto* train = app.add_subcommand("train", "train the factorized autoencoder");
  train_c.add(train);
  train_c.flags.add(train, model_keys());
  train->add_option("--manifest", train_manifest, "dataset manifest");
  train->add_option("--resume", resume, "checkpoint to resume from");

  std::string ann_ckpt, ann_manifest;
  double tau = 0.5;
  std::size_t ann_radius = 1;
  auto* ann = app.add_subcommand("annotate", "confidence maps, panels and IoU");
  ann_c.add(ann);
  ann->add_option("--checkpoint", ann_ckpt, "trained checkpoint");
  ann->add_option("--manifest", ann_manifest, "images to annotate");
  ann->add_option("--tau", tau, "mask threshold");
  ann->add_option("--smoothing-radius", ann_radius, "box blur radius");

  std::string cmp_ckpt, cmp_manifest, axis = "columns";
  std::size_t cmp_radius = 1;
  auto* cmp = app.add_subcommand("compare-baseline", "confidence vs instantaneous attributes");
  cmp_c.add(cmp);
  cmp->add_option("--checkpoint", cmp_ckpt, "trained checkpoint");
  cmp->add_option("--manifest", cmp_manifest, "images to compare");
  cmp->add_option("--trace-axis", axis, "rows or columns");
  cmp->add_option("--smoothing-radius", cmp_radius, "box blur radius");

  GradcheckOptions gopt;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every loss on toy dimensions");
  gc_c.add(gc);
  gc->add_option("--fd-step", gopt.fd_step, "central difference step");
  gc->add_option("--tolerance", gopt.tolerance, "max relative error");
  gc->add_option("--seed", gopt.seed, "parameter seed");
  gc->add_option("--batch", gopt.batch, "toy batch size");
  gc->add_option("--init-std", gopt.init_std, "weight scale of the random parameters");
  gc->add_option("--stencil", gopt.stencil, "central stencil order, 2 or 4")->check(CLI::IsMember({2, 4}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (*gen) return cmd_generate(gen_c);
    if (*train) return cmd_train(train_c, train_manifest, resume);
    if (*ann) return cmd_annotate(ann_c, ann_ckpt, ann_manifest, tau, ann_radius);
    if (*cmp) return cmd_compare(cmp_c, cmp_ckpt, cmp_manifest, axis, cmp_radius);
    if (*gc) return cmd_gradcheck(gc_c, gopt);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDivergence;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
