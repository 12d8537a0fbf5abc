#include "lfa/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>

#include "lfa/trainer.hpp"

namespace lfa {
namespace {

using Params = ParameterSet<double>;

// Gradients below this are zero for practical purposes; the central
// difference of a loss near 1 carries roundoff of up to about 1e-11 at step 1e-3.
constexpr double kGradientFloor = 1e-7;
// Evaluates the loss; fills grads when non-null and the kink signature when non-null.
using LossFn = std::function<double(const Params&, Params*, KinkSignature*)>;

struct RowSpec {
  std::string loss;
  ParamGroup group;
  LossFn fn;
};

GradcheckRow check_row(const RowSpec& spec, Params params, const GradcheckOptions& opt) {
  GradcheckRow row;
  row.loss = spec.loss;
  row.group = group_name(spec.group);
  Params grads;
  KinkSignature base;
  spec.fn(params, &grads, &base);
  const auto prefix = group_prefix(spec.group);
  const std::vector<std::string> names = params.names();
  for (const auto& name : names) {
    if (!has_prefix(name, prefix) || !is_trainable(name)) continue;
    auto& p = params.at(name);
    const Tensor<double>* g = grads.contains(name) ? &grads.at(name) : nullptr;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p[i];
      bool crossed = false;
      auto eval = [&](double offset) {
        KinkSignature k;
        p[i] = saved + offset;
        const double f = spec.fn(params, nullptr, &k);
        crossed = crossed || k != base;
        return f;
      };
      const double h = opt.fd_step;
      double numeric;
      if (opt.stencil == 2) {
        numeric = (eval(h) - eval(-h)) / (2 * h);
      } else {
        numeric = (-eval(2 * h) + 8 * eval(h) - 8 * eval(-h) + eval(-2 * h)) / (12 * h);
      }
      p[i] = saved;
      if (crossed) {
        ++row.skipped;
        continue;
      }
      const double analytic = g ? (*g)[i] : 0.0;
      const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradientFloor});
      const double rel = std::abs(analytic - numeric) / denom;
      if (rel >= row.max_rel_error) {
        row.max_rel_error = rel;
        row.worst_entry = name + "[" + std::to_string(i) + "]";
        row.worst_analytic = analytic;
        row.worst_numeric = numeric;
      }
      ++row.checked;
    }
  }
  row.passed = row.checked > 0 && row.max_rel_error < opt.tolerance;
  return row;
}

// One float training step on toy data, watching the proj+diff sub-step.
std::pair<bool, std::string> check_freeze(const ArchitectureConfig& arch, const GradcheckOptions& opt) {
  TrainConfig tc;
  tc.seed = opt.seed;
  Trainer trainer(arch, tc);
  auto state = trainer.initial_state();
  std::mt19937_64 rng(opt.seed + 17);
  Tensor<float> x({opt.batch, arch.patch_size, arch.patch_size});
  for (auto& v : x.values()) v = static_cast<float>(std::uniform_real_distribution<double>(-1, 1)(rng));
  ParameterSet<float> before;
  std::vector<std::string> changed, frozen_touched;
  TrainHooks hooks;
  hooks.on_substep = [&](std::string_view name, HookPhase phase, const ParameterSet<float>& params) {
    if (name != "proj+diff") return;
    if (phase == HookPhase::Before) {
      before = params;
      return;
    }
    for (const auto& [pname, t] : params) {
      if (t == before.at(pname)) continue;
      (group_of(pname) == ParamGroup::Projection ? changed : frozen_touched).push_back(pname);
    }
  };
  trainer.train_step(state, x, hooks);
  std::ostringstream os;
  if (frozen_touched.empty())
    os << "E, G, D1, D2 unchanged by proj+diff; " << changed.size() << " projection arrays updated";
  else
    os << "proj+diff modified " << frozen_touched.front();
  return {frozen_touched.empty() && !changed.empty(), os.str()};
}

}  // namespace

bool GradcheckReport::passed() const {
  if (!freeze_ok || rows.empty()) return false;
  for (const auto& r : rows)
    if (!r.passed) return false;
  return true;
}

std::string GradcheckReport::format() const {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-8s %-6s %14s %8s %8s  %-4s  %s\n", "loss", "group", "max_rel_err", "checked",
                "skipped", "status", "worst entry: analytic vs numeric");
  os << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-8s %-6s %14.3e %8zu %8zu  %-4s  %s %.6e vs %.6e\n", r.loss.c_str(),
                  r.group.c_str(), r.max_rel_error, r.checked, r.skipped, r.passed ? "ok" : "FAIL",
                  r.worst_entry.c_str(), r.worst_analytic, r.worst_numeric);
    os << line;
  }
  os << "freeze: " << (freeze_ok ? "ok" : "FAIL") << " (" << freeze_detail << ")\n";
  return os.str();
}

GradcheckReport gradcheck(const ArchitectureConfig& base, const GradcheckOptions& opt) {
  ArchitectureConfig arch = base;
  arch.init_std = opt.init_std;
  arch.validate();
  const Networks<double> nets(arch);
  const Objective<double> obj(nets);
  const auto params = nets.init_parameters(opt.seed);
  std::mt19937_64 rng(opt.seed + 17);
  Tensor<double> x({opt.batch, arch.patch_size, arch.patch_size});
  for (auto& v : x.values()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
  const auto prior = sample_uniform_prior<double>(opt.batch, arch.latent_dim, rng);

  auto with_forward = [&](auto body) -> LossFn {
    return [&, body](const Params& p, Params* g, KinkSignature* k) {
      const ForwardContext ctx{Mode::Train, k};
      const auto fp = obj.forward(p, x, ctx);
      return body(p, fp, ctx, g);
    };
  };
  const LossFn rec = with_forward([&](const Params& p, const ForwardPass<double>& fp, const ForwardContext&,
                                      Params* g) { return obj.rec(p, x, fp, g); });
  const LossFn adv1_d = with_forward([&](const Params& p, const ForwardPass<double>& fp, const ForwardContext& c,
                                         Params* g) { return obj.adv1_d(p, x, fp, c, g); });
  const LossFn adv1_g = with_forward([&](const Params& p, const ForwardPass<double>& fp, const ForwardContext& c,
                                         Params* g) { return obj.adv1_g(p, fp, c, g); });
  const LossFn adv2_d = with_forward([&](const Params& p, const ForwardPass<double>& fp, const ForwardContext& c,
                                         Params* g) { return obj.adv2_d(p, fp, prior, c, g); });
  const LossFn adv2_e = with_forward([&](const Params& p, const ForwardPass<double>& fp, const ForwardContext& c,
                                         Params* g) { return obj.adv2_e(p, fp, c, g); });
  const LossFn diff = with_forward([&](const Params& p, const ForwardPass<double>& fp, const ForwardContext& c,
                                       Params* g) { return obj.diff(p, fp, c, g); });
  const LossFn proj = [&](const Params& p, Params* g, KinkSignature*) { return obj.proj(p, g); };

  const std::vector<RowSpec> rows{
      {"rec", ParamGroup::Encoder, rec},       {"rec", ParamGroup::Decoder, rec},
      {"rec", ParamGroup::Projection, rec},    {"adv1", ParamGroup::ImageDisc, adv1_d},
      {"adv1", ParamGroup::Decoder, adv1_g},   {"adv2", ParamGroup::LatentDisc, adv2_d},
      {"adv2", ParamGroup::Encoder, adv2_e},   {"diff", ParamGroup::Projection, diff},
      {"proj", ParamGroup::Projection, proj},
  };
  GradcheckReport report;
  for (const auto& spec : rows) report.rows.push_back(check_row(spec, params, opt));
  std::tie(report.freeze_ok, report.freeze_detail) = check_freeze(arch, opt);
  return report;
}

}  // namespace lfa
