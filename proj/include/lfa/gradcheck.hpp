#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lfa/networks.hpp"

namespace lfa {

struct GradcheckOptions {
  double fd_step = 1e-3;
  // Central stencil order: 2 uses f(x +- h), 4 also uses f(x +- 2h) and
  // cancels the h^2 truncation term.
  int stencil = 4;
  double tolerance = 1e-4;
  std::uint64_t seed = 1;
  std::size_t batch = 4;
  // Weight scale of the random parameters (the training initialization).
  double init_std = 0.02;
};

// Max relative error of one loss against one parameter group. Entries whose
// perturbed evaluations cross a rectifier kink or clamp boundary are skipped
// and counted, since finite differences are meaningless there.
struct GradcheckRow {
  std::string loss;
  std::string group;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  std::string worst_entry;  // name[index] of the largest error
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GradcheckRow> rows;
  bool freeze_ok = false;  // proj+diff sub-step left E, G, D1, D2 untouched
  std::string freeze_detail;

  bool passed() const;
  std::string format() const;
};

// Runs in double precision on random parameters and random inputs. The
// relative error of an entry is |a - n| / max(|a|, |n|, 1e-7).
GradcheckReport gradcheck(const ArchitectureConfig& arch, const GradcheckOptions& options = {});

}  // namespace lfa
