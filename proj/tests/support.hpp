// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "vct/tape.hpp"

namespace vct::testing {

// Central-difference gradient oracle. For every scalar of every parameter
// in `params`, perturbs by +/-h, re-evaluates `loss`, and compares against
// the analytic gradient. Relative error uses max(|fd|, |analytic|, floor).
struct FdReport {
  double max_rel_err = 0;
  std::string worst;
};

inline FdReport fd_check(const ParamSet& params, const GradMap& analytic, const std::function<double()>& loss,
                         double h = 1e-5, double floor = 1e-6) {
  FdReport rep;
  for (const auto& [name, t] : params.items) {
    auto it = analytic.find(name);
    const bool have = it != analytic.end();
    for (std::size_t i = 0; i < t->size(); ++i) {
      const Real orig = t->vec()[i];
      t->vec()[i] = static_cast<Real>(static_cast<double>(orig) + h);
      const double up = loss();
      t->vec()[i] = static_cast<Real>(static_cast<double>(orig) - h);
      const double down = loss();
      t->vec()[i] = orig;
      const double fd = (up - down) / (2 * h);
      const double an = have ? static_cast<double>(it->second.vec()[i]) : 0.0;
      const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), floor});
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst = name + "[" + std::to_string(i) + "] fd=" + std::to_string(fd) + " an=" + std::to_string(an);
      }
    }
  }
  return rep;
}

}  // namespace vct::testing
