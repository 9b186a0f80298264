// SPDX-License-Identifier: Apache-2.0
#pragma once

// Finite-difference checks of every differentiable training loss on small
// instances.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace wmd::cli {

struct GradcheckOptions {
  int deter = 2;
  int hidden = 2;
  int stoch = 1;
  int groups = 2;
  int classes = 2;
  int obs_dim = 1;
  int batch = 2;
  int length = 3;
  int ensemble_hidden = 4;
  double tolerance = 1e-4;
  std::uint64_t seed = 3;
  /// Name of a loss whose analytic gradient is deliberately perturbed.
  std::string inject_bug;
};

struct GradcheckResult {
  std::string loss;
  std::size_t parameters = 0;
  double max_relative_error = 0.0;
  bool passed = false;
};

/// Names: elbo-gaussian, elbo-categorical, ensemble-nll, pe-nll.
std::vector<std::string> gradcheck_losses();
std::vector<GradcheckResult> run_gradcheck_suite(const GradcheckOptions& opts);
void write_gradcheck_report(std::ostream& out, const std::vector<GradcheckResult>& results);

}  // namespace wmd::cli
