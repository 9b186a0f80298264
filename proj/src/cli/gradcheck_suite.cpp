// SPDX-License-Identifier: Apache-2.0
#include "wmd/cli/gradcheck_suite.hpp"

#include "wmd/core/errors.hpp"
#include "wmd/core/gradcheck.hpp"
#include "wmd/ensemble/ensemble.hpp"
#include "wmd/training/elbo.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>

namespace wmd::cli {

namespace {

void perturb(ParameterSet& g) {
  auto& first = g.begin()->second;
  first *= 1.01;
  first.array() += 1e-3;
}

GradcheckResult compare(std::string name, const ParameterSet& at, ParameterSet analytic, const ScalarFunction& f,
                        const GradcheckOptions& opts) {
  if (opts.inject_bug == name) perturb(analytic);
  GradcheckResult r;
  r.loss = std::move(name);
  r.parameters = at.scalar_count();
  r.max_relative_error = max_relative_error(analytic, finite_difference_gradient(at, f));
  r.passed = r.max_relative_error < opts.tolerance;
  return r;
}

training::Episode random_episode(std::size_t length, int obs_dim, const env::Dynamics& dyn, Rng& rng) {
  training::Episode ep;
  for (std::size_t t = 0; t < length; ++t) {
    ep.observations.push_back(rng.normal_vector(obs_dim));
    ep.actions.push_back(Vector::Constant(dyn.action_dim(), t == 0 ? 0.0 : rng.uniform(-1, 1)));
    ep.rewards.push_back(t == 0 ? 0.0 : rng.uniform());
    ep.states.push_back(dyn.sample_initial(rng));
  }
  return ep;
}

GradcheckResult check_elbo(rssm::Variant variant, const GradcheckOptions& o) {
  env::EnvConfig ecfg;
  auto dyn = env::make_dynamics(ecfg);
  rssm::RssmConfig c;
  c.variant = variant;
  c.stoch = o.stoch;
  c.groups = o.groups;
  c.classes = o.classes;
  c.deter = o.deter;
  c.hidden = o.hidden;
  c.layers = 1;
  c.obs_dim = o.obs_dim;
  c.action_dim = dyn->action_dim();
  c.physical_dim = env::decoder_dim(*dyn);
  rssm::Rssm model(c);
  Rng rng(o.seed);
  ParameterSet p = model.init_params(rng);
  for (auto& [_, m] : p) m += 0.1 * rng.normal_matrix(m.rows(), m.cols());

  training::ReplayBuffer buf(std::shared_ptr<const env::Dynamics>(std::move(dyn)));
  buf.add(random_episode(static_cast<std::size_t>(o.length + 2), o.obs_dim, buf.dynamics(), rng));
  const auto batch = buf.sample(static_cast<std::size_t>(o.batch), static_cast<std::size_t>(o.length), rng);

  ad::Tape tape;
  BoundParameters bound(tape, p, true);
  rssm::LatentSampler sampler(rng);
  const auto g = training::build_elbo(model, bound, batch, sampler);
  const ParameterSet analytic = grad(tape, g.loss, bound);
  const rssm::LatentNoise noise = sampler.recorded();
  auto value = [&](const ParameterSet& q) {
    ad::Tape t;
    BoundParameters b(t, q, false);
    auto replay = rssm::LatentSampler::frozen(noise);
    return training::build_elbo(model, b, batch, replay).terms.total;
  };
  return compare("elbo-" + rssm::to_string(variant), p, analytic, value, o);
}

GradcheckResult check_ensemble(bool physical, const GradcheckOptions& o) {
  env::EnvConfig ecfg;
  auto dyn = env::make_dynamics(ecfg);
  ensemble::EnsembleConfig ec;
  ec.members = 2;
  ec.hidden = o.ensemble_hidden;
  ec.layers = 1;
  Rng rng(o.seed + 1);
  ensemble::GaussianEnsemble ens =
      physical ? ensemble::make_physical_ensemble(ec, *dyn, rng)
               : ensemble::make_latent_ensemble(ec, o.deter, o.stoch, dyn->action_dim(), rng);
  ParameterSet p = ens.params();
  for (auto& [_, m] : p) m += 0.1 * rng.normal_matrix(m.rows(), m.cols());
  ens.set_params(p);

  const int n = 4;
  const Matrix x = rng.normal_matrix(n, ens.in_dim());
  const Matrix y = rng.normal_matrix(n, ens.out_dim());
  std::vector<std::vector<Eigen::Index>> rows;
  for (int m = 0; m < ec.members; ++m) {
    std::vector<Eigen::Index> r;
    for (int i = 0; i < n; ++i) r.push_back(static_cast<Eigen::Index>(rng.index(n)));
    rows.push_back(r);
  }
  ad::Tape tape;
  BoundParameters bound(tape, p, true);
  const ParameterSet analytic = grad(tape, ens.training_loss(bound, x, y, rows), bound);
  auto value = [&](const ParameterSet& q) {
    ad::Tape t;
    BoundParameters b(t, q, false);
    return ens.training_loss(b, x, y, rows).scalar();
  };
  return compare(physical ? "pe-nll" : "ensemble-nll", p, analytic, value, o);
}

}  // namespace

std::vector<std::string> gradcheck_losses() { return {"elbo-gaussian", "elbo-categorical", "ensemble-nll", "pe-nll"}; }

std::vector<GradcheckResult> run_gradcheck_suite(const GradcheckOptions& opts) {
  if (!opts.inject_bug.empty()) {
    const auto names = gradcheck_losses();
    if (std::find(names.begin(), names.end(), opts.inject_bug) == names.end())
      throw ConfigError("unknown loss '" + opts.inject_bug + "' for bug injection");
  }
  return {check_elbo(rssm::Variant::gaussian, opts), check_elbo(rssm::Variant::categorical, opts),
          check_ensemble(false, opts), check_ensemble(true, opts)};
}

void write_gradcheck_report(std::ostream& out, const std::vector<GradcheckResult>& results) {
  char buf[160];
  for (const auto& r : results) {
    std::snprintf(buf, sizeof buf, "%-18s params=%-5zu max_rel_err=%.3e %s\n", r.loss.c_str(), r.parameters,
                  r.max_relative_error, r.passed ? "PASS" : "FAIL");
    out << buf;
  }
}

}  // namespace wmd::cli
