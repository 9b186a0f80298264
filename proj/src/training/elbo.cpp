// SPDX-License-Identifier: Apache-2.0
#include "wmd/training/elbo.hpp"

#include "wmd/core/errors.hpp"

#include <array>

namespace wmd::training {

using ad::Var;

std::pair<Var, Var> initial_belief(const rssm::Rssm& model, const BoundParameters& p, int rows) {
  const auto& cfg = model.config();
  ad::Tape& tape = p.tape();
  Var h = tape.constant(Matrix::Zero(rows, cfg.deter));
  Var stats = model.prior_stats(p, h);
  Var z = cfg.variant == rssm::Variant::gaussian ? ad::slice_cols(stats, 0, cfg.stoch)
                                                 : tape.constant(model.mode(stats.value()));
  return {h, z};
}

ElboGraph build_elbo(const rssm::Rssm& model, const BoundParameters& p, const SequenceBatch& batch,
                     rssm::LatentSampler& sampler) {
  const auto& cfg = model.config();
  if (batch.length < 1 || batch.observations.size() != static_cast<std::size_t>(batch.length)) {
    throw ShapeError("elbo: malformed batch");
  }
  if (batch.observations.front().cols() != cfg.obs_dim || batch.actions.front().cols() != cfg.action_dim ||
      batch.physical.front().cols() != cfg.physical_dim) {
    throw ShapeError("elbo: batch dimensions do not match the model");
  }
  ad::Tape& tape = p.tape();
  const int B = batch.batch;
  const int L = batch.length;
  auto [h, z] = initial_belief(model, p, B);

  std::vector<Var> hs, zs, kls;
  ElboGraph out;
  const int in_width = cfg.deter + cfg.latent_dim() + cfg.action_dim;
  out.transition_inputs.resize(static_cast<Eigen::Index>(B) * L, in_width);
  out.transition_targets.resize(static_cast<Eigen::Index>(B) * L, cfg.deter);
  for (int t = 0; t < L; ++t) {
    Var a = tape.constant_ref(batch.actions[static_cast<std::size_t>(t)]);
    out.transition_inputs.middleRows(static_cast<Eigen::Index>(t) * B, B) << h.value(), z.value(), a.value();
    h = model.recurrent(p, h, z, a);
    out.transition_targets.middleRows(static_cast<Eigen::Index>(t) * B, B) = h.value();
    Var prior = model.prior_stats(p, h);
    Var post = model.posterior_stats(p, h, tape.constant_ref(batch.observations[static_cast<std::size_t>(t)]));
    kls.push_back(model.kl(post, prior));
    z = sampler.sample(cfg, post);
    hs.push_back(h);
    zs.push_back(z);
  }

  Var feats = model.features(ad::concat_rows(hs), ad::concat_rows(zs));
  auto stacked = [&](const std::vector<Matrix>& parts) {
    Matrix m(static_cast<Eigen::Index>(B) * L, parts.front().cols());
    for (int t = 0; t < L; ++t) m.middleRows(static_cast<Eigen::Index>(t) * B, B) = parts[static_cast<std::size_t>(t)];
    return tape.constant(std::move(m));
  };
  Var recon_o = ad::mean(ad::gaussian_nll_unit(stacked(batch.observations), model.decode_observation(p, feats)));
  Var recon_r = ad::mean(ad::gaussian_nll_unit(stacked(batch.rewards), model.decode_reward(p, feats)));
  Var recon_s = ad::mean(ad::gaussian_nll_unit(stacked(batch.physical), model.decode_physical(p, feats)));
  Var kl = ad::mean(ad::concat_rows(kls));
  out.loss = recon_o + recon_r + recon_s + kl;
  out.terms = {out.loss.scalar(), recon_o.scalar(), recon_r.scalar(), recon_s.scalar(), kl.scalar()};
  return out;
}

ElboTerms elbo_loss(const rssm::Rssm& model, const ParameterSet& params, const SequenceBatch& batch, Rng& rng) {
  ad::Tape tape;
  BoundParameters p(tape, params, false);
  rssm::LatentSampler sampler(rng);
  return build_elbo(model, p, batch, sampler).terms;
}

}  // namespace wmd::training
