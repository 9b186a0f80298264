// SPDX-License-Identifier: Apache-2.0
#pragma once

// Ensembles of Gaussian one-step predictors. The same class serves the latent
// ensemble over the deterministic state h and the physical probabilistic
// ensemble (PE) over encoded physical states.

#include "wmd/core/distributions.hpp"
#include "wmd/core/nn.hpp"
#include "wmd/core/optim.hpp"
#include "wmd/core/parameters.hpp"
#include "wmd/core/random.hpp"
#include "wmd/env/environment.hpp"

#include <vector>

namespace wmd::ensemble {

struct EnsembleConfig {
  int members = 5;
  int hidden = 300;
  int layers = 5;
  double learning_rate = 6e-4;
  double grad_clip = 100.0;
  bool bootstrap = true;
  /// Rows per training step; larger batches are subsampled.
  int batch = 256;

  void validate() const;
};

struct EnsembleMetrics {
  double nll = 0.0;  // mean over members of their own-view NLL
  std::vector<double> member_grad_norms;
};

class GaussianEnsemble {
 public:
  /// With `residual`, the first out_dim input columns are added to each mean.
  /// Inputs are divided by `input_scale` (ones when empty) before the network.
  GaussianEnsemble(EnsembleConfig cfg, int in_dim, int out_dim, bool residual, Rng& rng,
                   Vector input_scale = Vector());

  /// Every member starts from the parameters of member 0.
  void copy_member_zero();

  const EnsembleConfig& config() const { return cfg_; }
  int in_dim() const { return in_dim_; }
  int out_dim() const { return out_dim_; }
  int members() const { return cfg_.members; }

  /// Member parameters live under `m{i}.`.
  const ParameterSet& params() const { return params_; }
  /// Replaces the parameters; the layout must match.
  void set_params(ParameterSet params);

  /// One distribution per member, member order.
  std::vector<DiagonalGaussian> predict(const Vector& input) const;
  /// Batched means and stds per member (rows = inputs).
  void predict_batch(const Matrix& inputs, std::vector<Matrix>& means, std::vector<Matrix>& stds) const;

  /// Gaussian NLL step; each member sees its own bootstrap resample of the rows.
  EnsembleMetrics train_step(const Matrix& inputs, const Matrix& targets, Rng& rng);
  /// Sum over members of the mean Gaussian NLL on that member's rows.
  ad::Var training_loss(const BoundParameters& p, const Matrix& inputs, const Matrix& targets,
                        const std::vector<std::vector<Eigen::Index>>& member_rows) const;
  /// Mean per-row NLL of the ensemble-mean member prediction, without training.
  double mean_nll(const Matrix& inputs, const Matrix& targets) const;

 private:
  nn::MlpShape shape() const;
  ad::Var member_stats(const BoundParameters& p, int member, ad::Var scaled, ad::Var raw_input,
                       ad::Var* std_out) const;

  EnsembleConfig cfg_;
  int in_dim_;
  int out_dim_;
  bool residual_;
  Matrix inv_scale_;  // 1 x in_dim
  ParameterSet params_;
  AdamState opt_;
};

/// Latent ensemble over (h_{t-1}, z_{t-1}, a_t) -> h_t.
GaussianEnsemble make_latent_ensemble(const EnsembleConfig& cfg, int deter, int latent, int action_dim, Rng& rng);

/// Physical ensemble over (encoded s_t, a_{t+1}) -> encoded s_{t+1}.
GaussianEnsemble make_physical_ensemble(const EnsembleConfig& cfg, const env::Dynamics& dyn, Rng& rng);

/// Concatenates the latent ensemble input row.
Vector latent_input(const Vector& h, const Vector& z, const Vector& a);

enum class PeMode { mean, member_sample };

struct PeRollout {
  std::vector<Vector> encoded;      // predicted encoded state after each action
  std::vector<env::PhysicalState> states;
  std::vector<double> uncertainty;  // gjs of member predictions at each step
};

/// Autoregressive PE rollout from s0. In mean mode the next input is the mean
/// of the member means; member_sample draws one member per step and samples it.
PeRollout pe_rollout(const GaussianEnsemble& pe, const env::Dynamics& dyn, const env::PhysicalState& s0,
                     std::span<const env::Action> actions, PeMode mode, Rng& rng);

}  // namespace wmd::ensemble
