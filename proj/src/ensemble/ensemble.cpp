// SPDX-License-Identifier: Apache-2.0
#include "wmd/ensemble/ensemble.hpp"

#include "wmd/core/errors.hpp"

#include <array>
#include <cmath>

namespace wmd::ensemble {

using ad::Var;

void EnsembleConfig::validate() const {
  if (members < 2) throw ConfigError("ensemble.members must be >= 2");
  if (hidden < 1 || layers < 1) throw ConfigError("ensemble sizes must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("ensemble.learning_rate must be > 0");
  if (!(grad_clip > 0.0)) throw ConfigError("ensemble.grad_clip must be > 0");
  if (batch < 1) throw ConfigError("ensemble.batch must be >= 1");
}

namespace {

std::string member_prefix(int i) { return "m" + std::to_string(i) + "."; }

Matrix gather_rows(const Matrix& m, const std::vector<Eigen::Index>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

}  // namespace

GaussianEnsemble::GaussianEnsemble(EnsembleConfig cfg, int in_dim, int out_dim, bool residual, Rng& rng,
                                   Vector input_scale)
    : cfg_(cfg), in_dim_(in_dim), out_dim_(out_dim), residual_(residual) {
  cfg_.validate();
  if (in_dim < 1 || out_dim < 1 || (residual && out_dim > in_dim)) throw ShapeError("ensemble: bad dimensions");
  if (input_scale.size() == 0) input_scale = Vector::Ones(in_dim);
  if (input_scale.size() != in_dim || (input_scale.array() <= 0.0).any()) throw ShapeError("ensemble: bad input scale");
  inv_scale_ = input_scale.cwiseInverse().transpose();
  for (int i = 0; i < cfg_.members; ++i) {
    ParameterSet member;
    nn::add_mlp(member, "net", shape(), rng);
    params_.merge(member_prefix(i), member);
  }
  opt_ = AdamState::for_parameters(params_);
}

nn::MlpShape GaussianEnsemble::shape() const { return {in_dim_, cfg_.hidden, cfg_.layers, 2 * out_dim_, true}; }

void GaussianEnsemble::copy_member_zero() {
  const ParameterSet first = params_.extract(member_prefix(0));
  for (auto& [name, m] : params_) {
    const auto dot = name.find('.');
    m = first.at(name.substr(dot + 1));
  }
  opt_ = AdamState::for_parameters(params_);
}

void GaussianEnsemble::set_params(ParameterSet params) {
  if (!params.same_layout(params_)) throw ShapeError("ensemble: parameter layout mismatch");
  params_ = std::move(params);
  opt_ = AdamState::for_parameters(params_);
}

Var GaussianEnsemble::member_stats(const BoundParameters& p, int member, Var scaled, Var raw_input,
                                   Var* std_out) const {
  Var out = nn::mlp(p, member_prefix(member) + "net", shape(), nn::Activation::elu, scaled);
  Var mean = ad::slice_cols(out, 0, out_dim_);
  if (residual_) mean = mean + ad::slice_cols(raw_input, 0, out_dim_);
  *std_out = nn::positive(ad::slice_cols(out, out_dim_, out_dim_));
  return mean;
}

void GaussianEnsemble::predict_batch(const Matrix& inputs, std::vector<Matrix>& means,
                                     std::vector<Matrix>& stds) const {
  if (inputs.cols() != in_dim_) throw ShapeError("ensemble: input width mismatch");
  ad::Tape tape;
  BoundParameters p(tape, params_, false);
  Var raw = tape.constant_ref(inputs);
  Var scaled = tape.constant(inputs.array().rowwise() * inv_scale_.array().row(0));
  means.clear();
  stds.clear();
  for (int i = 0; i < cfg_.members; ++i) {
    Var std;
    Var mean = member_stats(p, i, scaled, raw, &std);
    means.push_back(mean.value());
    stds.push_back(std.value());
  }
}

std::vector<DiagonalGaussian> GaussianEnsemble::predict(const Vector& input) const {
  std::vector<Matrix> means, stds;
  predict_batch(as_row(input), means, stds);
  std::vector<DiagonalGaussian> out;
  out.reserve(means.size());
  for (std::size_t i = 0; i < means.size(); ++i) out.emplace_back(row_of(means[i], 0), row_of(stds[i], 0));
  return out;
}

Var GaussianEnsemble::training_loss(const BoundParameters& p, const Matrix& inputs, const Matrix& targets,
                                    const std::vector<std::vector<Eigen::Index>>& member_rows) const {
  if (static_cast<int>(member_rows.size()) != cfg_.members) throw ShapeError("ensemble: one row set per member");
  ad::Tape& tape = p.tape();
  Var total;
  for (int m = 0; m < cfg_.members; ++m) {
    const Matrix x = gather_rows(inputs, member_rows[m]);
    Var raw = tape.constant(x);
    Var scaled = tape.constant(x.array().rowwise() * inv_scale_.array().row(0));
    Var std;
    Var mean = member_stats(p, m, scaled, raw, &std);
    Var loss = ad::mean(ad::gaussian_nll(tape.constant(gather_rows(targets, member_rows[m])), mean, std));
    total = m == 0 ? loss : total + loss;
  }
  return total;
}

EnsembleMetrics GaussianEnsemble::train_step(const Matrix& inputs, const Matrix& targets, Rng& rng) {
  if (inputs.rows() == 0) throw ShapeError("ensemble: empty training batch");
  if (inputs.cols() != in_dim_ || targets.cols() != out_dim_ || targets.rows() != inputs.rows()) {
    throw ShapeError("ensemble: training batch shape mismatch");
  }
  std::vector<Eigen::Index> pool(static_cast<std::size_t>(inputs.rows()));
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<Eigen::Index>(i);
  if (inputs.rows() > cfg_.batch) {
    for (int i = 0; i < cfg_.batch; ++i) {
      std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(i) + rng.index(pool.size() - i)]);
    }
    pool.resize(static_cast<std::size_t>(cfg_.batch));
  }

  std::vector<std::vector<Eigen::Index>> rows;
  for (int m = 0; m < cfg_.members; ++m) {
    std::vector<Eigen::Index> view = pool;
    if (cfg_.bootstrap) {
      for (auto& v : view) v = pool[rng.index(pool.size())];
    }
    rows.push_back(std::move(view));
  }

  ad::Tape tape;
  BoundParameters p(tape, params_, true);
  Var total = training_loss(p, inputs, targets, rows);
  ParameterSet grads = grad(tape, total, p);
  if (!grads.all_finite()) throw NumericError("ensemble gradient is not finite");
  EnsembleMetrics metrics;
  metrics.nll = total.scalar() / cfg_.members;
  for (int m = 0; m < cfg_.members; ++m) {
    ParameterSet g = grads.extract(member_prefix(m));
    metrics.member_grad_norms.push_back(std::min(clip_global_norm(g, cfg_.grad_clip), cfg_.grad_clip));
    for (const auto& [name, v] : g) grads.at(member_prefix(m) + name) = v;
  }
  adam_update(params_, grads, opt_, AdamConfig{cfg_.learning_rate});
  return metrics;
}

double GaussianEnsemble::mean_nll(const Matrix& inputs, const Matrix& targets) const {
  std::vector<Matrix> means, stds;
  predict_batch(inputs, means, stds);
  double total = 0.0;
  for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
    for (int m = 0; m < cfg_.members; ++m) {
      total += -DiagonalGaussian(row_of(means[m], r), row_of(stds[m], r)).log_prob(row_of(targets, r));
    }
  }
  return total / static_cast<double>(inputs.rows() * cfg_.members);
}

GaussianEnsemble make_latent_ensemble(const EnsembleConfig& cfg, int deter, int latent, int action_dim, Rng& rng) {
  return GaussianEnsemble(cfg, deter + latent + action_dim, deter, true, rng);
}

GaussianEnsemble make_physical_ensemble(const EnsembleConfig& cfg, const env::Dynamics& dyn, Rng& rng) {
  const Vector feature = dyn.feature_scale();
  Vector scale(feature.size() + dyn.action_dim());
  scale << feature, Vector::Ones(dyn.action_dim());
  return GaussianEnsemble(cfg, static_cast<int>(scale.size()), env::encoded_dim(dyn), true, rng, scale);
}

Vector latent_input(const Vector& h, const Vector& z, const Vector& a) {
  Vector x(h.size() + z.size() + a.size());
  x << h, z, a;
  return x;
}

PeRollout pe_rollout(const GaussianEnsemble& pe, const env::Dynamics& dyn, const env::PhysicalState& s0,
                     std::span<const env::Action> actions, PeMode mode, Rng& rng) {
  PeRollout out;
  Vector s = env::encode_physical(dyn, s0);
  for (const env::Action& a : actions) {
    Vector input(s.size() + a.size());
    input << s, a;
    const auto members = pe.predict(input);
    out.uncertainty.push_back(gjs_uncertainty(members));
    if (mode == PeMode::mean) {
      Vector mean = Vector::Zero(s.size());
      for (const auto& m : members) mean += m.mean;
      s = mean / static_cast<double>(members.size());
    } else {
      s = sample_gaussian(members[rng.index(members.size())], rng);
    }
    out.encoded.push_back(s);
    out.states.push_back(env::decode_physical(dyn, s));
  }
  return out;
}

}  // namespace wmd::ensemble
