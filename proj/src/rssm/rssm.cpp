// SPDX-License-Identifier: Apache-2.0
#include "wmd/rssm/rssm.hpp"

#include "wmd/core/errors.hpp"

#include <array>

namespace wmd::rssm {

using ad::Var;

Variant parse_variant(std::string_view name) {
  if (name == "gaussian" || name == "rssm") return Variant::gaussian;
  if (name == "categorical" || name == "cat-rssm") return Variant::categorical;
  throw ConfigError("unknown model variant '" + std::string(name) + "' (expected gaussian or categorical)");
}

std::string to_string(Variant v) { return v == Variant::gaussian ? "gaussian" : "categorical"; }

void RssmConfig::validate() const {
  for (int v : {stoch, groups, classes, deter, hidden, layers, obs_dim, action_dim, physical_dim}) {
    if (v < 1) throw ConfigError("model sizes must be positive");
  }
}

int RssmConfig::latent_dim() const { return variant == Variant::gaussian ? stoch : groups * classes; }

int RssmConfig::stats_dim() const { return variant == Variant::gaussian ? 2 * stoch : groups * classes; }

LatentSampler LatentSampler::frozen(const LatentNoise& noise) {
  LatentSampler s;
  s.replay_ = &noise;
  return s;
}

Var LatentSampler::sample(const RssmConfig& cfg, Var stats) {
  const Eigen::Index n = stats.rows();
  if (cfg.variant == Variant::gaussian) {
    Var mean = ad::slice_cols(stats, 0, cfg.stoch);
    Var std = ad::slice_cols(stats, cfg.stoch, cfg.stoch);
    Matrix eps;
    if (replay_ != nullptr) {
      eps = replay_->eps.at(cursor_++);
    } else {
      eps = rng_->normal_matrix(n, cfg.stoch);
      recorded_.eps.push_back(eps);
    }
    return ad::add(mean, ad::mul(std, stats.tape()->constant(std::move(eps))));
  }

  Var probs = ad::softmax_groups(stats, cfg.groups);
  if (replay_ != nullptr) {
    const Matrix offset = replay_->one_hot.at(cursor_) - replay_->base_probs.at(cursor_);
    ++cursor_;
    return ad::add(probs, stats.tape()->constant(offset));
  }
  const Matrix& p = probs.value();
  Matrix one_hot(n, p.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    Eigen::Map<const Matrix> grouped(p.row(r).data(), cfg.groups, cfg.classes);
    const Matrix draw = sample_one_hot(grouped, *rng_);
    one_hot.row(r) = Eigen::Map<const RowVector>(draw.data(), draw.size());
  }
  recorded_.one_hot.push_back(one_hot);
  recorded_.base_probs.push_back(p);
  return ad::straight_through(probs, one_hot);
}

Rssm::Rssm(RssmConfig cfg) : cfg_(cfg) { cfg_.validate(); }

nn::MlpShape Rssm::prior_shape() const { return {cfg_.deter, cfg_.hidden, 1, cfg_.stats_dim(), false}; }

nn::MlpShape Rssm::posterior_shape() const {
  return {cfg_.deter + cfg_.hidden, cfg_.hidden, 1, cfg_.stats_dim(), false};
}

nn::MlpShape Rssm::encoder_shape() const {
  return {cfg_.obs_dim, cfg_.hidden, cfg_.layers - 1, cfg_.hidden, false};
}

nn::MlpShape Rssm::decoder_shape(int out) const {
  return {cfg_.feature_dim(), cfg_.hidden, cfg_.layers, out, false};
}

ParameterSet Rssm::init_params(Rng& rng) const {
  ParameterSet p;
  const int d = cfg_.deter;
  nn::add_linear(p, "embed", cfg_.latent_dim() + cfg_.action_dim, cfg_.hidden, rng);
  nn::add_linear(p, "gru.x", cfg_.hidden, 3 * d, rng);
  {
    ParameterSet tmp;
    nn::add_linear(tmp, "h", d, 3 * d, rng);
    p.add("gru.h.w", tmp.at("h.w"));
  }
  nn::add_mlp(p, "prior", prior_shape(), rng);
  nn::add_mlp(p, "encoder", encoder_shape(), rng);
  nn::add_mlp(p, "posterior", posterior_shape(), rng);
  nn::add_mlp(p, "decoder.obs", decoder_shape(cfg_.obs_dim), rng);
  nn::add_mlp(p, "decoder.reward", decoder_shape(1), rng);
  nn::add_mlp(p, "decoder.physical", decoder_shape(cfg_.physical_dim), rng);
  return p;
}

Var Rssm::recurrent(const BoundParameters& p, Var h, Var z, Var a) const {
  const int d = cfg_.deter;
  const std::array<Var, 2> za{z, a};
  Var x = nn::activate(nn::linear(p, "embed", ad::concat_cols(za)), cfg_.activation);
  Var gx = nn::linear(p, "gru.x", x);
  Var gh = ad::matmul(h, p["gru.h.w"]);
  Var reset = ad::sigmoid(ad::slice_cols(gx, 0, d) + ad::slice_cols(gh, 0, d));
  Var update = ad::sigmoid(ad::slice_cols(gx, d, d) + ad::slice_cols(gh, d, d));
  Var cand = ad::tanh(ad::slice_cols(gx, 2 * d, d) + ad::mul(reset, ad::slice_cols(gh, 2 * d, d)));
  return h + ad::mul(update, cand - h);
}

namespace {

Var finish_stats(const RssmConfig& cfg, Var raw) {
  if (cfg.variant == Variant::categorical) return raw;
  const std::array<Var, 2> parts{ad::slice_cols(raw, 0, cfg.stoch),
                                 nn::positive(ad::slice_cols(raw, cfg.stoch, cfg.stoch))};
  return ad::concat_cols(parts);
}

}  // namespace

Var Rssm::prior_stats(const BoundParameters& p, Var h) const {
  return finish_stats(cfg_, nn::mlp(p, "prior", prior_shape(), cfg_.activation, h));
}

Var Rssm::posterior_stats(const BoundParameters& p, Var h, Var obs) const {
  Var e = nn::activate(nn::mlp(p, "encoder", encoder_shape(), cfg_.activation, obs), cfg_.activation);
  const std::array<Var, 2> he{h, e};
  return finish_stats(cfg_, nn::mlp(p, "posterior", posterior_shape(), cfg_.activation, ad::concat_cols(he)));
}

Var Rssm::kl(Var post, Var prior) const {
  if (cfg_.variant == Variant::categorical) return ad::kl_categorical(post, prior, cfg_.groups);
  const int s = cfg_.stoch;
  return ad::kl_diag_gaussian(ad::slice_cols(post, 0, s), ad::slice_cols(post, s, s), ad::slice_cols(prior, 0, s),
                              ad::slice_cols(prior, s, s));
}

Var Rssm::features(Var h, Var z) const {
  const std::array<Var, 2> hz{h, z};
  return ad::concat_cols(hz);
}

Var Rssm::decode_observation(const BoundParameters& p, Var f) const {
  return nn::mlp(p, "decoder.obs", decoder_shape(cfg_.obs_dim), cfg_.activation, f);
}

Var Rssm::decode_reward(const BoundParameters& p, Var f) const {
  return nn::mlp(p, "decoder.reward", decoder_shape(1), cfg_.activation, f);
}

Var Rssm::decode_physical(const BoundParameters& p, Var f) const {
  return nn::mlp(p, "decoder.physical", decoder_shape(cfg_.physical_dim), nn::Activation::elu, f);
}

Matrix Rssm::mode(const Matrix& stats) const {
  if (cfg_.variant == Variant::gaussian) return stats.leftCols(cfg_.stoch);
  Matrix out(stats.rows(), cfg_.latent_dim());
  for (Eigen::Index r = 0; r < stats.rows(); ++r) {
    out.row(r) = mode(distribution(row_of(stats, r))).transpose();
  }
  return out;
}

LatentDist Rssm::distribution(const Vector& stats) const {
  if (stats.size() != cfg_.stats_dim()) throw ShapeError("rssm: statistics width mismatch");
  if (cfg_.variant == Variant::gaussian) {
    return DiagonalGaussian(stats.head(cfg_.stoch), stats.tail(cfg_.stoch));
  }
  Matrix logits = Eigen::Map<const Matrix>(stats.data(), cfg_.groups, cfg_.classes);
  return CategoricalLatent(std::move(logits));
}

Vector Rssm::sample(const LatentDist& dist, Rng& rng) const {
  if (const auto* g = std::get_if<DiagonalGaussian>(&dist)) return sample_gaussian(*g, rng);
  const Matrix m = sample_categorical(std::get<CategoricalLatent>(dist), rng);
  return Eigen::Map<const Vector>(m.data(), m.size());
}

Vector Rssm::mode(const LatentDist& dist) const {
  if (const auto* g = std::get_if<DiagonalGaussian>(&dist)) return g->mean;
  const Matrix m = std::get<CategoricalLatent>(dist).mode();
  return Eigen::Map<const Vector>(m.data(), m.size());
}

double Rssm::kl(const LatentDist& p, const LatentDist& q) const {
  if (const auto* g = std::get_if<DiagonalGaussian>(&p)) return kl_diag_gaussian(*g, std::get<DiagonalGaussian>(q));
  return kl_categorical(std::get<CategoricalLatent>(p), std::get<CategoricalLatent>(q));
}

namespace {

void check_belief(const RssmConfig& cfg, const BeliefState& b) {
  if (b.h.size() != cfg.deter || b.z.size() != cfg.latent_dim()) throw ShapeError("rssm: belief size mismatch");
}

}  // namespace

BeliefState Rssm::init_belief(const ParameterSet& params, Rng* rng) const {
  ad::Tape tape;
  BoundParameters p(tape, params, false);
  BeliefState b;
  b.h = Vector::Zero(cfg_.deter);
  const LatentDist prior = distribution(row_of(prior_stats(p, tape.constant(as_row(b.h))).value(), 0));
  b.z = rng != nullptr ? sample(prior, *rng) : mode(prior);
  return b;
}

std::pair<Vector, LatentDist> Rssm::transition_prior(const BeliefState& b, const Vector& action,
                                                     const ParameterSet& params) const {
  check_belief(cfg_, b);
  if (action.size() != cfg_.action_dim) throw ShapeError("rssm: action size mismatch");
  ad::Tape tape;
  BoundParameters p(tape, params, false);
  Var h = recurrent(p, tape.constant(as_row(b.h)), tape.constant(as_row(b.z)), tape.constant(as_row(action)));
  Var stats = prior_stats(p, h);
  return {row_of(h.value(), 0), distribution(row_of(stats.value(), 0))};
}

LatentDist Rssm::posterior(const Vector& h, const Vector& obs, const ParameterSet& params) const {
  if (h.size() != cfg_.deter) throw ShapeError("rssm: h size mismatch");
  if (obs.size() != cfg_.obs_dim) throw ShapeError("rssm: observation dimension mismatch");
  ad::Tape tape;
  BoundParameters p(tape, params, false);
  Var stats = posterior_stats(p, tape.constant(as_row(h)), tape.constant(as_row(obs)));
  return distribution(row_of(stats.value(), 0));
}

DiagonalGaussian Rssm::decode_unit(const BeliefState& b, const ParameterSet& params, int which) const {
  check_belief(cfg_, b);
  ad::Tape tape;
  BoundParameters p(tape, params, false);
  Var f = features(tape.constant(as_row(b.h)), tape.constant(as_row(b.z)));
  Var out = which == 0 ? decode_observation(p, f) : which == 1 ? decode_reward(p, f) : decode_physical(p, f);
  Vector mean = row_of(out.value(), 0);
  Vector std = Vector::Ones(mean.size());
  return {std::move(mean), std::move(std)};
}

DiagonalGaussian Rssm::decode_observation(const BeliefState& b, const ParameterSet& params) const {
  return decode_unit(b, params, 0);
}

DiagonalGaussian Rssm::decode_reward(const BeliefState& b, const ParameterSet& params) const {
  return decode_unit(b, params, 1);
}

DiagonalGaussian Rssm::decode_physical(const BeliefState& b, const ParameterSet& params) const {
  return decode_unit(b, params, 2);
}

}  // namespace wmd::rssm
