// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include "wmd/core/errors.hpp"
#include "wmd/ensemble/ensemble.hpp"

#include <algorithm>
#include <cmath>

using namespace wmd;
using namespace wmd::ensemble;

namespace {

EnsembleConfig small(bool bootstrap = true) {
  EnsembleConfig c;
  c.members = 3;
  c.hidden = 16;
  c.layers = 2;
  c.bootstrap = bootstrap;
  c.batch = 64;
  c.learning_rate = 3e-3;
  return c;
}

}  // namespace

TEST_CASE("identical members stay identical without bootstrap") {
  Rng rng(1);
  GaussianEnsemble ens(small(false), 4, 2, true, rng);
  ens.copy_member_zero();
  const Matrix x = rng.normal_matrix(40, 4);
  const Matrix y = rng.normal_matrix(40, 2);
  for (int i = 0; i < 3; ++i) ens.train_step(x, y, rng);
  const ParameterSet m0 = ens.params().extract("m0.");
  CHECK(ens.params().extract("m1.") == m0);
  CHECK(ens.params().extract("m2.") == m0);
  const auto pred = ens.predict(rng.normal_vector(4));
  CHECK(gjs_uncertainty(pred) == 0.0);
}

TEST_CASE("NLL falls on a linear dynamics dataset") {
  Rng rng(2);
  const Matrix a = rng.normal_matrix(3, 3) * 0.5;
  Matrix x = rng.normal_matrix(256, 3);
  Matrix y = x * a + 0.05 * rng.normal_matrix(256, 3);
  GaussianEnsemble ens(small(), 3, 3, false, rng);
  const double before = ens.mean_nll(x, y);
  std::vector<double> curve;
  for (int i = 0; i < 1000; ++i) curve.push_back(ens.train_step(x, y, rng).nll);
  const double after = ens.mean_nll(x, y);
  CHECK(after < before - 2.0);
  double early = 0.0, late = 0.0;
  for (int i = 0; i < 100; ++i) {
    early += curve[static_cast<std::size_t>(i)];
    late += curve[curve.size() - 1 - static_cast<std::size_t>(i)];
  }
  CHECK(late < early);
}

TEST_CASE("predictions are deterministic and member-ordered") {
  Rng rng(3);
  GaussianEnsemble ens(small(), 5, 2, true, rng);
  const Vector x = rng.normal_vector(5);
  const auto p1 = ens.predict(x);
  const auto p2 = ens.predict(x);
  REQUIRE(p1.size() == 3);
  for (std::size_t i = 0; i < p1.size(); ++i) {
    CHECK(p1[i].mean == p2[i].mean);
    CHECK(p1[i].std == p2[i].std);
  }
  auto reversed = p1;
  std::reverse(reversed.begin(), reversed.end());
  CHECK(gjs_uncertainty(reversed) == doctest::Approx(gjs_uncertainty(p1)).epsilon(1e-12));
}

TEST_CASE("independent members disagree on random inputs") {
  Rng rng(4);
  GaussianEnsemble ens(small(), 6, 4, true, rng);
  for (int i = 0; i < 100; ++i) {
    const Vector x = rng.normal_vector(6) * 3.0;
    CHECK(gjs_uncertainty(ens.predict(x)) > 0.0);
  }
}

TEST_CASE("training rejects empty or mismatched batches") {
  Rng rng(5);
  GaussianEnsemble ens(small(), 2, 1, false, rng);
  CHECK_THROWS_AS(ens.train_step(Matrix(0, 2), Matrix(0, 1), rng), ShapeError);
  CHECK_THROWS_AS(ens.train_step(Matrix::Zero(3, 2), Matrix::Zero(2, 1), rng), ShapeError);
  EnsembleConfig one = small();
  one.members = 1;
  CHECK_THROWS_AS(GaussianEnsemble(one, 2, 1, false, rng), ConfigError);
}

TEST_CASE("pe_rollout") {
  env::EnvConfig cfg;
  const auto dyn = env::make_dynamics(cfg);
  Rng rng(6);
  GaussianEnsemble pe = make_physical_ensemble(small(), *dyn, rng);
  env::PhysicalState s0(2);
  s0 << 0.5, -1.0;

  const auto empty = pe_rollout(pe, *dyn, s0, {}, PeMode::mean, rng);
  CHECK(empty.encoded.empty());
  CHECK(empty.uncertainty.empty());

  pe.copy_member_zero();
  std::vector<env::Action> actions;
  for (int t = 0; t < 20; ++t) actions.push_back(env::Action::Constant(1, rng.uniform(-1, 1)));
  const auto roll = pe_rollout(pe, *dyn, s0, actions, PeMode::mean, rng);
  REQUIRE(roll.encoded.size() == actions.size());
  Vector s = env::encode_physical(*dyn, s0);
  for (std::size_t t = 0; t < actions.size(); ++t) {
    Vector input(4);
    input << s, actions[t];
    s = pe.predict(input).front().mean;
    CHECK((roll.encoded[t] - s).norm() < 1e-12);
    CHECK(roll.uncertainty[t] == 0.0);
  }

  Rng a(1), b(1);
  const auto s1 = pe_rollout(pe, *dyn, s0, actions, PeMode::member_sample, a);
  const auto s2 = pe_rollout(pe, *dyn, s0, actions, PeMode::member_sample, b);
  CHECK(s1.encoded.back() == s2.encoded.back());
}

TEST_CASE("trained PE beats a constant predictor on pendulum transitions") {
  env::EnvConfig cfg;
  cfg.obs_noise = 0.0;
  env::Environment environment(cfg);
  const auto& dyn = environment.dynamics();
  Rng rng(7);
  Matrix x(600, 4), y(600, 3);
  Eigen::Index row = 0;
  while (row < x.rows()) {
    environment.reset(rng);
    for (int t = 0; t < 100 && row < x.rows(); ++t, ++row) {
      env::Action a = env::Action::Constant(1, rng.uniform(-1, 1));
      x.row(row) << env::encode_physical(dyn, environment.state()).transpose(), a[0];
      y.row(row) = env::encode_physical(dyn, environment.step(a, rng).state).transpose();
    }
  }
  EnsembleConfig c = small();
  c.batch = 128;
  GaussianEnsemble pe = make_physical_ensemble(c, dyn, rng);
  for (int i = 0; i < 800; ++i) pe.train_step(x, y, rng);

  const RowVector mu = y.colwise().mean();
  const RowVector sd = ((y.rowwise() - mu).array().square().colwise().mean()).sqrt();
  double baseline = 0.0;
  for (Eigen::Index r = 0; r < y.rows(); ++r) baseline -= DiagonalGaussian(mu.transpose(), sd.transpose()).log_prob(row_of(y, r));
  baseline /= static_cast<double>(y.rows());
  CHECK(pe.mean_nll(x, y) < baseline - 1.0);
}
