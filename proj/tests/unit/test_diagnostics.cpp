// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include "wmd/core/errors.hpp"
#include "wmd/diagnostics/diagnostics.hpp"
#include "support/brute_force.hpp"

#include <algorithm>
#include <numbers>
#include <regex>
#include <sstream>

using namespace wmd;
using namespace wmd::diagnostics;

namespace {

using oracle::brute_force_densest;
using oracle::jacobi_eigen;

rollouts::LatentTrajectory synthetic_traj(const Matrix& rows, int h_dim) {
  rollouts::LatentTrajectory tr;
  for (Eigen::Index t = 0; t < rows.rows(); ++t) {
    rollouts::TrajectoryStep st;
    st.belief.h = rows.row(t).head(h_dim).transpose();
    st.z_mode = rows.row(t).tail(rows.cols() - h_dim).transpose();
    st.belief.z = st.z_mode;
    tr.steps.push_back(st);
  }
  return tr;
}

// A real rollout whose predictions are overwritten with the replayed truth.
struct PerfectPrediction {
  env::EnvConfig cfg;
  rollouts::LatentTrajectory traj;
  env::ReplayResult truth;

  explicit PerfectPrediction(env::EnvId id) {
    cfg.id = id;
    const auto dyn = env::make_dynamics(cfg);
    Rng rng(8);
    traj.start = dyn->sample_initial(rng);
    for (int t = 0; t < 30; ++t) {
      rollouts::TrajectoryStep st;
      st.action = t == 0 ? env::Action::Zero(1) : env::Action::Constant(1, rng.uniform(-1, 1));
      traj.steps.push_back(st);
    }
    truth = rollouts::ground_truth(cfg, traj);
    for (int t = 0; t < 30; ++t) {
      traj.steps[t].physical_pred = env::decoder_target(*dyn, truth.states[t]);
      traj.steps[t].reward_pred = truth.rewards[t];
    }
  }
};

}  // namespace

TEST_CASE("ID selection: ties go to the first index") {
  std::vector<Vector> pts(150, Vector::Constant(3, 1.5));
  CHECK(densest_index(pts, 100) == 0);
  CHECK_THROWS(densest_index(std::vector<Vector>(100, Vector::Zero(2)), 100));
}

TEST_CASE("ID selection picks a cluster member and agrees with brute force") {
  Rng rng(4);
  std::vector<Vector> pts;
  for (int i = 0; i < 50; ++i) pts.push_back(rng.normal_vector(3) * 10.0);
  for (int i = 0; i < 200; ++i) pts.push_back(Vector::Constant(3, 2.0) + 0.05 * rng.normal_vector(3));
  const auto idx = densest_index(pts, 100);
  CHECK(idx >= 50);
  CHECK(idx == brute_force_densest(pts, 100));

  for (int trial = 0; trial < 3; ++trial) {
    std::vector<Vector> cloud;
    const int n = 300 + 400 * trial;
    for (int i = 0; i < n; ++i) cloud.push_back(rng.normal_vector(2 + trial));
    CHECK(densest_index(cloud, 100) == brute_force_densest(cloud, 100));
  }
}

TEST_CASE("select_id_state returns a stored state") {
  env::EnvConfig cfg;
  training::ReplayBuffer buf(env::make_dynamics(cfg));
  env::Environment e(cfg);
  Rng a(1), b(2);
  buf.add(training::collect_episode(e, training::PolicyKind::scripted, 0.3, a, b));
  const auto s = select_id_state(buf, 20);
  bool found = false;
  for (const auto& x : buf.episodes()[0].states) found = found || x == s;
  CHECK(found);
}

TEST_CASE("position distance: offsets, wrap-around and pseudometric axioms") {
  const std::vector<bool> angles{false, true};
  const std::vector<int> both{0, 1};
  env::PhysicalState a(2), b(2);
  a << 1.0, 0.5;
  b << 1.3, 0.5;
  CHECK(mean_position_distance(a, b, both, angles) == doctest::Approx(0.15).epsilon(1e-14));
  a << 0.0, std::numbers::pi - 0.01;
  b << 0.0, -std::numbers::pi + 0.01;
  const std::vector<int> angle_only{1};
  CHECK(mean_position_distance(a, b, angle_only, angles) == doctest::Approx(0.02).epsilon(1e-9));

  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    env::PhysicalState x(2), y(2);
    x << rng.uniform(-5, 5), rng.uniform(-3 * std::numbers::pi, 3 * std::numbers::pi);
    y << rng.uniform(-5, 5), rng.uniform(-3 * std::numbers::pi, 3 * std::numbers::pi);
    const double dxy = mean_position_distance(x, y, both, angles);
    CHECK(dxy >= 0.0);
    CHECK(dxy == mean_position_distance(y, x, both, angles));
    CHECK(mean_position_distance(x, x, both, angles) == 0.0);
  }
}

TEST_CASE("discrepancy against the replay oracle") {
  for (auto id : {env::EnvId::pendulum, env::EnvId::cartpole}) {
    PerfectPrediction p(id);
    for (double v : physical_discrepancy(p.traj, p.cfg)) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
    for (double v : reward_discrepancy(p.traj, p.cfg)) CHECK(v == 0.0);

    for (auto& st : p.traj.steps) st.reward_pred += 0.1;
    for (double v : reward_discrepancy(p.traj, p.cfg)) CHECK(v == doctest::Approx(0.1).epsilon(1e-12));

    auto shorter = p.truth;
    shorter.states.pop_back();
    shorter.rewards.pop_back();
    const auto dyn = env::make_dynamics(p.cfg);
    CHECK_THROWS_AS(physical_discrepancy(p.traj, *dyn, shorter), ShapeError);
    CHECK_THROWS_AS(reward_discrepancy(p.traj, shorter), ShapeError);
  }
}

TEST_CASE("cartpole discrepancy ignores the cart position") {
  PerfectPrediction p(env::EnvId::cartpole);
  const auto dyn = env::make_dynamics(p.cfg);
  auto truth = p.truth;
  for (auto& s : truth.states) s(0) += 5.0;
  for (double v : physical_discrepancy(p.traj, *dyn, truth)) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
  for (auto& s : truth.states) s(1) += 0.2;
  for (double v : physical_discrepancy(p.traj, *dyn, truth)) CHECK(v == doctest::Approx(0.2).epsilon(1e-9));
}

TEST_CASE("trace aggregation") {
  const std::vector<std::vector<double>> one{{1.0, 2.0, 3.0}};
  const auto s1 = aggregate_traces(one);
  CHECK(s1.mean == one[0]);
  CHECK(s1.std == std::vector<double>{0, 0, 0});
  const std::vector<std::vector<double>> two{{0.1, 5.0}, {0.7, -1.0}};
  const auto s2 = aggregate_traces(two);
  CHECK(s2.mean[0] == (0.1 + 0.7) / 2);
  CHECK(s2.mean[1] == 2.0);
  CHECK(s2.std[1] == doctest::Approx(3.0));
  CHECK_THROWS(aggregate_traces(std::vector<std::vector<double>>{{1.0}, {1.0, 2.0}}));
  CHECK_THROWS(aggregate_traces(std::vector<std::vector<double>>{}));

  std::ostringstream os;
  write_trace_csv(os, s2, s2, s2);
  CHECK(os.str().substr(0, os.str().find('\n')) ==
        "t,physical_mean,physical_std,reward_mean,reward_std,uncertainty_mean,uncertainty_std");
}

TEST_CASE("median, column statistics and slope") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  Matrix m(3, 2);
  m << 1, std::nan(""), 2, 4, 9, 6;
  CHECK(column_means(m) == std::vector<double>{4.0, 5.0});
  CHECK(column_medians(m) == std::vector<double>{2.0, 5.0});
  const std::vector<double> ys{1.0, 3.0, 5.0, 7.0};
  CHECK(least_squares_slope(ys, 3.0) == doctest::Approx(2.0));
  const std::vector<double> flat{2.0, 2.0, 2.0};
  CHECK(least_squares_slope(flat) == 0.0);
}

TEST_CASE("embedding of points on a line in 3D") {
  Rng rng(6);
  Matrix rows(500, 3);
  const Eigen::Vector3d dir(1.0, -2.0, 0.5);
  for (int i = 0; i < 500; ++i) rows.row(i) = (rng.normal() * dir + Eigen::Vector3d(3, 1, -2)).transpose();
  const auto emb = fit_embedding(rows);
  // after z-scoring the line direction becomes the sign pattern of dir
  const Eigen::Vector3d expected = Eigen::Vector3d(1, -1, 1).normalized();
  CHECK(std::abs(emb.axes.col(0).dot(expected)) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(emb.explained[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(emb.explained[1] < 1e-9);
}

TEST_CASE("isotropic cloud has equal explained variances") {
  Rng rng(7);
  Matrix rows(10000, 2);
  for (int i = 0; i < 10000; ++i) rows.row(i) = rng.normal_vector(2).transpose();
  const auto emb = fit_embedding(rows);
  CHECK(emb.explained[0] == doctest::Approx(0.5).epsilon(0.05));
  CHECK(emb.explained[1] == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("projection matches a Jacobi eigendecomposition oracle") {
  Rng rng(9);
  for (int d : {3, 12, 40}) {
    const Matrix mix = Matrix::NullaryExpr(d, d, [&] { return rng.normal(); });
    Matrix rows(400, d);
    for (int i = 0; i < 400; ++i) rows.row(i) = (mix * rng.normal_vector(d)).transpose();
    rows.col(0) *= 50.0;
    const auto emb = fit_embedding(rows);

    // independent normalization and covariance
    Vector mean = Vector::Zero(d), sd = Vector::Zero(d);
    for (int i = 0; i < 400; ++i) mean += rows.row(i).transpose() / 400.0;
    for (int i = 0; i < 400; ++i) sd += (rows.row(i).transpose() - mean).cwiseAbs2() / 400.0;
    sd = sd.cwiseSqrt();
    Matrix z(400, d);
    for (int i = 0; i < 400; ++i) z.row(i) = ((rows.row(i).transpose() - mean).array() / sd.array()).transpose();
    Matrix cov = Matrix::Zero(d, d);
    for (int i = 0; i < 400; ++i) cov += z.row(i).transpose() * z.row(i) / 400.0;
    auto [vals, vecs] = jacobi_eigen(cov);

    CHECK(emb.explained[0] == doctest::Approx(vals(0) / vals.sum()).epsilon(1e-10));
    CHECK(emb.explained[1] == doctest::Approx(vals(1) / vals.sum()).epsilon(1e-10));
    CHECK(emb.explained[0] >= emb.explained[1]);
    CHECK((emb.axes.transpose() * emb.axes - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() < 1e-9);
    for (int j = 0; j < 2; ++j) {
      Vector v = vecs.col(j);
      Eigen::Index arg = 0;
      v.cwiseAbs().maxCoeff(&arg);
      if (v(arg) < 0) v = -v;
      const Vector oracle = z * v;
      const Vector ours = emb.project_rows(rows).col(j);
      CHECK((oracle - ours).cwiseAbs().maxCoeff() < 1e-8);
    }
  }
}

TEST_CASE("embedding is reproducible and tolerates constant features") {
  Rng rng(10);
  Matrix rows(200, 4);
  for (int i = 0; i < 200; ++i) rows.row(i) = rng.normal_vector(4).transpose();
  rows.col(2).setConstant(3.0);
  const auto a = fit_embedding(rows);
  const auto b = fit_embedding(rows);
  CHECK(a.project_rows(rows) == b.project_rows(rows));
  CHECK(a.scale(2) == kScaleFloor);
  CHECK(a.project_rows(rows).allFinite());

  std::vector<rollouts::LatentTrajectory> two(2, synthetic_traj(rows.topRows(5), 2));
  CHECK_THROWS(fit_embedding(two));
}

TEST_CASE("vector field: single transition, mass and reversal") {
  Matrix one(2, 2);
  one << 0.0, 0.0, 1.0, 2.0;
  const std::vector<Matrix> single{one};
  const auto f = build_vector_field(single, 10, 10);
  CHECK(f.total() == 1);
  int nonempty = 0;
  for (int iy = 0; iy < 10; ++iy)
    for (int ix = 0; ix < 10; ++ix)
      if (!f.empty(iy, ix)) {
        ++nonempty;
        CHECK(f.mean(iy, ix) == Eigen::Vector2d(1.0, 2.0));
      } else {
        CHECK(f.mean(iy, ix).isZero());
      }
  CHECK(nonempty == 1);

  Rng rng(11);
  std::vector<Matrix> paths, reversed;
  long expected = 0;
  for (int k = 0; k < 20; ++k) {
    const int T = 5 + k;
    Matrix p(T, 2);
    p.row(0) = rng.normal_vector(2).transpose();
    for (int t = 1; t < T; ++t) p.row(t) = p.row(t - 1) + 0.3 * rng.normal_vector(2).transpose();
    paths.push_back(p);
    reversed.push_back(p.colwise().reverse());
    expected += T - 1;
  }
  const auto fwd = build_vector_field(paths);
  const auto bwd = build_vector_field(reversed);
  CHECK(fwd.total() == expected);
  CHECK(build_vector_field(paths, 7, 13).total() == expected);
  CHECK(fwd.counts == bwd.counts);
  for (int iy = 0; iy < fwd.bins_y; ++iy)
    for (int ix = 0; ix < fwd.bins_x; ++ix) {
      CHECK(fwd.mean(iy, ix).x() == doctest::Approx(-bwd.mean(iy, ix).x()).epsilon(1e-12));
      CHECK(fwd.mean(iy, ix).y() == doctest::Approx(-bwd.mean(iy, ix).y()).epsilon(1e-12));
    }
  CHECK_THROWS(build_vector_field(std::vector<Matrix>{Matrix::Zero(1, 2)}));
}

TEST_CASE("vector field from trajectories and its SVG") {
  Rng rng(12);
  std::vector<rollouts::LatentTrajectory> trajs;
  long expected = 0;
  for (int k = 0; k < 6; ++k) {
    Matrix rows(8, 5);
    for (int t = 0; t < 8; ++t) rows.row(t) = rng.normal_vector(5).transpose();
    trajs.push_back(synthetic_traj(rows, 3));
    expected += 7;
  }
  const auto emb = fit_embedding(trajs);
  const auto f = build_vector_field(emb, trajs, 12, 9);
  CHECK(f.total() == expected);

  std::vector<Overlay> overlays{{"id", "#1f77b4", emb.project_rows(feature_rows(std::span(&trajs[0], 1)))}};
  std::ostringstream os;
  write_vector_field_svg(os, f, overlays);
  const std::string svg = os.str();
  const std::regex cell("<g class=\"cell\"");
  const auto n = std::distance(std::sregex_iterator(svg.begin(), svg.end(), cell), std::sregex_iterator());
  CHECK(n == 12 * 9);
  CHECK(svg.find("data-label=\"id\"") != std::string::npos);

  std::ostringstream csv;
  write_vector_field_csv(csv, f);
  const std::string text = csv.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 12 * 9);
}

TEST_CASE("attractor distance") {
  Rng rng(13);
  std::vector<rollouts::LatentTrajectory> trajs;
  for (int k = 0; k < 4; ++k) {
    Matrix rows(10, 4);
    for (int t = 0; t < 10; ++t) rows.row(t) = rng.normal_vector(4).transpose();
    trajs.push_back(synthetic_traj(rows, 2));
  }
  const auto emb = fit_embedding(trajs);
  const auto ref = build_reference(emb, trajs);
  for (double v : attractor_distance(emb, trajs[2], ref)) CHECK(v == 0.0);

  // a singleton reference at the normalized origin; a point offset by 3
  // normalized units along one axis sits at distance 3
  ReferenceSet single{Matrix::Zero(1, 4)};
  rollouts::LatentTrajectory probe;
  rollouts::TrajectoryStep st;
  st.belief.h = emb.mean.head(2);
  st.z_mode = emb.mean.tail(2);
  st.belief.h(1) += 3.0 * emb.scale(1);
  probe.steps.push_back(st);
  CHECK(attractor_distance(emb, probe, single)[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK_THROWS(attractor_distance(emb, probe, ReferenceSet{Matrix(0, 4)}));
}
