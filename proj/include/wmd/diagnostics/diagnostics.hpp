// SPDX-License-Identifier: Apache-2.0
#pragma once

// Measurements over rollout corpora: ID start selection, physical and reward
// discrepancy against replayed ground truth, PCA embeddings of latent
// features, binned displacement fields and distance to a reference set.

#include "wmd/rollouts/rollouts.hpp"

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace wmd::diagnostics {

// ---- ID selection ----

/// Index of the point with the smallest mean Euclidean distance to its k
/// nearest neighbours (itself excluded); ties go to the lowest index.
std::size_t densest_index(std::span<const Vector> points, int k = 100);

/// Densest stored physical state, measured in encoded coordinates so angles
/// near the wrap are neighbours.
env::PhysicalState select_id_state(const training::ReplayBuffer& buffer, int k = 100);
env::PhysicalState select_id_state(const env::Dynamics& dyn, std::span<const env::PhysicalState> states,
                                   int k = 100);

// ---- discrepancy ----

/// Mean over `components` of |a - b|; components flagged in `angles` use
/// the circular distance min(|d|, 2 pi - |d|).
double mean_position_distance(const env::PhysicalState& a, const env::PhysicalState& b,
                              std::span<const int> components, const std::vector<bool>& angles);

/// Per-step distance over the dynamics' position components.
std::vector<double> position_discrepancy(const env::Dynamics& dyn, std::span<const env::PhysicalState> predicted,
                                         std::span<const env::PhysicalState> truth);

/// Decoded physical predictions of a trajectory, as states.
std::vector<env::PhysicalState> predicted_states(const env::Dynamics& dyn, const rollouts::LatentTrajectory& traj);

std::vector<double> physical_discrepancy(const rollouts::LatentTrajectory& traj, const env::EnvConfig& cfg);
/// Same, against a precomputed ground truth of matching length.
std::vector<double> physical_discrepancy(const rollouts::LatentTrajectory& traj, const env::Dynamics& dyn,
                                         const env::ReplayResult& truth);

/// r_pred - r_sim per step; positive means overestimation.
std::vector<double> reward_discrepancy(const rollouts::LatentTrajectory& traj, const env::EnvConfig& cfg);
std::vector<double> reward_discrepancy(const rollouts::LatentTrajectory& traj, const env::ReplayResult& truth);

/// Recorded uncertainty per step; NaN where absent.
std::vector<double> uncertainty_trace(const rollouts::LatentTrajectory& traj);

/// Per-rollout, per-step series (rows = rollouts).
struct TraceSet {
  Matrix physical;
  Matrix reward;
  Matrix uncertainty;
};

TraceSet collect_traces(std::span<const rollouts::LatentTrajectory> trajs, const env::EnvConfig& cfg,
                        int workers = 1);

struct TraceSummary {
  std::vector<double> mean;
  std::vector<double> std;  // population standard deviation
};

/// Per-step mean and standard deviation across runs of equal length.
TraceSummary aggregate_traces(std::span<const std::vector<double>> runs);

/// Column-wise mean over rows, skipping NaN entries.
std::vector<double> column_means(const Matrix& m);
std::vector<double> column_medians(const Matrix& m);

double median(std::vector<double> values);
/// Least-squares slope of ys against their index offset by `x0`.
double least_squares_slope(std::span<const double> ys, double x0 = 0.0);

/// PE disagreement along each trajectory's start and actions (rows =
/// trajectories); column t holds the uncertainty of the prediction of s_t,
/// NaN at t = 0.
Matrix pe_uncertainty(const ensemble::GaussianEnsemble& pe, const env::Dynamics& dyn,
                      std::span<const rollouts::LatentTrajectory> trajs, int workers = 1);

// ---- embedding ----

/// f_t = (h_t, z^m_t) for every step of every trajectory, one row each.
Matrix feature_rows(std::span<const rollouts::LatentTrajectory> trajs);
Vector features(const rollouts::TrajectoryStep& step);

struct EmbeddingModel {
  Vector mean;
  Vector scale;                 // per-dimension std, floored at 1e-8
  Matrix axes;                  // d x 2, orthonormal columns
  std::array<double, 2> explained{};  // variance ratios, nonincreasing

  Vector normalize(const Vector& f) const;
  Matrix normalize_rows(const Matrix& rows) const;
  Eigen::Vector2d project(const Vector& f) const;
  Matrix project_rows(const Matrix& rows) const;
};

constexpr double kScaleFloor = 1e-8;

EmbeddingModel fit_embedding(const Matrix& feature_rows);
/// Needs at least three trajectories.
EmbeddingModel fit_embedding(std::span<const rollouts::LatentTrajectory> trajs);

// ---- vector field ----

struct VectorField {
  int bins_x = 40;
  int bins_y = 40;
  double x_min = 0, x_max = 1, y_min = 0, y_max = 1;
  Matrix sum_dx;  // bins_y x bins_x
  Matrix sum_dy;
  Eigen::MatrixXi counts;

  long total() const { return counts.sum(); }
  bool empty(int iy, int ix) const { return counts(iy, ix) == 0; }
  /// Mean displacement of a bin; zero for empty bins.
  Eigen::Vector2d mean(int iy, int ix) const;
  /// Bin of a point inside the box, clamped to the grid.
  std::pair<int, int> bin_of(const Eigen::Vector2d& p) const;
};

/// Bins every one-step displacement at the midpoint of its two embedded
/// points. The box spans all embedded points plus a 5% margin per side.
VectorField build_vector_field(const EmbeddingModel& emb, std::span<const rollouts::LatentTrajectory> trajs,
                               int bins_x = 40, int bins_y = 40);
/// Same over already-embedded paths.
VectorField build_vector_field(std::span<const Matrix> paths, int bins_x = 40, int bins_y = 40);

struct Overlay {
  std::string label;
  std::string color;
  Matrix path;  // n x 2 embedded points
};

/// One <g class="cell"> per bin, arrows scaled to the bin size, optional
/// trajectory overlays.
void write_vector_field_svg(std::ostream& out, const VectorField& field, std::span<const Overlay> overlays = {});
/// Columns: ix,iy,x,y,count,dx,dy.
void write_vector_field_csv(std::ostream& out, const VectorField& field);

// ---- attractor distance ----

struct ReferenceSet {
  Matrix points;  // normalized features, one row each
};

ReferenceSet build_reference(const EmbeddingModel& emb, std::span<const rollouts::LatentTrajectory> trajs);

/// Per step, distance of the normalized features to the nearest reference point.
std::vector<double> attractor_distance(const EmbeddingModel& emb, const rollouts::LatentTrajectory& traj,
                                       const ReferenceSet& reference);

// ---- CSV ----

/// Columns: t,physical_mean,physical_std,reward_mean,reward_std,uncertainty_mean,uncertainty_std.
void write_trace_csv(std::ostream& out, const TraceSummary& physical, const TraceSummary& reward,
                     const TraceSummary& uncertainty);

}  // namespace wmd::diagnostics
