// SPDX-License-Identifier: Apache-2.0
#include "wmd/diagnostics/diagnostics.hpp"

#include "wmd/core/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <thread>

namespace wmd::diagnostics {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw ShapeError(std::string(what) + ": horizon mismatch (" + std::to_string(a) + " vs " + std::to_string(b) +
                     ")");
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

// ---- ID selection ----

std::size_t densest_index(std::span<const Vector> points, int k) {
  const std::size_t n = points.size();
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (n <= static_cast<std::size_t>(k))
    throw std::invalid_argument("ID selection needs more than k = " + std::to_string(k) + " states, got " +
                                std::to_string(n));
  const Eigen::Index d = points[0].size();
  for (const auto& p : points)
    if (p.size() != d) throw ShapeError("ID selection: points differ in dimension");

  std::size_t best = 0;
  double best_score = std::numeric_limits<double>::infinity();
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) dist[j] = (points[i] - points[j]).norm();
    dist[i] = std::numeric_limits<double>::infinity();
    std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
    std::sort(dist.begin(), dist.begin() + k);
    double s = 0.0;
    for (int m = 0; m < k; ++m) s += dist[m];
    const double score = s / k;
    if (score < best_score) {
      best_score = score;
      best = i;
    }
  }
  return best;
}

env::PhysicalState select_id_state(const env::Dynamics& dyn, std::span<const env::PhysicalState> states, int k) {
  std::vector<Vector> encoded;
  encoded.reserve(states.size());
  for (const auto& s : states) encoded.push_back(env::encode_physical(dyn, s));
  return states[densest_index(encoded, k)];
}

env::PhysicalState select_id_state(const training::ReplayBuffer& buffer, int k) {
  const auto states = buffer.all_states();
  return select_id_state(buffer.dynamics(), states, k);
}

// ---- discrepancy ----

double mean_position_distance(const env::PhysicalState& a, const env::PhysicalState& b,
                              std::span<const int> components, const std::vector<bool>& angles) {
  if (components.empty()) throw std::invalid_argument("no position components to compare");
  double s = 0.0;
  for (int c : components) {
    double d = std::abs(a(c) - b(c));
    if (angles[c]) {
      d = std::fmod(d, 2.0 * std::numbers::pi);
      d = std::min(d, 2.0 * std::numbers::pi - d);
    }
    s += d;
  }
  return s / static_cast<double>(components.size());
}

std::vector<double> position_discrepancy(const env::Dynamics& dyn, std::span<const env::PhysicalState> predicted,
                                         std::span<const env::PhysicalState> truth) {
  require_same_length(predicted.size(), truth.size(), "physical discrepancy");
  const auto comps = dyn.position_components();
  const auto angles = dyn.angle_mask();
  std::vector<double> out(predicted.size());
  for (std::size_t t = 0; t < predicted.size(); ++t)
    out[t] = mean_position_distance(predicted[t], truth[t], comps, angles);
  return out;
}

std::vector<env::PhysicalState> predicted_states(const env::Dynamics& dyn, const rollouts::LatentTrajectory& traj) {
  std::vector<env::PhysicalState> out;
  out.reserve(traj.steps.size());
  for (const auto& st : traj.steps) out.push_back(env::state_from_decoder(dyn, st.physical_pred));
  return out;
}

std::vector<double> physical_discrepancy(const rollouts::LatentTrajectory& traj, const env::Dynamics& dyn,
                                         const env::ReplayResult& truth) {
  return position_discrepancy(dyn, predicted_states(dyn, traj), truth.states);
}

std::vector<double> physical_discrepancy(const rollouts::LatentTrajectory& traj, const env::EnvConfig& cfg) {
  const auto dyn = env::make_dynamics(cfg);
  return physical_discrepancy(traj, *dyn, rollouts::ground_truth(cfg, traj));
}

std::vector<double> reward_discrepancy(const rollouts::LatentTrajectory& traj, const env::ReplayResult& truth) {
  require_same_length(traj.steps.size(), truth.rewards.size(), "reward discrepancy");
  std::vector<double> out(traj.steps.size());
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = traj.steps[t].reward_pred - truth.rewards[t];
  return out;
}

std::vector<double> reward_discrepancy(const rollouts::LatentTrajectory& traj, const env::EnvConfig& cfg) {
  return reward_discrepancy(traj, rollouts::ground_truth(cfg, traj));
}

std::vector<double> uncertainty_trace(const rollouts::LatentTrajectory& traj) {
  std::vector<double> out;
  for (const auto& st : traj.steps) out.push_back(st.uncertainty);
  return out;
}

TraceSet collect_traces(std::span<const rollouts::LatentTrajectory> trajs, const env::EnvConfig& cfg, int workers) {
  if (trajs.empty()) throw std::invalid_argument("no trajectories");
  const auto n = static_cast<Eigen::Index>(trajs.size());
  const auto T = static_cast<Eigen::Index>(trajs[0].steps.size());
  TraceSet out{Matrix(n, T), Matrix(n, T), Matrix(n, T)};
  const auto dyn = env::make_dynamics(cfg);
  std::atomic<Eigen::Index> next{0};
  auto work = [&] {
    for (Eigen::Index i = next++; i < n; i = next++) {
      const auto& tr = trajs[i];
      require_same_length(tr.steps.size(), static_cast<std::size_t>(T), "trace collection");
      const auto truth = rollouts::ground_truth(cfg, tr);
      const auto p = physical_discrepancy(tr, *dyn, truth);
      const auto r = reward_discrepancy(tr, truth);
      for (Eigen::Index t = 0; t < T; ++t) {
        out.physical(i, t) = p[t];
        out.reward(i, t) = r[t];
        out.uncertainty(i, t) = tr.steps[t].uncertainty;
      }
    }
  };
  const int w = std::clamp<int>(workers, 1, static_cast<int>(n));
  if (w == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < w; ++i) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  return out;
}

Matrix pe_uncertainty(const ensemble::GaussianEnsemble& pe, const env::Dynamics& dyn,
                      std::span<const rollouts::LatentTrajectory> trajs, int workers) {
  if (trajs.empty()) throw std::invalid_argument("no trajectories");
  const auto n = static_cast<Eigen::Index>(trajs.size());
  const auto T = static_cast<Eigen::Index>(trajs[0].steps.size());
  Matrix out = Matrix::Constant(n, T, kNaN);
  std::atomic<Eigen::Index> next{0};
  auto work = [&] {
    for (Eigen::Index i = next++; i < n; i = next++) {
      const auto& tr = trajs[i];
      require_same_length(tr.steps.size(), static_cast<std::size_t>(T), "PE uncertainty");
      std::vector<env::Action> actions;
      for (std::size_t t = 1; t < tr.steps.size(); ++t) actions.push_back(tr.steps[t].action);
      Rng unused(0);  // mean mode draws nothing
      const auto r = ensemble::pe_rollout(pe, dyn, tr.start, actions, ensemble::PeMode::mean, unused);
      for (Eigen::Index t = 1; t < T; ++t) out(i, t) = r.uncertainty[t - 1];
    }
  };
  const int w = std::clamp<int>(workers, 1, static_cast<int>(n));
  if (w == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < w; ++i) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  return out;
}

TraceSummary aggregate_traces(std::span<const std::vector<double>> runs) {
  if (runs.empty()) throw std::invalid_argument("aggregate_traces needs at least one run");
  const std::size_t T = runs[0].size();
  TraceSummary s{std::vector<double>(T, 0.0), std::vector<double>(T, 0.0)};
  for (const auto& r : runs) require_same_length(r.size(), T, "aggregate_traces");
  const double n = static_cast<double>(runs.size());
  for (std::size_t t = 0; t < T; ++t) {
    double sum = 0.0;
    for (const auto& r : runs) sum += r[t];
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& r : runs) ss += (r[t] - mean) * (r[t] - mean);
    s.mean[t] = mean;
    s.std[t] = std::sqrt(ss / n);
  }
  return s;
}

std::vector<double> column_means(const Matrix& m) {
  std::vector<double> out(m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    double s = 0.0;
    int k = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      if (!std::isnan(m(r, c))) {
        s += m(r, c);
        ++k;
      }
    out[c] = k == 0 ? kNaN : s / k;
  }
  return out;
}

std::vector<double> column_medians(const Matrix& m) {
  std::vector<double> out(m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    std::vector<double> v;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      if (!std::isnan(m(r, c))) v.push_back(m(r, c));
    out[c] = median(std::move(v));
  }
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double least_squares_slope(std::span<const double> ys, double x0) {
  if (ys.size() < 2) throw std::invalid_argument("slope needs at least two points");
  const double n = static_cast<double>(ys.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    mx += x0 + static_cast<double>(i);
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const double dx = x0 + static_cast<double>(i) - mx;
    sxy += dx * (ys[i] - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

// ---- embedding ----

Vector features(const rollouts::TrajectoryStep& step) {
  Vector f(step.belief.h.size() + step.z_mode.size());
  f << step.belief.h, step.z_mode;
  return f;
}

Matrix feature_rows(std::span<const rollouts::LatentTrajectory> trajs) {
  Eigen::Index rows = 0;
  for (const auto& tr : trajs) rows += static_cast<Eigen::Index>(tr.steps.size());
  if (rows == 0) throw std::invalid_argument("no rollout steps to embed");
  Matrix out(rows, features(trajs[0].steps[0]).size());
  Eigen::Index r = 0;
  for (const auto& tr : trajs)
    for (const auto& st : tr.steps) out.row(r++) = features(st).transpose();
  return out;
}

Vector EmbeddingModel::normalize(const Vector& f) const {
  return ((f - mean).array() / scale.array()).matrix();
}

Matrix EmbeddingModel::normalize_rows(const Matrix& rows) const {
  return ((rows.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array()).matrix();
}

Eigen::Vector2d EmbeddingModel::project(const Vector& f) const {
  return axes.transpose() * normalize(f);
}

Matrix EmbeddingModel::project_rows(const Matrix& rows) const {
  return normalize_rows(rows) * axes;
}

EmbeddingModel fit_embedding(const Matrix& rows) {
  if (rows.rows() < 2 || rows.cols() < 2) throw ShapeError("embedding needs at least 2 samples of dimension >= 2");
  if (!rows.allFinite()) throw NumericError("non-finite features in embedding input");
  EmbeddingModel m;
  const double n = static_cast<double>(rows.rows());
  m.mean = rows.colwise().mean().transpose();
  const Matrix centered = rows.rowwise() - m.mean.transpose();
  m.scale = (centered.colwise().squaredNorm() / n).cwiseSqrt().transpose().cwiseMax(kScaleFloor);
  const Matrix z = (centered.array().rowwise() / m.scale.transpose().array()).matrix();
  const Matrix cov = (z.transpose() * z) / n;

  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  if (es.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
  const Vector& vals = es.eigenvalues();  // ascending
  const Eigen::Index d = vals.size();
  const double total = std::max(vals.sum(), 0.0);
  m.axes.resize(d, 2);
  for (int j = 0; j < 2; ++j) {
    Vector v = es.eigenvectors().col(d - 1 - j);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    m.axes.col(j) = v;
    m.explained[j] = total > 0 ? std::max(vals(d - 1 - j), 0.0) / total : 0.0;
  }
  return m;
}

EmbeddingModel fit_embedding(std::span<const rollouts::LatentTrajectory> trajs) {
  if (trajs.size() < 3) throw std::invalid_argument("fit_embedding needs at least 3 trajectories");
  return fit_embedding(feature_rows(trajs));
}

// ---- vector field ----

Eigen::Vector2d VectorField::mean(int iy, int ix) const {
  const int c = counts(iy, ix);
  if (c == 0) return Eigen::Vector2d::Zero();
  return {sum_dx(iy, ix) / c, sum_dy(iy, ix) / c};
}

std::pair<int, int> VectorField::bin_of(const Eigen::Vector2d& p) const {
  auto idx = [](double v, double lo, double hi, int bins) {
    const int i = static_cast<int>(std::floor((v - lo) / (hi - lo) * bins));
    return std::clamp(i, 0, bins - 1);
  };
  return {idx(p.y(), y_min, y_max, bins_y), idx(p.x(), x_min, x_max, bins_x)};
}

VectorField build_vector_field(std::span<const Matrix> paths, int bins_x, int bins_y) {
  if (bins_x < 1 || bins_y < 1) throw std::invalid_argument("vector field needs at least one bin per axis");
  VectorField f;
  f.bins_x = bins_x;
  f.bins_y = bins_y;
  double lo_x = std::numeric_limits<double>::infinity(), hi_x = -lo_x, lo_y = lo_x, hi_y = -lo_x;
  long transitions = 0;
  for (const auto& p : paths) {
    if (p.cols() != 2) throw ShapeError("embedded paths must have two columns");
    if (p.rows() == 0) continue;
    transitions += p.rows() - 1;
    lo_x = std::min(lo_x, p.col(0).minCoeff());
    hi_x = std::max(hi_x, p.col(0).maxCoeff());
    lo_y = std::min(lo_y, p.col(1).minCoeff());
    hi_y = std::max(hi_y, p.col(1).maxCoeff());
  }
  if (transitions <= 0) throw std::invalid_argument("vector field needs at least one transition");
  auto pad = [](double& lo, double& hi) {
    double span = hi - lo;
    if (span <= 0) span = std::max(std::abs(lo), 1.0);
    lo -= 0.05 * span;
    hi += 0.05 * span;
  };
  pad(lo_x, hi_x);
  pad(lo_y, hi_y);
  f.x_min = lo_x;
  f.x_max = hi_x;
  f.y_min = lo_y;
  f.y_max = hi_y;
  f.sum_dx = Matrix::Zero(bins_y, bins_x);
  f.sum_dy = Matrix::Zero(bins_y, bins_x);
  f.counts = Eigen::MatrixXi::Zero(bins_y, bins_x);
  for (const auto& p : paths)
    for (Eigen::Index t = 1; t < p.rows(); ++t) {
      const Eigen::Vector2d a = p.row(t - 1).transpose(), b = p.row(t).transpose();
      const auto [iy, ix] = f.bin_of(0.5 * (a + b));
      f.sum_dx(iy, ix) += b.x() - a.x();
      f.sum_dy(iy, ix) += b.y() - a.y();
      ++f.counts(iy, ix);
    }
  return f;
}

VectorField build_vector_field(const EmbeddingModel& emb, std::span<const rollouts::LatentTrajectory> trajs,
                               int bins_x, int bins_y) {
  std::vector<Matrix> paths;
  for (const auto& tr : trajs) {
    if (tr.steps.empty()) continue;
    paths.push_back(emb.project_rows(feature_rows(std::span(&tr, 1))));
  }
  return build_vector_field(paths, bins_x, bins_y);
}

void write_vector_field_svg(std::ostream& out, const VectorField& f, std::span<const Overlay> overlays) {
  constexpr double kCell = 16.0;
  const double w = f.bins_x * kCell, h = f.bins_y * kCell;
  const double sx = w / (f.x_max - f.x_min), sy = h / (f.y_max - f.y_min);
  auto px = [&](double x) { return (x - f.x_min) * sx; };
  auto py = [&](double y) { return h - (y - f.y_min) * sy; };

  // longest mean arrow spans 0.9 of a cell
  double longest = 0.0;
  for (int iy = 0; iy < f.bins_y; ++iy)
    for (int ix = 0; ix < f.bins_x; ++ix) {
      const auto m = f.mean(iy, ix);
      longest = std::max(longest, std::hypot(m.x() * sx, m.y() * sy));
    }
  const double gain = longest > 0 ? 0.9 * kCell / longest : 0.0;

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 "
      << w << ' ' << h << "\" data-schema=\"wmd-field-1\">\n";
  out << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  for (int iy = 0; iy < f.bins_y; ++iy)
    for (int ix = 0; ix < f.bins_x; ++ix) {
      const double cx = (ix + 0.5) * kCell, cy = h - (iy + 0.5) * kCell;
      out << "<g class=\"cell\" data-ix=\"" << ix << "\" data-iy=\"" << iy << "\" data-count=\"" << f.counts(iy, ix)
          << "\">";
      if (!f.empty(iy, ix)) {
        const auto m = f.mean(iy, ix);
        const double dx = m.x() * sx * gain, dy = -m.y() * sy * gain;
        out << "<line x1=\"" << fmt(cx - dx / 2) << "\" y1=\"" << fmt(cy - dy / 2) << "\" x2=\"" << fmt(cx + dx / 2)
            << "\" y2=\"" << fmt(cy + dy / 2) << "\" stroke=\"#555\" stroke-width=\"1\"/>"
            << "<circle cx=\"" << fmt(cx + dx / 2) << "\" cy=\"" << fmt(cy + dy / 2)
            << "\" r=\"1.5\" fill=\"#555\"/>";
      }
      out << "</g>\n";
    }
  for (const auto& o : overlays) {
    out << "<polyline class=\"overlay\" data-label=\"" << o.label << "\" fill=\"none\" stroke=\"" << o.color
        << "\" stroke-width=\"2\" points=\"";
    for (Eigen::Index t = 0; t < o.path.rows(); ++t)
      out << (t ? " " : "") << fmt(px(o.path(t, 0))) << ',' << fmt(py(o.path(t, 1)));
    out << "\"/>\n";
  }
  out << "</svg>\n";
}

void write_vector_field_csv(std::ostream& out, const VectorField& f) {
  out << "ix,iy,x,y,count,dx,dy\n";
  for (int iy = 0; iy < f.bins_y; ++iy)
    for (int ix = 0; ix < f.bins_x; ++ix) {
      const double x = f.x_min + (ix + 0.5) * (f.x_max - f.x_min) / f.bins_x;
      const double y = f.y_min + (iy + 0.5) * (f.y_max - f.y_min) / f.bins_y;
      const auto m = f.mean(iy, ix);
      out << ix << ',' << iy << ',' << fmt(x) << ',' << fmt(y) << ',' << f.counts(iy, ix) << ',' << fmt(m.x())
          << ',' << fmt(m.y()) << '\n';
    }
}

// ---- attractor distance ----

ReferenceSet build_reference(const EmbeddingModel& emb, std::span<const rollouts::LatentTrajectory> trajs) {
  return {emb.normalize_rows(feature_rows(trajs))};
}

std::vector<double> attractor_distance(const EmbeddingModel& emb, const rollouts::LatentTrajectory& traj,
                                       const ReferenceSet& reference) {
  if (reference.points.rows() == 0) throw std::invalid_argument("attractor distance needs a non-empty reference");
  const Matrix q = emb.normalize_rows(feature_rows(std::span(&traj, 1)));
  std::vector<double> out(q.rows());
  for (Eigen::Index t = 0; t < q.rows(); ++t)
    out[t] = std::sqrt((reference.points.rowwise() - q.row(t)).rowwise().squaredNorm().minCoeff());
  return out;
}

void write_trace_csv(std::ostream& out, const TraceSummary& physical, const TraceSummary& reward,
                     const TraceSummary& uncertainty) {
  const std::size_t T = physical.mean.size();
  require_same_length(reward.mean.size(), T, "trace csv");
  require_same_length(uncertainty.mean.size(), T, "trace csv");
  out << "t,physical_mean,physical_std,reward_mean,reward_std,uncertainty_mean,uncertainty_std\n";
  for (std::size_t t = 0; t < T; ++t)
    out << t << ',' << fmt(physical.mean[t]) << ',' << fmt(physical.std[t]) << ',' << fmt(reward.mean[t]) << ','
        << fmt(reward.std[t]) << ',' << fmt(uncertainty.mean[t]) << ',' << fmt(uncertainty.std[t]) << '\n';
}

}  // namespace wmd::diagnostics
