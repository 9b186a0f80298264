// SPDX-License-Identifier: Apache-2.0
#include "wmd/cli/commands.hpp"

#include "wmd/core/errors.hpp"
#include "wmd/diagnostics/diagnostics.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

namespace wmd::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kFormat = "wmd-run 1";
constexpr std::uint64_t kDiagnoseStream = 0x64696167ULL;

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

template <class Fn>
fs::path write_file(const fs::path& path, Fn&& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  body(out);
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
  return path;
}

Matrix stack_states(const std::vector<env::PhysicalState>& states, int dim) {
  Matrix m(static_cast<Eigen::Index>(states.size()), dim);
  for (std::size_t i = 0; i < states.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = states[i].transpose();
  return m;
}

}  // namespace

// ---- checkpoint packaging ----

env::EnvConfig TrainedRun::env_config() const {
  env::EnvConfig e = config.fit.env;
  e.seed = config.seed;
  return e;
}

rollouts::RolloutContext TrainedRun::context() const {
  rollouts::RolloutContext ctx;
  ctx.model = &model;
  ctx.params = &params;
  ctx.latent = &latent;
  ctx.env = env_config();
  ctx.start_pool = states;
  return ctx;
}

Checkpoint make_checkpoint(const RunConfig& cfg, const training::FitResult& fit) {
  Checkpoint c;
  c.meta["format"] = kFormat;
  // output location and thread count never change the numbers
  for (const auto& [key, value] : resolved_map(cfg))
    if (key != "output.dir" && key != "run.workers") c.meta["config." + key] = value;
  c.arrays.merge("rssm/", fit.params);
  c.arrays.merge("latent/", fit.latent.params());
  c.arrays.merge("physical/", fit.physical.params());
  c.arrays.add("buffer/states", stack_states(fit.buffer.all_states(), fit.buffer.dynamics().state_dim()));
  return c;
}

TrainedRun restore_run(const Checkpoint& ckpt) {
  auto fmt = ckpt.meta.find("format");
  if (fmt == ckpt.meta.end() || fmt->second != kFormat) throw IoError("checkpoint is not a wmd run (format mismatch)");
  RunConfig cfg;
  std::vector<std::pair<std::string, std::string>> settings;
  for (const auto& [key, value] : ckpt.meta)
    if (key.starts_with("config.")) settings.emplace_back(key.substr(7), value);
  apply_settings(cfg, settings, "checkpoint");
  cfg.validate();

  env::EnvConfig e = cfg.fit.env;
  e.seed = cfg.seed;
  const auto dyn = env::make_dynamics(e);
  rssm::Rssm model(training::bind_to_env(cfg.fit.model, *dyn, e.obs_dim));
  const auto& mc = model.config();
  Rng unused(0);
  auto latent = ensemble::make_latent_ensemble(cfg.fit.ensemble, mc.deter, mc.latent_dim(), mc.action_dim, unused);
  auto physical = ensemble::make_physical_ensemble(cfg.fit.ensemble, *dyn, unused);
  try {
    latent.set_params(ckpt.arrays.extract("latent/"));
    physical.set_params(ckpt.arrays.extract("physical/"));
  } catch (const std::exception& ex) {
    throw IoError(std::string("checkpoint ensembles do not match the configuration: ") + ex.what());
  }
  ParameterSet params = ckpt.arrays.extract("rssm/");
  Rng probe(0);
  if (!params.same_layout(model.init_params(probe)))
    throw IoError("checkpoint model parameters do not match the configuration");
  if (!ckpt.arrays.contains("buffer/states")) throw IoError("checkpoint lacks replay states");
  const Matrix& sm = ckpt.arrays.at("buffer/states");
  std::vector<env::PhysicalState> states;
  for (Eigen::Index r = 0; r < sm.rows(); ++r) states.push_back(sm.row(r).transpose());
  return TrainedRun{cfg, std::move(model), std::move(params), std::move(latent), std::move(physical),
                    std::move(states)};
}

// ---- train ----

TrainArtifacts cmd_train(const RunConfig& cfg, std::ostream& progress) {
  cfg.validate();
  ensure_dir(cfg.output_dir);
  training::FitConfig fc = cfg.fit;
  fc.seed = cfg.seed;
  progress << "training " << env::to_string(fc.env.id) << '/' << rssm::to_string(fc.model.variant) << " seed "
           << cfg.seed << " for " << fc.train.env_steps << " environment steps\n";
  const auto result = training::fit(fc, [&](const training::LogRow& row) {
    if (row.step % 500 == 0) progress << "  step " << row.step << " elbo " << row.terms.total << '\n';
  });

  TrainArtifacts a;
  a.resolved_config = write_file(cfg.output_dir / "config.resolved.ini", [&](std::ostream& o) {
    write_resolved(o, cfg);
  });
  a.log = write_file(cfg.output_dir / "training_log.csv", [&](std::ostream& o) {
    training::write_training_log(o, result.log);
  });
  a.checkpoint = cfg.output_dir / "checkpoint.wmd";
  save_checkpoint(a.checkpoint, make_checkpoint(cfg, result));
  progress << "wrote " << a.checkpoint.string() << '\n';
  return a;
}

// ---- diagnose ----

DiagnoseMode parse_mode(std::string_view name) {
  if (name == "discrepancy") return DiagnoseMode::discrepancy;
  if (name == "reward") return DiagnoseMode::reward;
  if (name == "attractor-map") return DiagnoseMode::attractor_map;
  if (name == "uncertainty") return DiagnoseMode::uncertainty;
  throw ConfigError("unknown mode '" + std::string(name) + "' (discrepancy, reward, attractor-map, uncertainty)");
}

std::string to_string(DiagnoseMode mode) {
  switch (mode) {
    case DiagnoseMode::discrepancy: return "discrepancy";
    case DiagnoseMode::reward: return "reward";
    case DiagnoseMode::attractor_map: return "attractor-map";
    case DiagnoseMode::uncertainty: return "uncertainty";
  }
  return "?";
}

std::vector<fs::path> cmd_diagnose(const DiagnoseOptions& opts, std::ostream& progress) {
  const TrainedRun run = restore_run(load_checkpoint(opts.checkpoint));
  const RunConfig& cfg = run.config;
  const int count = opts.count.value_or(cfg.rollout_count);
  const int workers = opts.workers.value_or(cfg.workers);
  if (count < 1) throw ConfigError("--count must be >= 1");
  if (workers < 1) throw ConfigError("--workers must be >= 1");
  const fs::path out_dir = opts.out.empty() ? cfg.output_dir : opts.out;
  ensure_dir(out_dir);

  rollouts::RolloutContext ctx = run.context();
  const auto dyn = env::make_dynamics(ctx.env);
  rollouts::RolloutSpec base = cfg.rollout;
  base.start = rollouts::StartSpec::parse(opts.start);
  base.seed = opts.seed.value_or(Rng::mix(cfg.seed, kDiagnoseStream));
  {
    // unknown OOD names fail before any rollout
    Rng probe(0);
    if (base.start.type == rollouts::StartSpec::Type::ood) rollouts::resolve_start(ctx, *dyn, base.start, probe);
  }
  if (base.start.type == rollouts::StartSpec::Type::id) {
    progress << "selecting ID state among " << run.states.size() << " stored states\n";
    ctx.id_state = diagnostics::select_id_state(*dyn, run.states, cfg.diagnostics.knn);
  }

  const std::string prefix = env::to_string(ctx.env.id) + "_" + rssm::to_string(run.model.config().variant) + "_" +
                             to_string(opts.mode) + "_" + base.start.to_string();
  std::vector<fs::path> written;
  auto emit = [&](const std::string& suffix, const std::string& ext, auto&& body) {
    written.push_back(write_file(out_dir / (prefix + (suffix.empty() ? "" : "_" + suffix) + "." + ext), body));
  };

  std::map<rollouts::RolloutKind, std::vector<rollouts::LatentTrajectory>> batches;
  auto batch = [&](rollouts::RolloutKind kind) -> const std::vector<rollouts::LatentTrajectory>& {
    auto it = batches.find(kind);
    if (it != batches.end()) return it->second;
    rollouts::RolloutSpec spec = base;
    spec.kind = kind;
    progress << "running " << count << ' ' << rollouts::to_string(kind) << " rollouts from " << opts.start << '\n';
    auto trajs = rollouts::batch_rollouts(ctx, spec, static_cast<std::size_t>(count), workers);
    emit(rollouts::to_string(kind) + "_trajectories", "csv",
         [&](std::ostream& o) { rollouts::write_trajectories_csv(o, trajs); });
    return batches.emplace(kind, std::move(trajs)).first->second;
  };
  auto summarize = [](const Matrix& m) {
    std::vector<std::vector<double>> runs;
    for (Eigen::Index r = 0; r < m.rows(); ++r) runs.emplace_back(m.row(r).data(), m.row(r).data() + m.cols());
    return diagnostics::aggregate_traces(runs);
  };
  auto emit_traces = [&](rollouts::RolloutKind kind) {
    const auto traces = diagnostics::collect_traces(batch(kind), ctx.env, workers);
    emit(rollouts::to_string(kind), "csv", [&](std::ostream& o) {
      diagnostics::write_trace_csv(o, summarize(traces.physical), summarize(traces.reward),
                                   summarize(traces.uncertainty));
    });
  };

  switch (opts.mode) {
    case DiagnoseMode::discrepancy:
      for (auto k : {rollouts::RolloutKind::prior, rollouts::RolloutKind::posterior,
                     rollouts::RolloutKind::posterior_informed})
        emit_traces(k);
      break;
    case DiagnoseMode::reward:
      for (auto k : {rollouts::RolloutKind::prior, rollouts::RolloutKind::posterior}) emit_traces(k);
      break;
    case DiagnoseMode::uncertainty: {
      emit_traces(rollouts::RolloutKind::prior);
      const auto& prior = batch(rollouts::RolloutKind::prior);
      const auto latent = diagnostics::collect_traces(prior, ctx.env, workers).uncertainty;
      const auto pe = diagnostics::pe_uncertainty(run.physical, *dyn, prior, workers);
      const auto lm = diagnostics::column_medians(latent), pm = diagnostics::column_medians(pe);
      emit("median", "csv", [&](std::ostream& o) {
        o << "t,latent_gjs_median,pe_gjs_median\n";
        for (std::size_t t = 0; t < lm.size(); ++t) {
          auto f = [](double v) {
            std::ostringstream s;
            s.precision(9);
            if (std::isnan(v)) s << "nan"; else s << v;
            return s.str();
          };
          o << t << ',' << f(lm[t]) << ',' << f(pm[t]) << '\n';
        }
      });
      break;
    }
    case DiagnoseMode::attractor_map: {
      const auto& prior = batch(rollouts::RolloutKind::prior);
      const auto& post = batch(rollouts::RolloutKind::posterior);
      std::vector<rollouts::LatentTrajectory> pool;
      if (cfg.diagnostics.field_kinds != "posterior") pool.insert(pool.end(), prior.begin(), prior.end());
      if (cfg.diagnostics.field_kinds != "prior") pool.insert(pool.end(), post.begin(), post.end());
      if (pool.size() < 3) throw ConfigError("attractor-map needs at least 3 rollouts; raise --count");
      const auto emb = diagnostics::fit_embedding(pool);
      const auto field = diagnostics::build_vector_field(emb, pool, cfg.diagnostics.bins, cfg.diagnostics.bins);

      std::vector<diagnostics::Overlay> overlays;
      const int ex = std::min<int>(cfg.diagnostics.exemplars, static_cast<int>(post.size()));
      for (int i = 0; i < ex; ++i)
        overlays.push_back({"posterior-" + std::to_string(i), "#1f77b4",
                            emb.project_rows(diagnostics::feature_rows(std::span(&post[i], 1)))});
      for (int i = 0; i < ex; ++i)
        overlays.push_back({"prior-" + std::to_string(i), "#d62728",
                            emb.project_rows(diagnostics::feature_rows(std::span(&prior[i], 1)))});
      emit("", "svg", [&](std::ostream& o) { diagnostics::write_vector_field_svg(o, field, overlays); });
      emit("field", "csv", [&](std::ostream& o) { diagnostics::write_vector_field_csv(o, field); });

      // reference: posterior rollouts from training-distribution starts
      rollouts::RolloutSpec ref_spec = base;
      ref_spec.kind = rollouts::RolloutKind::posterior;
      ref_spec.start = rollouts::StartSpec{};
      ref_spec.seed = Rng::mix(base.seed, 1);
      const auto reference_trajs = rollouts::batch_rollouts(ctx, ref_spec, static_cast<std::size_t>(count), workers);
      const auto reference = diagnostics::build_reference(emb, reference_trajs);
      Matrix dist(static_cast<Eigen::Index>(prior.size()), cfg.rollout.horizon);
      for (std::size_t i = 0; i < prior.size(); ++i) {
        const auto d = diagnostics::attractor_distance(emb, prior[i], reference);
        for (std::size_t t = 0; t < d.size(); ++t) dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = d[t];
      }
      const auto med = diagnostics::column_medians(dist);
      emit("attractor", "csv", [&](std::ostream& o) {
        o << "t,prior_distance_median\n";
        o.precision(9);
        for (std::size_t t = 0; t < med.size(); ++t) o << t << ',' << med[t] << '\n';
      });
      break;
    }
  }
  for (const auto& p : written) progress << "wrote " << p.string() << '\n';
  return written;
}

// ---- entry point ----

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"World-model training and uncertainty diagnostics on toy control tasks", "wmd"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string out_dir;
  auto* train = app.add_subcommand("train", "Fit a world model and its ensembles");
  train->add_option("--config", config_path, "INI run configuration")->required();
  train->add_option("--seed", seed, "Master seed (overrides run.seed)");
  train->add_option("--workers", workers, "Worker threads (overrides run.workers)");
  train->add_option("--out", out_dir, "Output directory (overrides output.dir)");

  DiagnoseOptions dopts;
  std::string mode = "discrepancy";
  std::string dconfig;
  auto* diag = app.add_subcommand("diagnose", "Roll out a trained model and write diagnostics");
  diag->add_option("--checkpoint", dopts.checkpoint, "checkpoint.wmd written by train")->required();
  diag->add_option("--mode", mode, "discrepancy | reward | attractor-map | uncertainty");
  diag->add_option("--start", dopts.start, "random | id | ood:<name>");
  diag->add_option("--count", dopts.count, "Rollouts per kind (default rollout.count)");
  diag->add_option("--workers", dopts.workers, "Worker threads");
  diag->add_option("--seed", dopts.seed, "Rollout seed");
  diag->add_option("--out", dopts.out, "Output directory");

  GradcheckOptions gopts;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every training loss");
  gc->add_option("--inject-bug", gopts.inject_bug, "Perturb the analytic gradient of this loss");
  gc->add_option("--deter", gopts.deter);
  gc->add_option("--hidden", gopts.hidden);
  gc->add_option("--stoch", gopts.stoch);
  gc->add_option("--batch", gopts.batch);
  gc->add_option("--length", gopts.length);
  gc->add_option("--tolerance", gopts.tolerance);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) {
      RunConfig cfg = load_run_config(config_path);
      if (seed) cfg.seed = *seed;
      if (workers) cfg.workers = *workers;
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      cfg.validate();
      cmd_train(cfg, out);
    } else if (*diag) {
      dopts.mode = parse_mode(mode);
      cmd_diagnose(dopts, out);
    } else if (*gc) {
      const auto results = run_gradcheck_suite(gopts);
      write_gradcheck_report(out, results);
      for (const auto& r : results)
        if (!r.passed) {
          err << "gradient check failed: " << r.loss << '\n';
          return kExitFailure;
        }
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const NumericError& e) {
    err << "numeric failure at step " << e.step() << ": " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace wmd::cli
