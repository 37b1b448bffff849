#include "hgode/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include <unsupported/Eigen/MatrixFunctions>

#include "hgode/diagnostics.hpp"
#include "hgode/errors.hpp"
#include "hgode/force.hpp"
#include "hgode/rng.hpp"
#include "json.hpp"

namespace hgode {

namespace fs = std::filesystem;
using json = nlohmann::json;

bool RunSummary::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.second; });
}

void RunSummary::aggregate() {
  std::map<std::string, std::vector<double>> values;
  for (const auto& s : seeds) {
    for (const auto& [k, v] : s.metrics) {
      if (std::isfinite(v)) values[k].push_back(v);
    }
  }
  aggregates.clear();
  for (const auto& [k, xs] : values) {
    Aggregate a;
    a.count = static_cast<int>(xs.size());
    for (double x : xs) a.mean += x;
    a.mean /= a.count;
    for (double x : xs) a.std += (x - a.mean) * (x - a.mean);
    a.std = std::sqrt(a.std / a.count);
    aggregates[k] = a;
  }
}

std::string RunSummary::to_json() const {
  json j;
  j["experiment"] = experiment;
  j["config_hash"] = config_hash;
  j["passed"] = passed();
  j["wall_seconds"] = wall_seconds;
  j["solver"] = {{"accepted", solver.accepted}, {"rejected", solver.rejected},
                 {"evaluations", solver.evaluations}};
  j["checks"] = json::object();
  for (const auto& [k, v] : checks) j["checks"][k] = v;
  j["notes"] = json::object();
  for (const auto& [k, v] : notes) j["notes"][k] = v;
  j["aggregate"] = json::object();
  for (const auto& [k, a] : aggregates) j["aggregate"][k] = {{"mean", a.mean}, {"std", a.std}, {"count", a.count}};
  j["per_seed"] = json::array();
  for (const auto& s : seeds) {
    json e;
    e["seed"] = s.seed;
    e["metrics"] = json::object();
    for (const auto& [k, v] : s.metrics) e["metrics"][k] = v;
    if (s.error) e["error"] = *s.error;
    j["per_seed"].push_back(e);
  }
  return j.dump(2);
}

int job_limit() {
  if (const char* env = std::getenv("HGODE_JOBS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Runs job(i) for i in [0, n) on up to job_limit() threads.
template <typename Job>
void parallel_for(std::size_t n, Job&& job) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(job_limit()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) job(i);
    });
  }
  for (auto& t : pool) t.join();
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string cell(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", *v);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

void add_counts(SolverCounts& c, const Trajectory& tr) {
  c.accepted += tr.n_accepted;
  c.rejected += tr.n_rejected;
  c.evaluations += tr.n_evals;
}

struct MetricRow {
  double t = 0.0;
  ClusterMetrics cluster;
  Polarization pol;
};

void write_metric_csv(const fs::path& path, const std::vector<MetricRow>& rows) {
  auto out = open_out(path);
  out << "t,silhouette,intra_dist,inter_dist,mean_intra_U,mean_inter_U\n";
  for (const auto& r : rows) {
    out << cell(r.t) << ',' << cell(r.cluster.silhouette) << ',' << cell(r.cluster.mean_intra_dist) << ','
        << cell(r.cluster.mean_inter_dist) << ',' << cell(r.pol.mean_intra) << ','
        << cell(r.pol.mean_inter) << '\n';
  }
}

// ---------------------------------------------------------------- two-block runs

struct SbmSeedRun {
  SbmSample sample;
  NodeTask task;
  TrainResult trained;
  std::vector<MetricRow> rows;  // HGODE diagnostic trajectory
  Vector u_final;
  int near_zero = 0;
  SolverCounts counts;
};

Matrix seed_features(const ExperimentConfig& c, const std::vector<int>& labels, std::uint64_t seed) {
  FeatureSpec fs{block_means(static_cast<int>(c.sbm.block_sizes.size()), c.features.dim, c.features.separation),
                 c.features.sigma, derive_seed(seed, 12)};
  return init_features(labels, fs);
}

SbmSample seed_graph(const ExperimentConfig& c, std::uint64_t seed) {
  SbmSpec spec = c.sbm;
  spec.seed = derive_seed(seed, 11);
  return sample_sbm(spec);
}

SbmSeedRun run_sbm_seed(const ExperimentConfig& c, std::uint64_t seed) {
  SbmSeedRun run;
  run.sample = seed_graph(c, seed);
  const int n = static_cast<int>(run.sample.labels.size());
  NodeTask& task = run.task;
  task.features = seed_features(c, run.sample.labels, seed);
  task.pool = build_candidate_pool(run.sample.graph, c.pool, derive_seed(seed, 13));
  task.u0 = initial_potentials(task.pool, c.potentials.observed, c.potentials.proposed);
  task.n_classes = static_cast<int>(c.sbm.block_sizes.size());
  task.labels.assign(static_cast<std::size_t>(n), -1);
  CounterRng pick(derive_seed(seed, 14));
  for (int i = 0; i < n; ++i) {
    if (c.train_fraction >= 1.0 || pick.uniform() < c.train_fraction) {
      task.labels[static_cast<std::size_t>(i)] = run.sample.labels[static_cast<std::size_t>(i)];
      task.train_nodes.push_back(i);
    }
  }
  TrainConfig tc = c.train;
  tc.seed = seed;
  run.trained = train(task, c.hgode, tc);

  const double horizon = c.sweep.horizon;
  const OdeField field = make_hgode_field(c.hgode, task.pool, run.trained.force);
  const Trajectory tr = integrate_dopri5(field, pack({task.features, task.u0}), 0.0, horizon, c.solver,
                                         linspace(0.0, horizon, c.sweep.n_save));
  add_counts(run.counts, tr);
  const Eigen::Index m = task.features.cols();
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    const CoupledState s = unpack(tr.states[k], n, m);
    run.rows.push_back({tr.times[k], cluster_metrics(s.h, run.sample.labels),
                        potential_polarization(s.u, task.pool, run.sample.labels)});
  }
  run.u_final = unpack(tr.final_state(), n, m).u;
  run.near_zero = near_zero_laplacian_count(effective_adjacency(run.u_final, task.pool, c.hgode, horizon),
                                            1e-3, c.hgode.epsilon);
  return run;
}

void record_sbm_metrics(SeedRecord& rec, const SbmSeedRun& run, const std::string& prefix) {
  const MetricRow& first = run.rows.front();
  const MetricRow& last = run.rows.back();
  auto& m = rec.metrics;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  m[prefix + "silhouette_0"] = first.cluster.silhouette;
  m[prefix + "silhouette_T"] = last.cluster.silhouette;
  m[prefix + "inter_dist_T"] = last.cluster.mean_inter_dist;
  m[prefix + "intra_dist_T"] = last.cluster.mean_intra_dist;
  m[prefix + "mean_intra_U"] = last.pol.mean_intra.value_or(nan);
  m[prefix + "mean_inter_U"] = last.pol.mean_inter.value_or(nan);
  m[prefix + "near_zero_count"] = run.near_zero;
  const bool polarized = last.pol.mean_intra && last.pol.mean_inter && *last.pol.mean_intra > 0.5 &&
                         *last.pol.mean_inter < -0.5;
  m[prefix + "polarized"] = polarized ? 1.0 : 0.0;
  if (!run.trained.history.empty()) {
    m[prefix + "task_loss_first"] = run.trained.history.front().task;
    m[prefix + "task_loss_last"] = run.trained.history.back().task;
    m[prefix + "margin_loss_first"] = run.trained.history.front().margin;
    m[prefix + "margin_loss_last"] = run.trained.history.back().margin;
  }
}

void write_sbm_files(const fs::path& dir, const SbmSeedRun& run) {
  {
    auto out = open_out(dir / "loss.csv");
    write_loss_csv(out, run.trained.history);
  }
  write_metric_csv(dir / "metrics.csv", run.rows);
  save_force((dir / "force.json").string(), run.trained.force);
  auto out = open_out(dir / "potentials.csv");
  out << "src,dst,same_block,u0,u_final\n";
  for (std::size_t k = 0; k < run.task.pool.size(); ++k) {
    const Edge& e = run.task.pool.pair(k);
    const auto kk = static_cast<Eigen::Index>(k);
    out << e.src << ',' << e.dst << ','
        << (run.sample.labels[static_cast<std::size_t>(e.src)] == run.sample.labels[static_cast<std::size_t>(e.dst)])
        << ',' << cell(run.task.u0[kk]) << ',' << cell(run.u_final[kk]) << '\n';
  }
}

std::string error_text(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    return std::string(error_code_name(err->code())) + ": " + e.what();
  }
  return e.what();
}

// ------------------------------------------------------------- theory checks

struct CheckOutcome {
  bool passed = false;
  std::map<std::string, double> metrics;
  std::string note;
};

RowStochasticMatrix random_irreducible(int n, CounterRng& rng) {
  Matrix a = Matrix::Zero(n, n);
  std::vector<int> cycle(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) cycle[static_cast<std::size_t>(i)] = i;
  rng.shuffle(cycle);
  for (int i = 0; i < n; ++i) {
    a(cycle[static_cast<std::size_t>(i)], cycle[static_cast<std::size_t>((i + 1) % n)]) = rng.uniform(0.2, 1.0);
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j && a(i, j) == 0.0 && rng.bernoulli(0.3)) a(i, j) = rng.uniform(0.2, 1.0);
    }
  }
  return row_normalize(a, 1e-3);
}

CheckOutcome check_fold(double predicted) {
  CheckOutcome out;
  const auto rows = bifurcation_scan(0.0, -1.0, 1.0, 1e-3);
  const auto fold = fold_from_scan(rows);
  if (!fold) {
    out.note = "no fold found in the scan";
    return out;
  }
  out.metrics["fold_F"] = *fold;
  out.metrics["predicted_F"] = predicted;
  bool counts_ok = true;
  for (const auto& r : rows) {
    const double af = std::abs(r.f);
    const std::size_t roots = r.equilibria.roots.size();
    if (af < predicted - 1e-3 && roots != 3) counts_ok = false;
    if (af > predicted + 1e-3 && roots != 1) counts_ok = false;
  }
  out.metrics["root_count_law"] = counts_ok;
  out.passed = std::abs(*fold - predicted) <= 1e-3 && counts_ok;
  if (!out.passed) out.note = "scanned fold " + num(*fold) + " vs predicted " + num(predicted);
  return out;
}

CheckOutcome check_hysteresis(double predicted) {
  CheckOutcome out;
  const auto schedule = sweep_schedule({0.0, 0.6, -0.6, 0.6}, 0.002);
  const HysteresisTrace tr = hysteresis_sweep(0.0, schedule, 20.0, 1.0);
  if (!tr.up_switch_f || !tr.down_switch_f) {
    out.note = "missing switch";
    return out;
  }
  const double up = *tr.up_switch_f, down = *tr.down_switch_f;
  out.metrics["up_switch_F"] = up;
  out.metrics["down_switch_F"] = down;
  out.metrics["loop_width"] = up - down;
  out.passed = std::abs(up - predicted) <= 0.02 * predicted && std::abs(-down - predicted) <= 0.02 * predicted &&
               std::abs((up - down) - 2 * predicted) <= 0.04 * predicted;

  // history dependence inside the band
  const auto inside = sweep_schedule({0.0, 0.3, -0.3, 0.0}, 0.01);
  const auto a = hysteresis_sweep(0.0, inside, 20.0, 1.0);
  const auto b = hysteresis_sweep(0.0, inside, 20.0, -1.0);
  const bool persistent = std::all_of(a.u.begin(), a.u.end(), [](double u) { return u > 0; }) &&
                          std::all_of(b.u.begin(), b.u.end(), [](double u) { return u < 0; });
  out.metrics["bistable_persistence"] = persistent;
  out.passed = out.passed && persistent;
  return out;
}

CheckOutcome check_consensus(std::uint64_t seed, bool reducible) {
  CheckOutcome out;
  CounterRng rng(derive_seed(seed, 301));
  SolverConfig tight{1e-11, 1e-13, 1e-3, 1e-12, 1.0, 1'000'000};
  double worst_residual = 0.0, worst_rate = 0.0, worst_stationarity = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    RowStochasticMatrix p = random_irreducible(10, rng);
    if (reducible && trial == 0) {
      Matrix a = Matrix::Zero(10, 10);
      a.topLeftCorner(5, 5).setOnes();
      a.bottomRightCorner(5, 5).setOnes();
      p = row_normalize(a, 1e-3);
    }
    Matrix h0(10, 3);
    for (Eigen::Index j = 0; j < h0.cols(); ++j)
      for (Eigen::Index i = 0; i < h0.rows(); ++i) h0(i, j) = rng.normal();
    const Vector pi = stationary_distribution(p);
    worst_stationarity = std::max(worst_stationarity, (pi.transpose() * p.matrix() - pi.transpose()).lpNorm<1>());
    const Matrix limit = consensus_limit(p, h0);
    const OdeField field = make_consensus_field(p, 3);
    const Trajectory tr = integrate_dopri5(field, Eigen::Map<const Vector>(h0.data(), h0.size()), 0.0, 60.0, tight);
    const Matrix h60 = Eigen::Map<const Matrix>(tr.final_state().data(), 10, 3);
    worst_residual = std::max(worst_residual, (h60 - limit).norm() / h0.norm());

    // The error E = H - limit obeys the same linear flow; integrating it
    // directly keeps its decay resolved to relative precision. Projecting with
    // (I - 1 pi^T) removes the constant floor left by round-off in pi, so the
    // slope can be fitted over a long stretch where subdominant modes are gone.
    const Matrix e0 = h0 - limit;
    SolverConfig rel{1e-10, 1e-300, 1e-3, 1e-12, 1.0, 1'000'000};
    const std::vector<double> grid = linspace(0.0, 200.0, 801);
    const Trajectory te = integrate_dopri5(field, Eigen::Map<const Vector>(e0.data(), e0.size()), 0.0, 200.0, rel, grid);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int cnt = 0;
    const double e0n = e0.norm();
    for (std::size_t k = 0; k < te.times.size(); ++k) {
      const Matrix ek = Eigen::Map<const Matrix>(te.states[k].data(), 10, 3);
      const Matrix proj = ek - Vector::Ones(10) * (pi.transpose() * ek);
      const double ratio = proj.norm() / e0n;
      if (ratio > 1e-5 || ratio < 1e-25) continue;
      const double y = std::log(proj.norm());
      sx += te.times[k];
      sy += y;
      sxx += te.times[k] * te.times[k];
      sxy += te.times[k] * y;
      ++cnt;
    }
    if (cnt < 5) throw NoConvergence("too few points to fit the decay rate");
    const double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    const double gap = spectral_gap(p);
    worst_rate = std::max(worst_rate, std::abs(-slope - gap) / gap);
  }
  out.metrics["worst_relative_residual"] = worst_residual;
  out.metrics["worst_rate_mismatch"] = worst_rate;
  out.metrics["worst_stationarity_l1"] = worst_stationarity;
  out.passed = worst_residual <= 1e-5 && worst_rate <= 0.10 && worst_stationarity <= 1e-10;
  return out;
}

CheckOutcome check_contraction(std::uint64_t seed) {
  CheckOutcome out;
  CounterRng rng(derive_seed(seed, 302));
  const int n = 8;
  SolverConfig tight{1e-11, 1e-13, 1e-3, 1e-12, 1.0, 1'000'000};
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const double alpha = rng.uniform(0.01, 1.0 / n);
    Vector x(n);
    for (int i = 0; i < n; ++i) x[i] = rng.normal();
    const double d0 = diameter(x);
    double t0 = 0.0;
    for (int seg = 0; seg < 4; ++seg) {
      Matrix r(n, n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) r(i, j) = rng.uniform();
        r.row(i) /= r.row(i).sum();
      }
      const Matrix p = Matrix::Constant(n, n, alpha) + (1.0 - n * alpha) * r;
      const RowStochasticMatrix pm = row_normalize(p, 0.0);
      const double len = rng.uniform(0.5, 2.0);
      const auto grid = linspace(t0, t0 + len, 11);
      const Trajectory tr = integrate_dopri5(make_consensus_field(pm, 1), x, t0, t0 + len, tight, grid);
      for (std::size_t k = 0; k < tr.times.size(); ++k) {
        const double bound = std::exp(-2.0 * alpha * tr.times[k]) * d0;
        worst = std::max(worst, diameter(tr.states[k]) / bound);
      }
      x = tr.final_state();
      t0 += len;
    }
  }
  out.metrics["worst_ratio_to_bound"] = worst;
  out.passed = worst <= 1.0 + 1e-6;
  return out;
}

CheckOutcome check_softmax_bound(std::uint64_t seed) {
  CheckOutcome out;
  CounterRng rng(derive_seed(seed, 303));
  double worst = std::numeric_limits<double>::infinity();
  bool ok = true;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 5 + static_cast<int>(rng.below(20));
    const int m = 1 + static_cast<int>(rng.below(6));
    const double tau = rng.uniform(0.2, 5.0);
    const double scale = rng.uniform(0.1, 2.0);
    Matrix h(n, m);
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index i = 0; i < n; ++i) h(i, j) = scale * rng.normal();
    const double b = h.rowwise().norm().maxCoeff();
    const double bound = std::exp(-2.0 * b * b / tau) / n;
    const double pmin = soft_attention_matrix(h, tau).matrix().minCoeff();
    worst = std::min(worst, pmin / bound);
    if (!(pmin >= bound)) ok = false;
  }
  out.metrics["min_ratio_to_bound"] = worst;
  out.passed = ok;
  return out;
}

CheckOutcome check_margin_polarization() {
  CheckOutcome out;
  out.passed = true;
  const auto grid = linspace(-3.0, 3.0, 25);
  for (double f : {0.5, -0.5, 1.0, -1.0}) {
    const auto r = margin_polarization_check(f, grid, 40.0, 0.0, 1e-3);
    out.metrics["root_F" + num(f)] = r.root;
    out.passed = out.passed && r.passed;
  }
  return out;
}

CheckOutcome check_solver(std::uint64_t seed) {
  CheckOutcome out;
  CounterRng rng(derive_seed(seed, 304));
  const int n = 6;
  Matrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = i == j ? 0.0 : rng.uniform(0.1, 1.0);
  const RowStochasticMatrix p = row_normalize(a, 1e-3);
  const Matrix gen = p.matrix() - Matrix::Identity(n, n);
  Vector x0(n);
  for (int i = 0; i < n; ++i) x0[i] = rng.normal();
  const double t1 = 2.0;
  const Vector exact = (gen * t1).exp() * x0;
  const OdeField field = make_consensus_field(p, 1);
  SolverConfig tight{1e-10, 1e-12, 1e-3, 1e-12, 1.0, 1'000'000};
  const Trajectory tr = integrate_dopri5(field, x0, 0.0, t1, tight);
  const double rel = (tr.final_state() - exact).norm() / exact.norm();
  const double e1 = (integrate_fixed(field, x0, 0.0, t1, 20, FixedMethod::rk4).final_state() - exact).norm();
  const double e2 = (integrate_fixed(field, x0, 0.0, t1, 40, FixedMethod::rk4).final_state() - exact).norm();
  out.metrics["dopri5_relative_error"] = rel;
  out.metrics["rk4_halving_ratio"] = e1 / e2;
  out.passed = rel <= 1e-6 && e1 / e2 >= 12.0 && e1 / e2 <= 20.0;
  return out;
}

}  // namespace

// ------------------------------------------------------------------ runners

RunSummary run_validate_theory(const ExperimentConfig& config) {
  config.validate();
  const auto t0 = Clock::now();
  RunSummary s;
  s.experiment = experiment_name(ExperimentKind::validate_theory);
  s.config_hash = config_hash(config);
  const std::uint64_t seed = config.seeds.front();
  const double fcrit = config.theory.break_fcrit > 0 ? config.theory.break_fcrit : critical_force(0.0);

  SeedRecord rec;
  rec.seed = seed;
  auto run = [&](const std::string& name, auto&& check) {
    try {
      const CheckOutcome o = check();
      s.checks[name] = o.passed;
      for (const auto& [k, v] : o.metrics) rec.metrics[name + "." + k] = v;
      if (!o.note.empty()) s.notes[name] = o.note;
    } catch (const std::exception& e) {
      s.checks[name] = false;
      s.notes[name] = error_text(e);
    }
  };
  run("fold_location", [&] { return check_fold(fcrit); });
  run("hysteresis_loop", [&] { return check_hysteresis(fcrit); });
  run("consensus_trap", [&] { return check_consensus(seed, config.theory.reducible); });
  run("window_contraction", [&] { return check_contraction(seed); });
  run("softmax_lower_bound", [&] { return check_softmax_bound(seed); });
  run("margin_polarization", [] { return check_margin_polarization(); });
  run("solver_accuracy", [&] { return check_solver(seed); });
  s.seeds.push_back(rec);
  s.aggregate();
  s.wall_seconds = seconds_since(t0);

  if (!config.output_dir.empty()) {
    auto out = open_out(fs::path(config.output_dir) / "checks.csv");
    out << "check,passed\n";
    for (const auto& [k, v] : s.checks) out << k << ',' << (v ? "pass" : "fail") << '\n';
    auto bif = open_out(fs::path(config.output_dir) / "bifurcation.csv");
    write_bifurcation_csv(bif, bifurcation_scan(0.0, -1.0, 1.0, 1e-3));
  }
  return s;
}

RunSummary run_hysteresis_trace(const ExperimentConfig& config) {
  config.validate();
  const auto t0 = Clock::now();
  RunSummary s;
  s.experiment = experiment_name(ExperimentKind::hysteresis_trace);
  s.config_hash = config_hash(config);
  const auto& h = config.hysteresis;
  const double fcrit = critical_force(h.lambda);
  const double step = h.step > 0 ? h.step : fcrit / 200.0;
  const auto schedule = sweep_schedule({0.0, h.f_max, -h.f_max, h.f_max}, step);
  // dwell is given in units of the well's own relaxation time 1/(1-lambda)
  const HysteresisTrace tr = hysteresis_sweep(h.lambda, schedule, h.dwell / (1.0 - h.lambda), h.u0);

  SeedRecord rec;
  rec.seed = config.seeds.front();
  rec.metrics["F_crit"] = fcrit;
  rec.metrics["n_switches"] = static_cast<double>(tr.switches.size());
  if (h.f_max < fcrit) {
    s.checks["no_switch_inside_band"] = tr.switches.empty();
    s.notes["switches"] = tr.switches.empty() ? "none" : "unexpected";
  } else if (!tr.up_switch_f || !tr.down_switch_f) {
    s.checks["switch_location"] = false;
    s.notes["switches"] = "missing";
  } else {
    const double up = *tr.up_switch_f, down = *tr.down_switch_f;
    rec.metrics["up_switch_F"] = up;
    rec.metrics["down_switch_F"] = down;
    rec.metrics["loop_width"] = up - down;
    s.checks["switch_location"] =
        std::abs(up - fcrit) <= 0.02 * fcrit && std::abs(-down - fcrit) <= 0.02 * fcrit;
    s.checks["loop_width"] = std::abs((up - down) - 2 * fcrit) <= 0.02 * 2 * fcrit;
    s.notes["switches"] = num(down) + "," + num(up);
  }
  s.seeds.push_back(rec);
  s.aggregate();
  s.wall_seconds = seconds_since(t0);

  if (!config.output_dir.empty()) {
    auto out = open_out(fs::path(config.output_dir) / "hysteresis.csv");
    out << "step,F,u\n";
    for (std::size_t k = 0; k < tr.f.size(); ++k) out << k << ',' << cell(tr.f[k]) << ',' << cell(tr.u[k]) << '\n';
  }
  return s;
}

RunSummary run_sbm_train(const ExperimentConfig& config) {
  config.validate();
  const auto t0 = Clock::now();
  RunSummary s;
  s.experiment = experiment_name(ExperimentKind::sbm_train);
  s.config_hash = config_hash(config);
  s.seeds.resize(config.seeds.size());
  std::vector<SolverCounts> counts(config.seeds.size());

  parallel_for(config.seeds.size(), [&](std::size_t i) {
    SeedRecord& rec = s.seeds[i];
    rec.seed = config.seeds[i];
    try {
      const SbmSeedRun run = run_sbm_seed(config, rec.seed);
      record_sbm_metrics(rec, run, "");
      counts[i] = run.counts;
      if (!config.output_dir.empty()) {
        write_sbm_files(fs::path(config.output_dir) / ("seed_" + std::to_string(rec.seed)), run);
      }
    } catch (const std::exception& e) {
      rec.error = error_text(e);
    }
  });

  int completed = 0, polarized = 0;
  for (std::size_t i = 0; i < s.seeds.size(); ++i) {
    s.solver.accepted += counts[i].accepted;
    s.solver.rejected += counts[i].rejected;
    s.solver.evaluations += counts[i].evaluations;
    if (!s.seeds[i].error) {
      ++completed;
      polarized += s.seeds[i].metrics["polarized"] > 0.5;
    }
  }
  s.checks["all_seeds_completed"] = completed == static_cast<int>(s.seeds.size());
  s.notes["polarized_seeds"] = std::to_string(polarized) + "/" + std::to_string(s.seeds.size());
  s.aggregate();
  s.wall_seconds = seconds_since(t0);
  return s;
}

RunSummary run_monostability_sweep(const ExperimentConfig& config) {
  config.validate();
  const auto t0 = Clock::now();
  RunSummary s;
  s.experiment = experiment_name(ExperimentKind::monostability_sweep);
  s.config_hash = config_hash(config);
  s.seeds.resize(config.seeds.size());
  std::vector<SolverCounts> counts(config.seeds.size());
  const auto& taus = config.sweep.tau_attn;
  const double horizon = config.sweep.horizon;
  const auto grid = linspace(0.0, horizon, config.sweep.n_save);
  // The collapsed SA state sits far below the scale of its own mean, so the
  // tolerance is purely relative.
  SolverConfig sa_solver = config.solver;
  sa_solver.rtol = std::min(config.solver.rtol, 1e-8);
  sa_solver.atol = 1e-300;

  parallel_for(config.seeds.size(), [&](std::size_t i) {
    SeedRecord& rec = s.seeds[i];
    rec.seed = config.seeds[i];
    const fs::path dir = config.output_dir;
    std::vector<MetricRow> hgode_rows;
    try {
      const SbmSeedRun run = run_sbm_seed(config, rec.seed);
      record_sbm_metrics(rec, run, "hgode_");
      counts[i] = run.counts;
      hgode_rows = run.rows;
    } catch (const std::exception& e) {
      rec.error = "hgode: " + error_text(e);
    }
    const SbmSample sample = seed_graph(config, rec.seed);
    const Matrix h0 = seed_features(config, sample.labels, rec.seed);
    const Eigen::Index n = h0.rows(), m = h0.cols();
    for (double tau : taus) {
      const std::string tag = "tau" + num(tau);
      try {
        const Trajectory tr = integrate_dopri5(make_soft_attention_deviation_field(tau, n, m), to_deviation(h0),
                                               0.0, horizon, sa_solver, grid);
        counts[i].accepted += tr.n_accepted;
        counts[i].rejected += tr.n_rejected;
        counts[i].evaluations += tr.n_evals;
        std::vector<MetricRow> rows;
        for (std::size_t k = 0; k < tr.times.size(); ++k) {
          rows.push_back({tr.times[k], cluster_metrics(deviation_part(tr.states[k], n, m), sample.labels), {}});
        }
        rec.metrics["sa_" + tag + "_silhouette_T"] = rows.back().cluster.silhouette;
        rec.metrics["sa_" + tag + "_inter_dist_T"] = rows.back().cluster.mean_inter_dist;
        rec.metrics["sa_" + tag + "_intra_dist_T"] = rows.back().cluster.mean_intra_dist;
        if (!dir.empty()) {
          const std::string suffix = "_" + tag + "_seed" + std::to_string(rec.seed) + ".csv";
          write_metric_csv(dir / ("sa" + suffix), rows);
          if (!hgode_rows.empty()) write_metric_csv(dir / ("hgode" + suffix), hgode_rows);
        }
      } catch (const std::exception& e) {
        rec.error = (rec.error ? *rec.error + "; " : std::string()) + "sa " + tag + ": " + error_text(e);
      }
    }
  });

  for (const auto& c : counts) {
    s.solver.accepted += c.accepted;
    s.solver.rejected += c.rejected;
    s.solver.evaluations += c.evaluations;
  }
  s.aggregate();
  auto mean_of = [&](const std::string& key) -> std::optional<double> {
    auto it = s.aggregates.find(key);
    if (it == s.aggregates.end()) return std::nullopt;
    return it->second.mean;
  };
  bool decreasing = true, hgode_above = true;
  std::optional<double> prev;
  for (double tau : taus) {
    const std::string tag = "tau" + num(tau);
    const auto inter = mean_of("sa_" + tag + "_inter_dist_T");
    const auto sa_sil = mean_of("sa_" + tag + "_silhouette_T");
    const auto hg_sil = mean_of("hgode_silhouette_T");
    if (!inter || (prev && !(*inter < *prev))) decreasing = false;
    prev = inter;
    if (!sa_sil || !hg_sil || *hg_sil < *sa_sil) hgode_above = false;
  }
  s.checks["sa_inter_dist_decreasing_in_tau"] = decreasing;
  s.checks["hgode_silhouette_not_below_sa"] = hgode_above;
  s.wall_seconds = seconds_since(t0);
  return s;
}

RunSummary run_perturbation_bench(const ExperimentConfig& config) {
  config.validate();
  const auto t0 = Clock::now();
  RunSummary s;
  s.experiment = experiment_name(ExperimentKind::perturbation_bench);
  s.config_hash = config_hash(config);
  const auto& b = config.bench;

  struct Job {
    double sigma;
    std::size_t seed_index;
  };
  std::vector<Job> jobs;
  for (double sigma : b.sigmas)
    for (std::size_t i = 0; i < config.seeds.size(); ++i) jobs.push_back({sigma, i});

  std::vector<std::map<std::string, double>> job_metrics(jobs.size());
  std::vector<std::optional<std::string>> job_errors(jobs.size());
  const BenchModel models[] = {BenchModel::mlp, BenchModel::soft_attention, BenchModel::hgode};

  parallel_for(jobs.size(), [&](std::size_t j) {
    const Job& job = jobs[j];
    const std::uint64_t seed = config.seeds[job.seed_index];
    try {
      SbmSpec spec;
      spec.block_sizes = {b.block_size, b.block_size};
      spec.p_in = b.p_in;
      spec.p_out = b.p_out;
      const auto splits = perturbation_dataset(b.n_graphs, spec, b.separation, config.features.dim, {job.sigma},
                                               b.split, derive_seed(seed, 21));
      auto to_tasks = [&](const std::vector<GraphSample>& graphs, std::uint64_t tag) {
        std::vector<NodeTask> tasks;
        for (std::size_t g = 0; g < graphs.size(); ++g) {
          NodeTask t;
          t.features = graphs[g].features;
          t.labels = graphs[g].labels;
          t.train_nodes.resize(graphs[g].labels.size());
          for (std::size_t i = 0; i < t.train_nodes.size(); ++i) t.train_nodes[i] = static_cast<int>(i);
          t.pool = build_candidate_pool(graphs[g].graph, config.pool, derive_seed(seed, tag + g));
          t.u0 = initial_potentials(t.pool, config.potentials.observed, config.potentials.proposed);
          t.n_classes = 2;
          tasks.push_back(std::move(t));
        }
        return tasks;
      };
      const auto train_tasks = to_tasks(splits.front().train, 1'000'000);
      const auto val_tasks = to_tasks(splits.front().validation, 2'000'000);

      BenchOptions opt;
      opt.train = config.train;
      opt.train.epochs = b.epochs;
      opt.train.seed = seed;
      opt.params = config.hgode;
      opt.tau_attn = b.tau_attn;
      opt.mlp_hidden = b.mlp_hidden;
      std::vector<BenchResult> results;
      for (BenchModel model : models) {
        results.push_back(train_bench_model(model, train_tasks, val_tasks, opt));
        job_metrics[j][std::string(bench_model_name(model)) + "_sigma" + num(job.sigma) + "_final"] =
            results.back().validation_accuracy.back();
      }
      if (!config.output_dir.empty()) {
        auto out = open_out(fs::path(config.output_dir) /
                            ("accuracy_sigma" + num(job.sigma) + "_seed" + std::to_string(seed) + ".csv"));
        out << "epoch,mlp,sa_ode,hgode\n";
        for (std::size_t e = 0; e < results.front().validation_accuracy.size(); ++e) {
          out << e;
          for (const auto& r : results) out << ',' << cell(r.validation_accuracy[e]);
          out << '\n';
        }
      }
    } catch (const std::exception& e) {
      job_errors[j] = "sigma " + num(job.sigma) + ": " + error_text(e);
    }
  });

  s.seeds.resize(config.seeds.size());
  for (std::size_t i = 0; i < config.seeds.size(); ++i) s.seeds[i].seed = config.seeds[i];
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    SeedRecord& rec = s.seeds[jobs[j].seed_index];
    for (const auto& [k, v] : job_metrics[j]) rec.metrics[k] = v;
    if (job_errors[j]) rec.error = (rec.error ? *rec.error + "; " : std::string()) + *job_errors[j];
  }
  s.checks["all_runs_completed"] =
      std::none_of(job_errors.begin(), job_errors.end(), [](const auto& e) { return e.has_value(); });
  s.aggregate();
  s.wall_seconds = seconds_since(t0);
  return s;
}

RunSummary run_experiment(const ExperimentConfig& config) {
  RunSummary s;
  switch (config.kind) {
    case ExperimentKind::validate_theory: s = run_validate_theory(config); break;
    case ExperimentKind::monostability_sweep: s = run_monostability_sweep(config); break;
    case ExperimentKind::hysteresis_trace: s = run_hysteresis_trace(config); break;
    case ExperimentKind::sbm_train: s = run_sbm_train(config); break;
    case ExperimentKind::perturbation_bench: s = run_perturbation_bench(config); break;
  }
  if (!config.output_dir.empty()) {
    auto out = open_out(fs::path(config.output_dir) / "summary.json");
    out << s.to_json() << '\n';
    auto cfg = open_out(fs::path(config.output_dir) / "config.ini");
    cfg << serialize_config(config);
  }
  return s;
}

}  // namespace hgode
