// Runs the acceptance criteria at their stated tolerances and prints one line each.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "../unit/oracles.hpp"
#include "hgode/config.hpp"
#include "hgode/diagnostics.hpp"
#include "hgode/dynamics.hpp"
#include "hgode/experiments.hpp"
#include "hgode/force.hpp"
#include "hgode/ode.hpp"
#include "hgode/training.hpp"

#ifndef HGODE_CONFIG_DIR
#define HGODE_CONFIG_DIR "configs"
#endif

using namespace hgode;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

const double kFold = 2.0 / (3.0 * std::sqrt(3.0));

Outcome fold_location() {
  const auto rows = bifurcation_scan(0.0, -1.0, 1.0, 1e-3);
  const auto fold = fold_from_scan(rows);
  if (!fold) return {false, "no transition in scan"};
  // root counts against bisection on the cubic itself
  bool law = true;
  for (const auto& r : rows) {
    const std::size_t want = oracle::cubic_roots_bisect(r.f, 1.0).size();
    if (std::abs(std::abs(r.f) - kFold) > 1e-3 && r.equilibria.roots.size() != want) law = false;
    if (std::abs(r.f) < kFold - 1e-3 && want != 3) law = false;
    if (std::abs(r.f) > kFold + 1e-3 && want != 1) law = false;
  }
  return {std::abs(*fold - kFold) <= 1e-3 && law, fmt("fold |F|=%.6f (closed form %.6f), root-count law ", *fold, kFold) + (law ? "ok" : "broken")};
}

Outcome hysteresis_loop() {
  ExperimentConfig c = parse_config_text("[experiment]\nkind = hysteresis-trace\n");
  c.output_dir = "";
  const auto s = run_hysteresis_trace(c);
  if (!s.aggregates.count("up_switch_F")) return {false, "missing switch"};
  const double up = s.aggregates.at("up_switch_F").mean, down = s.aggregates.at("down_switch_F").mean;
  const bool ok = std::abs(up - kFold) <= 0.02 * kFold && std::abs(-down - kFold) <= 0.02 * kFold &&
                  std::abs((up - down) - 2 * kFold) <= 0.02 * 2 * kFold;
  return {ok, fmt("up %.5f down %.5f width %.5f (2F_crit %.5f)", up, down, up - down, 2 * kFold)};
}

Outcome consensus_trap() {
  const int n = 10, m = 3;
  double worst_res = 0, worst_rate = 0;
  SolverConfig tight{1e-11, 1e-13, 1e-3, 1e-12, 1.0, 1'000'000};
  SolverConfig rel{1e-10, 1e-300, 1e-3, 1e-12, 1.0, 1'000'000};
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix pm = oracle::random_irreducible(n, 7000 + trial, 0.3);
    const RowStochasticMatrix p = row_normalize(pm, 1e-3);
    // stationary vector and gap from a dense eigendecomposition
    Eigen::EigenSolver<Matrix> es(pm.transpose());
    Eigen::Index perron = 0;
    double best = 1e300;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double d = std::abs(es.eigenvalues()[k] - std::complex<double>(1.0, 0.0));
      if (d < best) best = d, perron = k;
    }
    Vector pi = es.eigenvectors().col(perron).real();
    pi /= pi.sum();
    double gap = 1e300;
    for (Eigen::Index k = 0; k < n; ++k)
      if (k != perron) gap = std::min(gap, 1.0 - es.eigenvalues()[k].real());
    CounterRng rng(8000 + trial);
    Matrix h0(n, m);
    for (Eigen::Index k = 0; k < h0.size(); ++k) h0.data()[k] = rng.normal();
    const Matrix limit = Vector::Ones(n) * (pi.transpose() * h0);
    const OdeField field = make_consensus_field(p, m);
    const auto tr = integrate_dopri5(field, h0.reshaped(), 0.0, 60.0, tight);
    const Matrix h60 = tr.final_state().reshaped(n, m);
    worst_res = std::max(worst_res, (h60 - limit).norm() / h0.norm());
    // decay of the deviation, projected off the consensus direction
    const Matrix e0 = h0 - limit;
    const auto te = integrate_dopri5(field, e0.reshaped(), 0.0, 200.0, rel, linspace(0.0, 200.0, 801));
    std::vector<double> xs, ys;
    for (std::size_t k = 0; k < te.times.size(); ++k) {
      const Matrix ek = te.states[k].reshaped(n, m);
      const double r = (ek - Vector::Ones(n) * (pi.transpose() * ek)).norm();
      if (r / e0.norm() > 1e-5 || r / e0.norm() < 1e-25) continue;
      xs.push_back(te.times[k]);
      ys.push_back(std::log(r));
    }
    if (xs.size() < 5) return {false, "decay too fast to fit"};
    double mx = 0, my = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) mx += xs[k], my += ys[k];
    mx /= xs.size(), my /= ys.size();
    double sxy = 0, sxx = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) sxy += (xs[k] - mx) * (ys[k] - my), sxx += (xs[k] - mx) * (xs[k] - mx);
    worst_rate = std::max(worst_rate, std::abs(-sxy / sxx - gap) / gap);
  }
  return {worst_res <= 1e-5 && worst_rate <= 0.10,
          fmt("worst residual %.2e (<= 1e-5), worst rate mismatch %.2f%% (<= 10%%)", worst_res, 100 * worst_rate)};
}

Outcome window_contraction() {
  const int n = 8;
  SolverConfig tight{1e-11, 1e-13, 1e-3, 1e-12, 1.0, 1'000'000};
  double worst = 0;
  CounterRng rng(9000);
  for (int trial = 0; trial < 100; ++trial) {
    const double alpha = rng.uniform(0.01, 1.0 / n);
    Vector x(n);
    for (int i = 0; i < n; ++i) x[i] = rng.normal();
    const double d0 = x.maxCoeff() - x.minCoeff();
    double t0 = 0;
    for (int seg = 0; seg < 5; ++seg) {
      Matrix r(n, n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) r(i, j) = rng.uniform();
        r.row(i) /= r.row(i).sum();
      }
      const Matrix p = Matrix::Constant(n, n, alpha) + (1.0 - n * alpha) * r;
      const double len = rng.uniform(0.3, 2.0);
      const auto tr = integrate_dopri5(make_consensus_field(row_normalize(p, 0.0), 1), x, t0, t0 + len, tight,
                                       linspace(t0, t0 + len, 11));
      for (std::size_t k = 0; k < tr.times.size(); ++k) {
        const Vector& s = tr.states[k];
        worst = std::max(worst, (s.maxCoeff() - s.minCoeff()) / (std::exp(-2 * alpha * tr.times[k]) * d0));
      }
      x = tr.final_state();
      t0 += len;
    }
  }
  return {worst <= 1.0 + 1e-6, fmt("worst diam / bound %.6f (<= 1 + 1e-6)", worst)};
}

Outcome softmax_bound() {
  CounterRng rng(9100);
  double worst = 1e300;
  bool ok = true;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 5 + static_cast<int>(rng.below(30)), m = 1 + static_cast<int>(rng.below(8));
    const double tau = rng.uniform(0.1, 5.0), scale = rng.uniform(0.1, 2.0);
    Matrix h(n, m);
    for (Eigen::Index k = 0; k < h.size(); ++k) h.data()[k] = scale * rng.normal();
    const double b = h.rowwise().norm().maxCoeff();
    const double bound = std::exp(-2 * b * b / tau) / n;
    const double pmin = soft_attention_matrix(h, tau).matrix().minCoeff();
    if (!(pmin >= bound)) ok = false;
    worst = std::min(worst, pmin / bound);
  }
  return {ok, fmt("min P_ij / bound %.4f over 100 matrices", worst)};
}

Outcome margin_polarization() {
  bool ok = true;
  double worst = 0;
  for (double f : {0.5, -0.5, 1.0, -1.0}) {
    const auto r = margin_polarization_check(f, linspace(-3.0, 3.0, 25), 40.0, 0.0, 1e-3);
    const auto roots = oracle::cubic_roots_bisect(f, 1.0);
    if (roots.size() != 1 || !r.passed || (roots[0] > 0) != (f > 0)) ok = false;
    for (double u : r.terminal) worst = std::max(worst, std::abs(u - roots.front()));
  }
  return {ok && worst <= 1e-3, fmt("worst terminal distance to root %.2e (<= 1e-3)", worst)};
}

Outcome solver_correctness() {
  const int n = 6;
  const Matrix pm = oracle::random_irreducible(n, 9200, 0.6);
  const RowStochasticMatrix p = row_normalize(pm, 1e-3);
  const Matrix gen = p.matrix() - Matrix::Identity(n, n);
  CounterRng rng(9201);
  Vector x0(n);
  for (int i = 0; i < n; ++i) x0[i] = rng.normal();
  const Vector exact = oracle::expm(2.0 * gen) * x0;
  const OdeField field = make_consensus_field(p, 1);
  const auto tr = integrate_dopri5(field, x0, 0.0, 2.0, SolverConfig{1e-10, 1e-12, 1e-3, 1e-12, 1.0, 1'000'000});
  const double rel = (tr.final_state() - exact).norm() / exact.norm();
  const double e1 = (integrate_fixed(field, x0, 0.0, 2.0, 20, FixedMethod::rk4).final_state() - exact).norm();
  const double e2 = (integrate_fixed(field, x0, 0.0, 2.0, 40, FixedMethod::rk4).final_state() - exact).norm();
  return {rel <= 1e-6 && e1 / e2 >= 12 && e1 / e2 <= 20,
          fmt("dopri5 rel err %.2e (<= 1e-6), rk4 halving ratio %.2f (in [12, 20])", rel, e1 / e2)};
}

// worst entrywise relative error, denominator floored at 1e-8
double max_rel(const Vector& a, const Vector& b) {
  double worst = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k)
    worst = std::max(worst, std::abs(a[k] - b[k]) / std::max({std::abs(a[k]), std::abs(b[k]), 1e-8}));
  return worst;
}

Outcome gradient_suite() {
  CounterRng rng(9300);
  double worst_force = 0, worst_unroll = 0;
  for (int inst = 0; inst < 50; ++inst) {
    // force field alone
    const int n = 3 + static_cast<int>(rng.below(5)), m = 1 + static_cast<int>(rng.below(4));
    const int hidden = 2 + static_cast<int>(rng.below(8));
    ForceField f = init_force(hidden, m, rng.uniform(1.0, 1.5), 9400 + inst);
    Vector th = f.flatten();
    for (Eigen::Index k = 0; k < th.size(); ++k) th[k] = rng.normal(0.0, 0.7);
    f.assign(th);
    Matrix h(n, m);
    for (Eigen::Index k = 0; k < h.size(); ++k) h.data()[k] = rng.normal();
    const CandidatePool pool = dense_pool(n);
    Vector up(static_cast<Eigen::Index>(pool.size()));
    for (Eigen::Index k = 0; k < up.size(); ++k) up[k] = rng.normal();
    const auto g = force_backward(f, h, pool, up);
    const double step = 1e-4;
    Vector an(th.size() + h.size()), fd(th.size() + h.size());
    an << g.flatten(), g.h.reshaped();
    for (Eigen::Index k = 0; k < th.size(); ++k) {
      ForceField a = f, b = f;
      Vector ta = th, tb = th;
      ta[k] += step, tb[k] -= step;
      a.assign(ta), b.assign(tb);
      fd[k] = (force_eval(a, h, pool).dot(up) - force_eval(b, h, pool).dot(up)) / (2 * step);
    }
    for (Eigen::Index k = 0; k < h.size(); ++k) {
      Matrix a = h, b = h;
      a.data()[k] += step, b.data()[k] -= step;
      fd[th.size() + k] = (force_eval(f, a, pool).dot(up) - force_eval(f, b, pool).dot(up)) / (2 * step);
    }
    worst_force = std::max(worst_force, max_rel(an, fd));

    // whole unroll: features, potentials, readout, margin
    const int nn = 4 + 2 * static_cast<int>(rng.below(2)), mm = 2;
    std::vector<int> labels(nn);
    for (int i = 0; i < nn; ++i) labels[i] = i < nn / 2 ? 0 : 1;
    NodeTask t;
    t.features = Matrix(nn, mm);
    for (int i = 0; i < nn; ++i)
      for (int j = 0; j < mm; ++j) t.features(i, j) = (labels[i] ? -0.5 : 0.5) + 0.3 * rng.normal();
    t.labels = labels;
    for (int i = 0; i < nn; ++i) t.train_nodes.push_back(i);
    t.pool = dense_pool(nn);
    t.u0 = initial_potentials(t.pool, 1.0, 0.0);
    HgodeParams params;
    params.gamma = rng.uniform(0.0, 0.3);
    params.lambda = rng.uniform(0.1, 0.3);
    TrainConfig tc;
    tc.unroll_steps = 2 + static_cast<int>(rng.below(2));
    tc.unroll_method = inst % 2 ? FixedMethod::rk4 : FixedMethod::euler;
    tc.beta = 0.5;
    tc.hidden = 4;
    ForceField ff = init_force(4, mm, 1.0, 9500 + inst);
    Vector tf = ff.flatten();
    for (Eigen::Index k = 0; k < tf.size(); ++k) tf[k] = rng.normal(0.0, 0.6);
    ff.assign(tf);
    Readout r = Readout::zeros(mm, 2);
    for (Eigen::Index k = 0; k < r.w.size(); ++k) r.w.data()[k] = rng.normal(0.0, 0.3);
    const PairSets pairs = build_pair_sets(t.labels, t.pool, 100, inst);
    const auto lg = unroll_loss(t, params, ff, r, tc, pairs);
    const double s2 = 1e-6;
    Vector fd2(tf.size());
    for (Eigen::Index k = 0; k < tf.size(); ++k) {
      ForceField a = ff, b = ff;
      Vector ta = tf, tb = tf;
      ta[k] += s2, tb[k] -= s2;
      a.assign(ta), b.assign(tb);
      fd2[k] = (unroll_loss(t, params, a, r, tc, pairs).loss.total - unroll_loss(t, params, b, r, tc, pairs).loss.total) /
               (2 * s2);
    }
    worst_unroll = std::max(worst_unroll, max_rel(lg.force, fd2));
  }
  return {worst_force <= 1e-4 && worst_unroll <= 1e-3,
          fmt("force field %.2e (<= 1e-4), end-to-end unroll %.2e (<= 1e-3), 50 instances", worst_force, worst_unroll)};
}

// criteria 9 and 11 share one sweep run
RunSummary g_sweep;

Outcome trend_monostability() {
  ExperimentConfig c = parse_config(std::string(HGODE_CONFIG_DIR) + "/monostability.ini");
  c.output_dir = "acceptance_out/monostability";
  g_sweep = run_experiment(c);
  const auto& taus = c.sweep.tau_attn;
  bool mono = true;
  double prev = 1e300, last_sil = 1e300;
  std::string inter;
  for (double tau : taus) {
    char tag[32];
    std::snprintf(tag, sizeof tag, "%g", tau);
    const double d = g_sweep.aggregates.at("sa_tau" + std::string(tag) + "_inter_dist_T").mean;
    inter += (inter.empty() ? "" : ",") + fmt("%.3g", d);
    if (!(d < prev)) mono = false;
    prev = d;
    last_sil = g_sweep.aggregates.at("sa_tau" + std::string(tag) + "_silhouette_T").mean;
  }
  int sil_ok = 0, pol_ok = 0;
  for (const auto& rec : g_sweep.seeds) {
    if (rec.error) continue;
    sil_ok += rec.metrics.at("hgode_silhouette_T") >= 0.8;
    pol_ok += rec.metrics.at("hgode_mean_intra_U") > 0.5 && rec.metrics.at("hgode_mean_inter_U") < -0.5;
  }
  const bool ok = mono && last_sil < 0.1 && sil_ok >= 8 && pol_ok >= 8;
  return {ok, "(a) SA inter dist [" + inter + "] " + (mono ? "decreasing" : "NOT decreasing") +
                  fmt(", SA silhouette at largest tau %.3f (< 0.1); (b) HGODE silhouette >= 0.8 in %g/10; (c) polarized in %g/10",
                      last_sil, sil_ok, pol_ok)};
}

Outcome trend_perturbation() {
  ExperimentConfig c = parse_config(std::string(HGODE_CONFIG_DIR) + "/perturbation.ini");
  c.output_dir = "acceptance_out/perturbation";
  const auto s = run_experiment(c);
  if (!s.checks.at("all_runs_completed")) return {false, "a run failed"};
  const double hg1 = s.aggregates.at("hgode_sigma1_final").mean, sa1 = s.aggregates.at("sa_ode_sigma1_final").mean;
  const double hg01 = s.aggregates.at("hgode_sigma0.1_final").mean, sa01 = s.aggregates.at("sa_ode_sigma0.1_final").mean;
  return {hg1 > sa1 && hg01 > 0.9 && sa01 > 0.9,
          fmt("sigma 1.0: HGODE %.3f vs SA %.3f; sigma 0.1: HGODE %.3f, SA %.3f (> 0.9)", hg1, sa1, hg01, sa01)};
}

Outcome block_detection() {
  if (g_sweep.seeds.empty()) return {false, "sweep did not run"};
  int ok = 0;
  for (const auto& rec : g_sweep.seeds)
    if (!rec.error && rec.metrics.at("hgode_near_zero_count") == 2.0) ++ok;
  return {ok >= 8, fmt("near-zero Laplacian count == 2 in %g/10 seeds", ok)};
}

}  // namespace

int main(int argc, char** argv) {
  // optional: run only the listed criterion numbers
  std::vector<bool> want(12, argc <= 1);
  for (int i = 1; i < argc; ++i) {
    const int k = std::atoi(argv[i]);
    if (k >= 1 && k <= 11) want[static_cast<std::size_t>(k)] = true;
  }
  if (want[11]) want[9] = true;

  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all = {
      {1, "fold location", 1, fold_location},
      {2, "hysteresis loop", 10, hysteresis_loop},
      {3, "consensus trap", 30, consensus_trap},
      {4, "window contraction", 60, window_contraction},
      {5, "softmax lower bound", 5, softmax_bound},
      {6, "margin polarization", 10, margin_polarization},
      {7, "solver correctness", 5, solver_correctness},
      {8, "gradient suite", 60, gradient_suite},
      {9, "monostability trend", 15 * 60, trend_monostability},
      {10, "perturbation trend", 30 * 60, trend_perturbation},
      {11, "block-structure detection", 0, block_detection},
  };
  int failed = 0;
  for (const auto& c : all) {
    if (!want[static_cast<std::size_t>(c.id)]) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.budget_s <= 0 || secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    if (!pass) ++failed;
    std::printf("criterion %2d %-26s %s  %s  [%.1fs%s]\n", c.id, c.name, pass ? "PASS" : "FAIL", o.detail.c_str(), secs,
                in_time ? "" : fmt(" over %gs budget", c.budget_s).c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
