#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "hgode/graph.hpp"
#include "hgode/ode.hpp"

namespace hgode {

// max_i x_i - min_i x_i
double diameter(const Vector& x);

// Left Perron vector of an irreducible P by power iteration from the uniform
// vector. Iterates the lazy chain (I + P) / 2, which has the same fixed point
// and cannot oscillate on periodic P.
Vector stationary_distribution(const RowStochasticMatrix& p, double tol = 1e-13,
                               int max_iter = 1'000'000);

// Every row equals pi^T H0.
Matrix consensus_limit(const RowStochasticMatrix& p, const Matrix& h0);

// min over non-Perron eigenvalues of Re(1 - lambda_k).
double spectral_gap(const RowStochasticMatrix& p);

enum class Stability { stable, unstable, semi_stable };
enum class Regime { bistable, monostable, critical };

const char* regime_name(Regime r) noexcept;

struct EquilibriumSet {
  std::vector<double> roots;  // ascending; 1 or 3 entries
  std::vector<Stability> stability;
  Regime regime = Regime::bistable;
};

// Real roots of u^3 - (1 - lambda) u - F = 0 in closed form.
EquilibriumSet cubic_equilibria(double f, double lambda);

struct BifurcationRow {
  double f = 0.0;
  EquilibriumSet equilibria;
};

// F = f_min + k * step for k = 0 .. while F <= f_max (+ half a step).
std::vector<BifurcationRow> bifurcation_scan(double lambda, double f_min, double f_max, double step);

// Midpoint between the last 3-root and first 1-root |F| on the positive side
// of the scan; nullopt if no transition is seen.
std::optional<double> fold_from_scan(const std::vector<BifurcationRow>& rows);

void write_bifurcation_csv(std::ostream& out, const std::vector<BifurcationRow>& rows);

struct SwitchEvent {
  std::size_t index = 0;  // schedule position after the switch
  double f = 0.0;         // midpoint of the bracketing forces
  bool upward = false;    // negative -> positive branch
};

struct HysteresisTrace {
  std::vector<double> f;
  std::vector<double> u;
  std::vector<SwitchEvent> switches;
  std::optional<double> up_switch_f;    // first upward switch
  std::optional<double> down_switch_f;  // first downward switch
};

// Piecewise-linear schedule through the waypoints with spacing `step`.
std::vector<double> sweep_schedule(const std::vector<double>& waypoints, double step);

// Quasi-static sweep: at each scheduled F, relax du/dt = (1 - lambda) u - u^3 + F
// for dwell_time from the previous endpoint.
HysteresisTrace hysteresis_sweep(double lambda, const std::vector<double>& schedule,
                                 double dwell_time, double u0,
                                 const SolverConfig& solver = {1e-9, 1e-9, 1e-2, 1e-12, 1.0, 1'000'000});

// Up-then-down sweep F_start -> F_end -> F_start with n_points per leg.
HysteresisTrace hysteresis_sweep(double lambda, double f_start, double f_end, int n_points,
                                 double dwell_time, double u0);

struct ClusterMetrics {
  double silhouette = 0.0;
  double mean_intra_dist = 0.0;
  double mean_inter_dist = 0.0;
  bool degenerate = false;  // a singleton cluster or a 0/0 point was set to s_i = 0
  std::vector<double> per_point;
};

// Euclidean silhouette plus mean same/different-label pair distances.
ClusterMetrics cluster_metrics(const Matrix& h, const std::vector<int>& labels);

struct Polarization {
  std::optional<double> mean_intra;
  std::optional<double> mean_inter;
};

Polarization potential_polarization(const Vector& u, const CandidatePool& pool,
                                    const std::vector<int>& labels);

// Eigenvalues of I - row_normalize(A, epsilon) with modulus <= tol.
int near_zero_laplacian_count(const Matrix& a, double tol, double epsilon = 1e-3);

struct MarginPolarization {
  bool passed = false;
  double root = 0.0;
  std::vector<double> starts;
  std::vector<double> terminal;
};

// Relaxes du/dt = (1 - lambda) u - u^3 + F from every start and checks that
// all land within tol of the single root, whose sign matches F. Throws
// PreconditionError when |F| does not exceed the fold threshold.
MarginPolarization margin_polarization_check(double f, const std::vector<double>& starts,
                                             double t_end, double lambda = 0.0,
                                             double tol = 1e-4);

// n evenly spaced points over [lo, hi].
std::vector<double> linspace(double lo, double hi, int n);

}  // namespace hgode
