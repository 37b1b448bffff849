#include "hgode/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include <Eigen/Eigenvalues>

#include "hgode/dynamics.hpp"
#include "hgode/errors.hpp"

namespace hgode {

double diameter(const Vector& x) {
  if (x.size() == 0) throw InvalidArgument("diameter of an empty vector");
  return x.maxCoeff() - x.minCoeff();
}

namespace {

void require_irreducible(const RowStochasticMatrix& p) {
  const auto edges = support(p.matrix(), 0.0);
  if (!strong_connectivity(edges, static_cast<int>(p.size())).is_strongly_connected) {
    throw NotIrreducible("transition matrix support is not strongly connected");
  }
}

}  // namespace

Vector stationary_distribution(const RowStochasticMatrix& p, double tol, int max_iter) {
  require_irreducible(p);
  const Eigen::Index n = p.size();
  const Matrix pt = p.matrix().transpose();
  Vector pi = Vector::Constant(n, 1.0 / static_cast<double>(n));
  for (int iter = 0; iter < max_iter; ++iter) {
    const Vector next = pt * pi;
    if ((next - pi).lpNorm<1>() <= tol) return pi;
    pi = 0.5 * (pi + next);
    pi /= pi.sum();
  }
  throw NoConvergence("power iteration did not reach tolerance in " + std::to_string(max_iter) +
                      " iterations");
}

Matrix consensus_limit(const RowStochasticMatrix& p, const Matrix& h0) {
  if (p.size() != h0.rows()) throw InvalidArgument("P and H0 disagree on N");
  const Vector pi = stationary_distribution(p);
  const Eigen::RowVectorXd row = pi.transpose() * h0;
  return Matrix::Ones(h0.rows(), 1) * row;
}

double spectral_gap(const RowStochasticMatrix& p) {
  if (p.size() < 2) throw InvalidArgument("spectral gap needs at least two states");
  Eigen::EigenSolver<Matrix> solver(p.matrix(), false);
  if (solver.info() != Eigen::Success) throw EigenFailure("eigenvalue iteration did not converge");
  const Eigen::VectorXcd ev = solver.eigenvalues();
  Eigen::Index perron = 0;
  double closest = std::abs(ev[0] - 1.0);
  for (Eigen::Index k = 1; k < ev.size(); ++k) {
    const double d = std::abs(ev[k] - 1.0);
    if (d < closest) {
      closest = d;
      perron = k;
    }
  }
  double gap = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < ev.size(); ++k) {
    if (k != perron) gap = std::min(gap, 1.0 - ev[k].real());
  }
  return gap;
}

const char* regime_name(Regime r) noexcept {
  switch (r) {
    case Regime::bistable: return "bistable";
    case Regime::monostable: return "monostable";
    case Regime::critical: return "critical";
  }
  return "unknown";
}

EquilibriumSet cubic_equilibria(double f, double lambda) {
  if (!(lambda >= 0.0 && lambda < 1.0)) throw InvalidArgument("lambda must lie in [0, 1)");
  const double a = 1.0 - lambda;
  const double fc = critical_force(lambda);
  EquilibriumSet out;
  const double excess = std::abs(f) - fc;
  if (std::abs(excess) <= 1e-12) {
    out.regime = Regime::critical;
  } else {
    out.regime = excess < 0.0 ? Regime::bistable : Regime::monostable;
  }

  auto polish = [&](double u) {
    const double d = 3.0 * u * u - a;
    if (std::abs(d) > 1e-8) u -= (u * u * u - a * u - f) / d;
    return u;
  };

  if (out.regime == Regime::monostable) {
    const double disc = std::sqrt(f * f / 4.0 - a * a * a / 27.0);
    out.roots = {polish(std::cbrt(f / 2.0 + disc) + std::cbrt(f / 2.0 - disc))};
    out.stability = {Stability::stable};
    return out;
  }

  const double r = 2.0 * std::sqrt(a / 3.0);
  const double arg = std::clamp(1.5 * f / a * std::sqrt(3.0 / a), -1.0, 1.0);
  const double phi = std::acos(arg) / 3.0;
  for (int k = 0; k < 3; ++k) {
    const double u = r * std::cos(phi - 2.0 * std::numbers::pi * k / 3.0);
    out.roots.push_back(out.regime == Regime::critical ? u : polish(u));
  }
  std::sort(out.roots.begin(), out.roots.end());
  if (out.regime == Regime::critical) {
    // The double root sits on the side opposite to the sign of F.
    const double merged = f > 0.0 ? -std::sqrt(a / 3.0) : std::sqrt(a / 3.0);
    for (double& u : out.roots) {
      if (std::abs(u - merged) < 1e-4) u = merged;
    }
    for (double u : out.roots) {
      out.stability.push_back(u == merged ? Stability::semi_stable : Stability::stable);
    }
    return out;
  }
  out.stability = {Stability::stable, Stability::unstable, Stability::stable};
  return out;
}

std::vector<BifurcationRow> bifurcation_scan(double lambda, double f_min, double f_max, double step) {
  if (!(step > 0.0) || !(f_max >= f_min)) throw InvalidArgument("invalid scan range");
  std::vector<BifurcationRow> rows;
  for (long k = 0;; ++k) {
    const double f = f_min + static_cast<double>(k) * step;
    if (f > f_max + 0.5 * step) break;
    rows.push_back({f, cubic_equilibria(f, lambda)});
  }
  return rows;
}

std::optional<double> fold_from_scan(const std::vector<BifurcationRow>& rows) {
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const auto& prev = rows[k - 1];
    const auto& cur = rows[k];
    if (prev.f >= 0.0 && prev.equilibria.roots.size() == 3 && cur.equilibria.roots.size() == 1) {
      return 0.5 * (prev.f + cur.f);
    }
  }
  return std::nullopt;
}

void write_bifurcation_csv(std::ostream& out, const std::vector<BifurcationRow>& rows) {
  out << "F,n_roots,root1,root2,root3,regime\n";
  const auto precision = out.precision(17);
  for (const auto& row : rows) {
    const auto& r = row.equilibria.roots;
    out << row.f << ',' << r.size();
    for (std::size_t k = 0; k < 3; ++k) {
      out << ',';
      if (k < r.size()) out << r[k];
    }
    out << ',' << regime_name(row.equilibria.regime) << '\n';
  }
  out.precision(precision);
}

std::vector<double> sweep_schedule(const std::vector<double>& waypoints, double step) {
  if (waypoints.empty()) throw InvalidArgument("schedule needs at least one waypoint");
  if (!(step > 0.0)) throw InvalidArgument("schedule step must be positive");
  std::vector<double> out{waypoints.front()};
  for (std::size_t w = 1; w < waypoints.size(); ++w) {
    const double from = waypoints[w - 1];
    const double to = waypoints[w];
    const auto n = static_cast<long>(std::ceil(std::abs(to - from) / step - 1e-9));
    for (long k = 1; k <= n; ++k) out.push_back(from + (to - from) * static_cast<double>(k) / static_cast<double>(n));
  }
  return out;
}

HysteresisTrace hysteresis_sweep(double lambda, const std::vector<double>& schedule,
                                 double dwell_time, double u0, const SolverConfig& solver) {
  if (!(dwell_time > 0.0)) throw InvalidArgument("dwell time must be positive");
  if (!(lambda >= 0.0 && lambda < 1.0)) throw InvalidArgument("lambda must lie in [0, 1)");
  HysteresisTrace trace;
  Vector y(1);
  y[0] = u0;
  for (std::size_t k = 0; k < schedule.size(); ++k) {
    const double f = schedule[k];
    const OdeField field = [lambda, f](double, const Vector& s) -> Vector {
      Vector d(1);
      d[0] = (1.0 - lambda) * s[0] - s[0] * s[0] * s[0] + f;
      return d;
    };
    y = integrate_dopri5(field, y, 0.0, dwell_time, solver).final_state();
    trace.f.push_back(f);
    trace.u.push_back(y[0]);
    if (k > 0) {
      const double before = trace.u[k - 1];
      const double after = y[0];
      if ((before > 0.0) != (after > 0.0)) {
        const SwitchEvent ev{k, 0.5 * (schedule[k - 1] + f), after > 0.0};
        trace.switches.push_back(ev);
        if (ev.upward && !trace.up_switch_f) trace.up_switch_f = ev.f;
        if (!ev.upward && !trace.down_switch_f) trace.down_switch_f = ev.f;
      }
    }
  }
  return trace;
}

HysteresisTrace hysteresis_sweep(double lambda, double f_start, double f_end, int n_points,
                                 double dwell_time, double u0) {
  if (n_points < 2) throw InvalidArgument("sweep needs at least two points per leg");
  std::vector<double> schedule = linspace(f_start, f_end, n_points);
  const std::vector<double> back = linspace(f_end, f_start, n_points);
  schedule.insert(schedule.end(), back.begin() + 1, back.end());
  return hysteresis_sweep(lambda, schedule, dwell_time, u0);
}

ClusterMetrics cluster_metrics(const Matrix& h, const std::vector<int>& labels) {
  const Eigen::Index n = h.rows();
  if (static_cast<Eigen::Index>(labels.size()) != n) throw InvalidArgument("one label per row required");
  if (n == 0) throw InvalidArgument("no points");
  const int k = *std::max_element(labels.begin(), labels.end()) + 1;
  if (*std::min_element(labels.begin(), labels.end()) < 0) throw InvalidArgument("negative label");
  std::vector<int> sizes(static_cast<std::size_t>(k), 0);
  for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
  int nonempty = 0;
  for (int s : sizes) nonempty += s > 0 ? 1 : 0;
  if (nonempty < 2) throw InvalidArgument("silhouette needs at least two nonempty clusters");

  Matrix dist(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    dist(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      dist(i, j) = dist(j, i) = (h.row(i) - h.row(j)).norm();
    }
  }

  ClusterMetrics out;
  out.per_point.resize(static_cast<std::size_t>(n));
  double intra_sum = 0.0, inter_sum = 0.0;
  long intra_n = 0, inter_n = 0;
  std::vector<double> sums(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::fill(sums.begin(), sums.end(), 0.0);
    const int li = labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const int lj = labels[static_cast<std::size_t>(j)];
      sums[static_cast<std::size_t>(lj)] += dist(i, j);
      if (j > i) {
        if (lj == li) {
          intra_sum += dist(i, j);
          ++intra_n;
        } else {
          inter_sum += dist(i, j);
          ++inter_n;
        }
      }
    }
    double s = 0.0;
    if (sizes[static_cast<std::size_t>(li)] < 2) {
      out.degenerate = true;
    } else {
      const double a = sums[static_cast<std::size_t>(li)] / (sizes[static_cast<std::size_t>(li)] - 1);
      double b = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        if (c == li || sizes[static_cast<std::size_t>(c)] == 0) continue;
        b = std::min(b, sums[static_cast<std::size_t>(c)] / sizes[static_cast<std::size_t>(c)]);
      }
      const double denom = std::max(a, b);
      if (denom > 0.0) {
        s = (b - a) / denom;
      } else {
        out.degenerate = true;
      }
    }
    out.per_point[static_cast<std::size_t>(i)] = s;
  }
  double total = 0.0;
  for (double s : out.per_point) total += s;
  out.silhouette = total / static_cast<double>(n);
  out.mean_intra_dist = intra_n > 0 ? intra_sum / static_cast<double>(intra_n) : 0.0;
  out.mean_inter_dist = inter_n > 0 ? inter_sum / static_cast<double>(inter_n) : 0.0;
  return out;
}

Polarization potential_polarization(const Vector& u, const CandidatePool& pool,
                                    const std::vector<int>& labels) {
  if (u.size() != static_cast<Eigen::Index>(pool.size())) throw InvalidArgument("U length does not match pool");
  double intra = 0.0, inter = 0.0;
  long ni = 0, no = 0;
  for (std::size_t k = 0; k < pool.size(); ++k) {
    const Edge& e = pool.pair(k);
    const int a = labels.at(static_cast<std::size_t>(e.src));
    const int b = labels.at(static_cast<std::size_t>(e.dst));
    if (a == b) {
      intra += u[static_cast<Eigen::Index>(k)];
      ++ni;
    } else {
      inter += u[static_cast<Eigen::Index>(k)];
      ++no;
    }
  }
  Polarization out;
  if (ni > 0) out.mean_intra = intra / static_cast<double>(ni);
  if (no > 0) out.mean_inter = inter / static_cast<double>(no);
  return out;
}

int near_zero_laplacian_count(const Matrix& a, double tol, double epsilon) {
  if (!(tol >= 0.0)) throw InvalidArgument("tolerance must be nonnegative");
  const RowStochasticMatrix p = row_normalize(a, epsilon);
  const Matrix l = Matrix::Identity(a.rows(), a.cols()) - p.matrix();
  Eigen::EigenSolver<Matrix> solver(l, false);
  if (solver.info() != Eigen::Success) throw EigenFailure("eigenvalue iteration did not converge");
  int count = 0;
  for (const auto& ev : solver.eigenvalues()) count += std::abs(ev) <= tol ? 1 : 0;
  return count;
}

MarginPolarization margin_polarization_check(double f, const std::vector<double>& starts,
                                             double t_end, double lambda, double tol) {
  const double fc = critical_force(lambda);
  if (!(std::abs(f) > fc)) {
    throw PreconditionError("|F| = " + std::to_string(std::abs(f)) +
                            " does not exceed the fold threshold " + std::to_string(fc));
  }
  if (!(t_end > 0.0)) throw InvalidArgument("t_end must be positive");
  MarginPolarization out;
  out.root = cubic_equilibria(f, lambda).roots.front();
  out.starts = starts;
  out.passed = !starts.empty() && (out.root > 0.0) == (f > 0.0);
  const OdeField field = [lambda, f](double, const Vector& s) -> Vector {
    Vector d(1);
    d[0] = (1.0 - lambda) * s[0] - s[0] * s[0] * s[0] + f;
    return d;
  };
  const SolverConfig solver{1e-10, 1e-10, 1e-3, 1e-14, 1.0, 1'000'000};
  for (double u0 : starts) {
    Vector y(1);
    y[0] = u0;
    const double u = integrate_dopri5(field, y, 0.0, t_end, solver).final_state()[0];
    out.terminal.push_back(u);
    if (!(std::abs(u - out.root) <= tol)) out.passed = false;
  }
  return out;
}

std::vector<double> linspace(double lo, double hi, int n) {
  if (n < 1) throw InvalidArgument("linspace needs at least one point");
  std::vector<double> out(static_cast<std::size_t>(n));
  if (n == 1) {
    out[0] = lo;
    return out;
  }
  for (int k = 0; k < n; ++k) out[static_cast<std::size_t>(k)] = lo + (hi - lo) * k / (n - 1);
  out.back() = hi;
  return out;
}

}  // namespace hgode
