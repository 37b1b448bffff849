#include "hgode/ode.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "hgode/errors.hpp"

namespace hgode {

StateLayout& StateLayout::add(std::string name, Eigen::Index length) {
  if (length < 0) throw InvalidArgument("segment length must be nonnegative");
  for (const Segment& s : segments_) {
    if (s.name == name) throw InvalidArgument("duplicate segment name " + name);
  }
  segments_.push_back({std::move(name), size_, length});
  size_ += length;
  return *this;
}

const Segment& StateLayout::find(const std::string& name) const {
  for (const Segment& s : segments_) {
    if (s.name == name) return s;
  }
  throw InvalidArgument("no segment named " + name);
}

void SolverConfig::validate() const {
  if (!(rtol > 0.0) || !(atol > 0.0)) throw InvalidArgument("rtol and atol must be positive");
  if (!(h_min > 0.0) || !(h_min <= h_init) || !(h_init <= h_max)) {
    throw InvalidArgument("step bounds must satisfy 0 < h_min <= h_init <= h_max");
  }
  if (max_steps < 1) throw InvalidArgument("max_steps must be positive");
}

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                 a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                 a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
                 b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;
// Fifth minus fourth order weights.
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                 e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
// Dense output.
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

constexpr double kSafety = 0.9;
constexpr double kBeta = 0.04;
constexpr double kAlpha = 0.2 - 0.75 * kBeta;
constexpr double kMinFactor = 0.2;
constexpr double kMaxFactor = 5.0;

double error_norm(const Vector& err, const Vector& y, const Vector& y_new, double atol,
                  double rtol) {
  const Eigen::Index n = err.size();
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double scale = atol + rtol * std::max(std::abs(y[i]), std::abs(y_new[i]));
    const double r = err[i] / scale;
    sum += r * r;
  }
  return std::sqrt(sum / static_cast<double>(n));
}

void check_save_points(const std::vector<double>& save_at, double t0, double t1) {
  for (std::size_t k = 0; k < save_at.size(); ++k) {
    if (!(save_at[k] >= t0 && save_at[k] <= t1)) {
      throw InvalidArgument("save point outside the integration interval");
    }
    if (k > 0 && !(save_at[k] > save_at[k - 1])) {
      throw InvalidArgument("save points must be strictly ascending");
    }
  }
}

}  // namespace

Trajectory integrate_dopri5(const OdeField& field, const Vector& y0, double t0, double t1,
                            const SolverConfig& config, const std::vector<double>& save_at,
                            const StepObserver& observer) {
  config.validate();
  if (!(t1 > t0)) throw InvalidArgument("integration requires t1 > t0");
  const std::vector<double> points = save_at.empty() ? std::vector<double>{t0, t1} : save_at;
  check_save_points(points, t0, t1);

  Trajectory out;
  std::size_t next = 0;
  while (next < points.size() && points[next] == t0) {
    out.times.push_back(t0);
    out.states.push_back(y0);
    ++next;
  }

  auto eval = [&](double t, const Vector& y) {
    ++out.n_evals;
    return field(t, y);
  };

  double t = t0;
  Vector y = y0;
  Vector k1 = eval(t, y);
  double h = std::min({config.h_init, config.h_max, t1 - t0});
  double err_prev = 1e-4;
  bool last_rejected = false;
  std::int64_t steps = 0;

  while (t < t1) {
    if (steps++ >= config.max_steps) {
      throw MaxStepsExceeded("dopri5 exceeded " + std::to_string(config.max_steps) +
                             " steps at t = " + std::to_string(t));
    }
    bool final_step = false;
    if (t + h >= t1) {
      h = t1 - t;
      final_step = true;
    }

    const Vector k2 = eval(t + c2 * h, y + h * (a21 * k1));
    const Vector k3 = eval(t + c3 * h, y + h * (a31 * k1 + a32 * k2));
    const Vector k4 = eval(t + c4 * h, y + h * (a41 * k1 + a42 * k2 + a43 * k3));
    const Vector k5 = eval(t + c5 * h, y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    const Vector k6 =
        eval(t + h, y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    const Vector y_new = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const double t_new = final_step ? t1 : t + h;
    const Vector k7 = eval(t_new, y_new);

    const Vector err_vec = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double err = error_norm(err_vec, y, y_new, config.atol, config.rtol);
    if (!std::isfinite(err)) err = 1e10;

    if (err <= 1.0) {
      ++out.n_accepted;
      out.max_accepted_error = std::max(out.max_accepted_error, err);

      if (next < points.size() && points[next] <= t_new) {
        const Vector ydiff = y_new - y;
        const Vector bspl = h * k1 - ydiff;
        const Vector r4 = ydiff - h * k7 - bspl;
        const Vector r5 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
        while (next < points.size() && points[next] <= t_new) {
          const double s = points[next];
          out.times.push_back(s);
          if (s == t_new) {
            out.states.push_back(y_new);
          } else {
            const double theta = (s - t) / h;
            const double theta1 = 1.0 - theta;
            out.states.push_back(y + theta * (ydiff + theta1 * (bspl + theta * (r4 + theta1 * r5))));
          }
          ++next;
        }
      }

      t = t_new;
      y = y_new;
      k1 = k7;
      if (observer) observer(t, y);

      double factor = kSafety * std::pow(std::max(err, 1e-10), -kAlpha) * std::pow(err_prev, kBeta);
      factor = std::clamp(factor, kMinFactor, kMaxFactor);
      if (last_rejected) factor = std::min(factor, 1.0);
      h = std::min(h * factor, config.h_max);
      err_prev = std::max(err, 1e-4);
      last_rejected = false;
    } else {
      ++out.n_rejected;
      const double factor = std::max(kMinFactor, kSafety * std::pow(err, -kAlpha));
      h *= factor;
      last_rejected = true;
      if (h < config.h_min || t + h == t) {
        throw StepUnderflow("dopri5 step size " + std::to_string(h) +
                            " fell below h_min at t = " + std::to_string(t));
      }
    }
  }
  return out;
}

Vector euler_step(const OdeField& field, double t, const Vector& y, double h) {
  return y + h * field(t, y);
}

Vector rk4_step(const OdeField& field, double t, const Vector& y, double h) {
  const Vector k1 = field(t, y);
  const Vector k2 = field(t + 0.5 * h, y + (0.5 * h) * k1);
  const Vector k3 = field(t + 0.5 * h, y + (0.5 * h) * k2);
  const Vector k4 = field(t + h, y + h * k3);
  return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Trajectory integrate_fixed(const OdeField& field, const Vector& y0, double t0, double t1,
                           int n_steps, FixedMethod method) {
  if (n_steps < 1) throw InvalidArgument("n_steps must be at least 1");
  if (!(t1 > t0)) throw InvalidArgument("integration requires t1 > t0");
  const double h = (t1 - t0) / n_steps;
  Trajectory out;
  out.times.reserve(static_cast<std::size_t>(n_steps) + 1);
  out.states.reserve(static_cast<std::size_t>(n_steps) + 1);
  out.times.push_back(t0);
  out.states.push_back(y0);
  Vector y = y0;
  for (int k = 0; k < n_steps; ++k) {
    const double t = t0 + k * h;
    y = method == FixedMethod::euler ? euler_step(field, t, y, h) : rk4_step(field, t, y, h);
    out.times.push_back(k + 1 == n_steps ? t1 : t0 + (k + 1) * h);
    out.states.push_back(y);
  }
  out.n_accepted = n_steps;
  out.n_evals = method == FixedMethod::euler ? n_steps : 4LL * n_steps;
  return out;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory,
                          const StateLayout& layout) {
  out << 't';
  for (const Segment& s : layout.segments()) {
    for (Eigen::Index i = 0; i < s.length; ++i) out << ',' << s.name << '_' << i;
  }
  out << '\n';
  const auto precision = out.precision(17);
  for (std::size_t k = 0; k < trajectory.times.size(); ++k) {
    out << trajectory.times[k];
    const Vector& y = trajectory.states[k];
    if (y.size() != layout.size()) throw InvalidArgument("state size does not match layout");
    for (Eigen::Index i = 0; i < y.size(); ++i) out << ',' << y[i];
    out << '\n';
  }
  out.precision(precision);
}

}  // namespace hgode
