#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hgode {

using Vector = Eigen::VectorXd;

struct Segment {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index length = 0;
};

// Named blocks of a flat state vector, e.g. "H" then "U".
class StateLayout {
 public:
  StateLayout() = default;

  StateLayout& add(std::string name, Eigen::Index length);
  const std::vector<Segment>& segments() const noexcept { return segments_; }
  Eigen::Index size() const noexcept { return size_; }
  const Segment& find(const std::string& name) const;

 private:
  std::vector<Segment> segments_;
  Eigen::Index size_ = 0;
};

// Right-hand side dy/dt = f(t, y). Must be a pure function of its arguments.
using OdeField = std::function<Vector(double, const Vector&)>;

// Called after every accepted step with (t, y).
using StepObserver = std::function<void(double, const Vector&)>;

struct SolverConfig {
  double rtol = 1e-5;
  double atol = 1e-5;
  double h_init = 1e-2;
  double h_min = 1e-10;
  double h_max = 10.0;
  std::int64_t max_steps = 1'000'000;

  // Throws InvalidArgument unless tolerances are positive and
  // h_min <= h_init <= h_max.
  void validate() const;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vector> states;
  std::int64_t n_accepted = 0;
  std::int64_t n_rejected = 0;
  std::int64_t n_evals = 0;
  double max_accepted_error = 0.0;  // largest scaled error norm among accepted steps

  const Vector& final_state() const { return states.back(); }
};

// Dormand-Prince 5(4) with FSAL, PI step control and the standard
// 4th-order dense output. States are reported at `save_at` (ascending, within
// [t0, t1]); an empty `save_at` reports t0 and t1.
Trajectory integrate_dopri5(const OdeField& field, const Vector& y0, double t0, double t1,
                            const SolverConfig& config, const std::vector<double>& save_at = {},
                            const StepObserver& observer = {});

enum class FixedMethod { euler, rk4 };

Vector euler_step(const OdeField& field, double t, const Vector& y, double h);
Vector rk4_step(const OdeField& field, double t, const Vector& y, double h);

// Uniform grid with n_steps steps; reports all n_steps + 1 grid states.
Trajectory integrate_fixed(const OdeField& field, const Vector& y0, double t0, double t1,
                           int n_steps, FixedMethod method);

// Header `t,<segment>_<index>,...`, one row per saved state.
void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory,
                          const StateLayout& layout);

}  // namespace hgode
