#include "doctest.h"

#include <cmath>
#include <sstream>

#include "hgode/errors.hpp"
#include "hgode/ode.hpp"
#include "oracles.hpp"

using namespace hgode;

namespace {

OdeField decay() {
  return [](double, const Vector& y) -> Vector { return -y; };
}

Vector scalar(double v) { return Vector::Constant(1, v); }

}  // namespace

TEST_CASE("dopri5 on exponential decay") {
  SolverConfig c;
  const auto tr = integrate_dopri5(decay(), scalar(1.0), 0.0, 1.0, c);
  CHECK(tr.final_state()[0] == doctest::Approx(std::exp(-1.0)).epsilon(0).scale(1).epsilon(1e-5));
  CHECK(std::abs(tr.final_state()[0] - 0.3678794) <= 1e-5);
  CHECK(tr.times.size() == tr.states.size());
  CHECK(tr.max_accepted_error <= 1.0);
}

TEST_CASE("dopri5 zero field keeps state") {
  const OdeField zero = [](double, const Vector& y) -> Vector { return Vector::Zero(y.size()); };
  Vector y0(3);
  y0 << 1.5, -2, 0.25;
  const auto tr = integrate_dopri5(zero, y0, 0.0, 5.0, SolverConfig{}, {0, 1, 2.5, 5});
  for (const auto& s : tr.states) CHECK((s - y0).norm() == 0.0);
}

TEST_CASE("dopri5 linear consensus matches matrix exponential") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Matrix p = oracle::random_irreducible(5, seed);
    const Matrix l = Matrix::Identity(5, 5) - p;
    const OdeField f = [l](double, const Vector& y) -> Vector { return -l * y; };
    Vector x0(5);
    x0 << 1, -2, 0.5, 3, -1;
    SolverConfig c;
    c.rtol = 1e-10;
    c.atol = 1e-12;
    const std::vector<double> at{0.5, 1, 2, 4};
    const auto tr = integrate_dopri5(f, x0, 0.0, 4.0, c, at);
    REQUIRE(tr.states.size() == at.size());
    for (std::size_t k = 0; k < at.size(); ++k) {
      const Vector want = oracle::expm(-at[k] * l) * x0;
      CHECK((tr.states[k] - want).norm() / want.norm() <= 1e-6);
    }
  }
}

TEST_CASE("dopri5 dense output agrees with landing on the point") {
  const OdeField f = [](double t, const Vector& y) -> Vector {
    Vector d(2);
    d << y[1], -y[0] + 0.1 * std::sin(t);
    return d;
  };
  Vector y0(2);
  y0 << 1, 0;
  SolverConfig c;
  c.rtol = 1e-8;
  c.atol = 1e-10;
  const auto dense = integrate_dopri5(f, y0, 0.0, 6.0, c, {0.37, 1.91, 3.3});
  for (std::size_t k = 0; k < dense.times.size(); ++k) {
    const auto direct = integrate_dopri5(f, y0, 0.0, dense.times[k], c);
    CHECK((dense.states[k] - direct.final_state()).norm() <= 10 * c.rtol * (1 + direct.final_state().norm()));
  }
}

TEST_CASE("dopri5 is deterministic") {
  const OdeField f = [](double t, const Vector& y) -> Vector { return Vector::Constant(1, std::cos(t) - y[0] * y[0] * y[0]); };
  const auto a = integrate_dopri5(f, scalar(2.0), 0, 10, SolverConfig{}, {1, 5, 10});
  const auto b = integrate_dopri5(f, scalar(2.0), 0, 10, SolverConfig{}, {1, 5, 10});
  CHECK(a.n_accepted == b.n_accepted);
  for (std::size_t k = 0; k < a.states.size(); ++k) CHECK(a.states[k][0] == b.states[k][0]);
}

TEST_CASE("dopri5 accepted steps respect tolerance; rejected steps shrink h") {
  // Sharp switch forces rejections.
  const OdeField f = [](double, const Vector& y) -> Vector { return Vector::Constant(1, y[0] - y[0] * y[0] * y[0] + 0.5); };
  double last_t = 0.0;
  bool increasing = true;
  const auto tr = integrate_dopri5(f, scalar(-1.0), 0.0, 20.0, SolverConfig{}, {},
                                   [&](double t, const Vector&) {
                                     if (t <= last_t) increasing = false;
                                     last_t = t;
                                   });
  CHECK(increasing);
  CHECK(tr.max_accepted_error <= 1.0);
  CHECK(tr.final_state()[0] > 1.0);
}

TEST_CASE("dopri5 errors") {
  SolverConfig c;
  c.max_steps = 3;
  CHECK_THROWS_AS(integrate_dopri5(decay(), scalar(1.0), 0, 100, c), MaxStepsExceeded);
  SolverConfig u;
  u.h_min = 1e-3;
  u.h_init = 1e-3;
  const OdeField blow = [](double, const Vector& y) -> Vector { return Vector::Constant(1, 1e6 * std::sin(1e6 * y[0])); };
  CHECK_THROWS_AS(integrate_dopri5(blow, scalar(0.3), 0, 1, u), StepUnderflow);
  SolverConfig bad;
  bad.rtol = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  SolverConfig order;
  order.h_init = 100;
  CHECK_THROWS_AS(order.validate(), InvalidArgument);
}

TEST_CASE("fixed-step integrators") {
  const auto e = integrate_fixed(decay(), scalar(1.0), 0, 1, 1, FixedMethod::euler);
  CHECK(e.final_state()[0] == 0.0);
  CHECK(e.n_evals == 1);
  const auto r = integrate_fixed(decay(), scalar(1.0), 0, 1, 100, FixedMethod::rk4);
  CHECK(std::abs(r.final_state()[0] - std::exp(-1.0)) <= 1e-8);
  CHECK(r.n_evals == 400);
  CHECK(r.states.size() == 101);
  const OdeField one = [](double, const Vector& y) -> Vector { return Vector::Ones(y.size()); };
  for (auto m : {FixedMethod::euler, FixedMethod::rk4}) {
    const auto c = integrate_fixed(one, scalar(2.0), 1.0, 4.0, 7, m);
    CHECK(c.final_state()[0] == doctest::Approx(5.0).epsilon(1e-14));
  }
}

TEST_CASE("rk4 fourth-order convergence") {
  for (double t1 : {1.0, 2.0, 3.0}) {
    const double exact = std::exp(-t1);
    const double e1 = std::abs(integrate_fixed(decay(), scalar(1.0), 0, t1, 10, FixedMethod::rk4).final_state()[0] - exact);
    const double e2 = std::abs(integrate_fixed(decay(), scalar(1.0), 0, t1, 20, FixedMethod::rk4).final_state()[0] - exact);
    const double ratio = e1 / e2;
    CHECK(ratio >= 12.0);
    CHECK(ratio <= 20.0);
  }
}

TEST_CASE("state layout and trajectory csv") {
  StateLayout l;
  l.add("H", 2).add("U", 1);
  CHECK(l.size() == 3);
  CHECK(l.find("U").offset == 2);
  CHECK_THROWS(l.find("X"));
  Trajectory tr;
  tr.times = {0.0, 1.0};
  tr.states = {Vector::Zero(3), Vector::Ones(3)};
  std::ostringstream os;
  write_trajectory_csv(os, tr, l);
  const std::string s = os.str();
  CHECK(s.substr(0, s.find('\n')) == "t,H_0,H_1,U_0");
}
