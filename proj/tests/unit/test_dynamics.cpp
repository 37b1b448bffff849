#include "doctest.h"

#include <cmath>

#include "hgode/diagnostics.hpp"
#include "hgode/dynamics.hpp"
#include "hgode/errors.hpp"
#include "hgode/rng.hpp"
#include "oracles.hpp"

using namespace hgode;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, CounterRng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = scale * rng.normal();
  return m;
}

ForceField zero_force(int m) {
  ForceField f = init_force(4, m, 1.0, 0);
  f.assign(Vector::Zero(f.n_parameters()));
  return f;
}

}  // namespace

TEST_CASE("critical force") {
  CHECK(std::abs(critical_force(0.0) - 0.3849002) <= 1e-7);
  CHECK(critical_force(0.0) == doctest::Approx(2.0 / (3.0 * std::sqrt(3.0))));
  CHECK(critical_force(0.5) == doctest::Approx(2.0 * std::pow(0.5 / 3.0, 1.5)));
  CHECK_THROWS_AS(critical_force(1.0), InvalidArgument);
}

TEST_CASE("consensus field") {
  CounterRng rng(1);
  const auto p = RowStochasticMatrix::from_matrix(oracle::random_irreducible(6, 4));
  SUBCASE("rank-one input is a fixed point") {
    Vector y = random_matrix(3, 1, rng);
    const Matrix h = Vector::Ones(6) * y.transpose();
    CHECK(consensus_field(p, h).cwiseAbs().maxCoeff() <= 1e-15);
  }
  SUBCASE("identity P") {
    const auto id = RowStochasticMatrix::from_matrix(Matrix::Identity(4, 4));
    CHECK(consensus_field(id, random_matrix(4, 3, rng)).norm() == 0.0);
  }
  SUBCASE("two-node average") {
    const auto half = RowStochasticMatrix::from_matrix(Matrix::Constant(2, 2, 0.5));
    Matrix h(2, 1);
    h << 1, 0;
    const Matrix d = consensus_field(half, h);
    CHECK(d(0, 0) == doctest::Approx(-0.5));
    CHECK(d(1, 0) == doctest::Approx(0.5));
  }
}

TEST_CASE("soft attention matrix") {
  CHECK((soft_attention_matrix(Matrix::Zero(4, 3), 1.0).matrix().array() - 0.25).abs().maxCoeff() < 1e-15);
  CHECK(soft_attention_matrix(Matrix::Ones(1, 2), 0.5).matrix()(0, 0) == 1.0);
  Matrix h(2, 1);
  h << 1, -1;
  const auto p = soft_attention_matrix(h, 1.0);
  const double e = std::exp(1.0), ei = std::exp(-1.0);
  CHECK(std::abs(p(0, 0) - e / (e + ei)) < 1e-12);
  CHECK(std::abs(p(0, 0) - 0.8808) < 1e-4);
  CHECK(std::abs(p(0, 1) - 0.1192) < 1e-4);
  // huge scores do not overflow
  const auto big = soft_attention_matrix(h * 1e3, 1e-3);
  CHECK(big.matrix().allFinite());
}

TEST_CASE("softmax lower bound over random bounded features") {
  CounterRng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(20));
    const double tau = rng.uniform(0.1, 4.0);
    const Matrix h = random_matrix(n, 1 + static_cast<Eigen::Index>(rng.below(5)), rng, rng.uniform(0.1, 1.5));
    const double b = h.rowwise().norm().maxCoeff();
    CHECK(soft_attention_matrix(h, tau).matrix().minCoeff() >= std::exp(-2 * b * b / tau) / n);
  }
}

TEST_CASE("double-well field") {
  CHECK(double_well_field(Vector::Zero(1), Vector::Zero(1), 0.0, 1.0)[0] == 0.0);
  CHECK(double_well_field(Vector::Ones(1), Vector::Zero(1), 0.0, 1.0)[0] == 0.0);
  CHECK(double_well_field(Vector::Constant(1, 0.5), Vector::Constant(1, 0.2), 0.0, 1.0)[0] ==
        doctest::Approx(0.575));
  CHECK(double_well_field(Vector::Constant(1, 0.5), Vector::Constant(1, 0.2), 0.0, 1.0, false)[0] ==
        doctest::Approx(-0.3));
  CHECK(double_well_field(Vector::Constant(1, 0.5), Vector::Constant(1, 0.2), 0.2, 2.0)[0] ==
        doctest::Approx((0.8 * 0.5 - 0.125 + 0.2) / 2.0));
}

TEST_CASE("gate") {
  const CandidatePool pool(3, {{0, 1}, {1, 2}, {2, 0}}, std::vector<Provenance>(3, Provenance::observed));
  const Matrix half = gate(Vector::Zero(3), pool, 0.2, 0.8);
  CHECK(half(0, 1) == doctest::Approx(0.4));
  CHECK(half(1, 0) == 0.0);
  CHECK(gate(Vector::Constant(3, 4.0), pool, 0.2, 0.0).norm() == 0.0);
  const Matrix one = gate(Vector::Ones(3), pool, 0.2, 1.0);
  CHECK(std::abs(one(1, 2) - 0.9933) < 1e-4);
  CHECK(one(1, 2) == doctest::Approx(1.0 / (1.0 + std::exp(-5.0))));
  CounterRng rng(5);
  for (int t = 0; t < 50; ++t) {
    const double mu = rng.uniform();
    Vector u(3);
    for (int k = 0; k < 3; ++k) u[k] = rng.normal(0.0, 20.0);
    const Matrix a = gate(u, pool, 0.1, mu);
    CHECK(a.minCoeff() >= 0.0);
    CHECK(a.maxCoeff() <= mu);
    CHECK(a(0, 0) == 0.0);
  }
}

TEST_CASE("anneal schedule") {
  AnnealSchedule c;
  CHECK(anneal_mu(c, 7.0) == 1.0);
  AnnealSchedule lin{ScheduleKind::linear, 1.0, 0.5, 10.0};
  CHECK(anneal_mu(lin, 5.0) == doctest::Approx(0.75));
  AnnealSchedule cs{ScheduleKind::cosine, 0.9, 0.1, 3.0};
  for (const auto& s : {lin, cs}) {
    CHECK(anneal_mu(s, s.t_end) == doctest::Approx(s.mu_end));
    CHECK(anneal_mu(s, s.t_end + 100) == s.mu_end);
    double prev = anneal_mu(s, 0.0);
    CHECK(prev == doctest::Approx(s.mu_start));
    for (double t = 0.01; t < 2 * s.t_end; t += 0.01) {
      const double m = anneal_mu(s, t);
      CHECK(m <= prev + 1e-15);
      CHECK(m >= s.mu_end - 1e-15);
      prev = m;
    }
  }
  AnnealSchedule up{ScheduleKind::linear, 0.5, 1.0, 1.0};
  CHECK_THROWS_AS(up.validate(), InvalidArgument);
  CHECK(parse_schedule("cosine") == ScheduleKind::cosine);
  CHECK_THROWS_AS(parse_schedule("step"), InvalidArgument);
}

TEST_CASE("params validation") {
  HgodeParams p;
  CHECK_NOTHROW(p.validate());
  p.lambda = 1.0;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
  p = HgodeParams{};
  p.tau_gate = 0.0;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
  p = HgodeParams{};
  p.gamma = -0.1;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
}

TEST_CASE("coupled field examples") {
  HgodeParams params;
  params.lambda = 0.0;
  const int m = 2;
  CounterRng rng(3);
  const CandidatePool pool = dense_pool(4);
  SUBCASE("consensus rows stay put") {
    Vector y = random_matrix(2, 1, rng);
    CoupledState s{Vector::Ones(4) * y.transpose(), random_matrix(12, 1, rng)};
    const auto d = hgode_field(s, 0.0, params, pool, init_force(8, m, 1.0, 2));
    CHECK(d.h.cwiseAbs().maxCoeff() <= 1e-14);
  }
  SUBCASE("degenerate wells with no force") {
    Vector u(12);
    for (int k = 0; k < 12; ++k) u[k] = k % 2 ? 1.0 : -1.0;
    CoupledState s{random_matrix(4, m, rng), u};
    const auto d = hgode_field(s, 0.0, params, pool, zero_force(m));
    CHECK(d.u.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("single strong edge pulls node 0 toward node 1") {
    const CandidatePool one(2, {{0, 1}}, {Provenance::observed});
    HgodeParams q = params;
    q.epsilon = 1e-3;
    q.tau_feat = 2.0;
    Matrix h(2, 1);
    h << 1, 0;
    const auto d = hgode_field({h, Vector::Constant(1, 10.0)}, 0.0, q, one, zero_force(1));
    // hand-built P: row 0 = [eps, g] / (eps + g), row 1 = [1, 0]
    const double g = sigmoid(10.0 / q.tau_gate);
    const double want0 = ((q.epsilon * 1.0 + g * 0.0) / (q.epsilon + g) - 1.0) / q.tau_feat;
    CHECK(d.h(0, 0) == doctest::Approx(want0).epsilon(1e-12));
    CHECK(d.h(0, 0) < 0.0);
    CHECK(d.h(1, 0) == 0.0);
  }
  SUBCASE("zero row without self-loop") {
    HgodeParams q = params;
    q.epsilon = 0.0;
    const CandidatePool one(2, {{0, 1}}, {Provenance::observed});
    CHECK_THROWS_AS(hgode_field({Matrix::Ones(2, 1), Vector::Zero(1)}, 0.0, q, one, zero_force(1)), ZeroRowError);
  }
}

TEST_CASE("coupled field composes gate, normalization and double well") {
  CounterRng rng(8);
  HgodeParams params;
  params.gamma = 0.3;
  params.tau_feat = 0.7;
  params.tau_topo = 0.6;
  params.mu_schedule = {ScheduleKind::linear, 1.0, 0.4, 2.0};
  const int n = 5, m = 3;
  const CandidatePool pool = dense_pool(n);
  const ForceField f = init_force(6, m, 1.2, 4);
  const CoupledState s{random_matrix(n, m, rng), random_matrix(static_cast<Eigen::Index>(pool.size()), 1, rng)};
  const double t = 0.8;
  const auto d = hgode_field(s, t, params, pool, f);
  const Matrix a = gate(s.u, pool, params.tau_gate, anneal_mu(params.mu_schedule, t));
  const auto p = row_normalize(a, params.epsilon);
  const Matrix dh = (p.matrix() * s.h - (1 + params.gamma) * s.h) / params.tau_feat;
  const Vector du = double_well_field(s.u, force_eval(f, s.h, pool), params.lambda, params.tau_topo);
  CHECK((d.h - dh).cwiseAbs().maxCoeff() <= 1e-13);
  CHECK((d.u - du).cwiseAbs().maxCoeff() <= 1e-13);
  // flat field agrees
  const Vector flat = make_hgode_field(params, pool, f)(t, pack(s));
  CHECK((flat - pack(d)).norm() <= 1e-13);
}

TEST_CASE("field VJP matches finite differences") {
  CounterRng rng(21);
  HgodeParams params;
  params.gamma = 0.2;
  const int n = 4, m = 2;
  const CandidatePool pool = dense_pool(n);
  const ForceField f = init_force(5, m, 1.0, 9);
  const CoupledState s{random_matrix(n, m, rng), random_matrix(12, 1, rng)};
  const CoupledState cot{random_matrix(n, m, rng), random_matrix(12, 1, rng)};
  const auto vjp = hgode_field_vjp(s, 0.3, params, pool, f, cot);
  const auto dot = [&](const CoupledState& d) { return (d.h.array() * cot.h.array()).sum() + d.u.dot(cot.u); };
  const double step = 1e-6;
  for (Eigen::Index k = 0; k < s.h.size(); ++k) {
    CoupledState a = s, b = s;
    a.h.data()[k] += step;
    b.h.data()[k] -= step;
    const double fd = (dot(hgode_field(a, 0.3, params, pool, f)) - dot(hgode_field(b, 0.3, params, pool, f))) / (2 * step);
    CHECK(vjp.state.h.data()[k] == doctest::Approx(fd).epsilon(1e-5));
  }
  for (Eigen::Index k = 0; k < s.u.size(); ++k) {
    CoupledState a = s, b = s;
    a.u[k] += step;
    b.u[k] -= step;
    const double fd = (dot(hgode_field(a, 0.3, params, pool, f)) - dot(hgode_field(b, 0.3, params, pool, f))) / (2 * step);
    CHECK(vjp.state.u[k] == doctest::Approx(fd).epsilon(1e-5));
  }
  const Vector theta = f.flatten(), g = vjp.force.flatten();
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    ForceField a = f, b = f;
    Vector ta = theta, tb = theta;
    ta[k] += step;
    tb[k] -= step;
    a.assign(ta);
    b.assign(tb);
    const double fd = (dot(hgode_field(s, 0.3, params, pool, a)) - dot(hgode_field(s, 0.3, params, pool, b))) / (2 * step);
    CHECK(g[k] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("topology energy descends along the U-flow with frozen H") {
  CounterRng rng(12);
  for (double lambda : {0.0, 0.3, 0.7}) {
    Vector f(20), u0(20);
    for (int k = 0; k < 20; ++k) {
      f[k] = rng.normal(0.0, 0.5);
      u0[k] = rng.normal(0.0, 1.5);
    }
    for (bool cubic : {true, false}) {
      const OdeField field = [&](double, const Vector& u) -> Vector { return double_well_field(u, f, lambda, 0.8, cubic); };
      double prev = topology_energy(u0, f, lambda, cubic);
      bool monotone = true;
      integrate_dopri5(field, u0, 0.0, 10.0, SolverConfig{}, {}, [&](double, const Vector& u) {
        const double e = topology_energy(u, f, lambda, cubic);
        if (e > prev + 1e-12) monotone = false;
        prev = e;
      });
      CHECK(monotone);
    }
  }
}

TEST_CASE("feature energy descends for symmetric P") {
  CounterRng rng(13);
  Matrix a(6, 6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j <= i; ++j) a(i, j) = a(j, i) = rng.uniform();
  // symmetric doubly stochastic by Sinkhorn
  for (int it = 0; it < 500; ++it) {
    for (int i = 0; i < 6; ++i) a.row(i) /= a.row(i).sum();
    for (int j = 0; j < 6; ++j) a.col(j) /= a.col(j).sum();
  }
  a = 0.5 * (a + a.transpose());
  for (int i = 0; i < 6; ++i) a.row(i) /= a.row(i).sum();
  const auto p = RowStochasticMatrix::from_matrix(a);
  const Matrix h0 = random_matrix(6, 2, rng);
  double prev = feature_energy(h0, p, 0.0);
  bool monotone = true;
  integrate_dopri5(make_consensus_field(p, 2), Eigen::Map<const Vector>(h0.data(), h0.size()), 0, 5, SolverConfig{}, {},
                   [&](double, const Vector& y) {
                     const double e = feature_energy(Eigen::Map<const Matrix>(y.data(), 6, 2), p, 0.0);
                     if (e > prev + 1e-12) monotone = false;
                     prev = e;
                   });
  CHECK(monotone);
}

TEST_CASE("diameter contracts under uniformly positive mixing") {
  CounterRng rng(31);
  const int n = 6;
  for (int trial = 0; trial < 100; ++trial) {
    const double alpha = rng.uniform(0.01, 1.0 / n);
    Vector x(n);
    for (int i = 0; i < n; ++i) x[i] = rng.normal();
    const double d0 = diameter(x);
    double t0 = 0;
    for (int seg = 0; seg < 3; ++seg) {
      Matrix r(n, n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) r(i, j) = rng.uniform();
        r.row(i) /= r.row(i).sum();
      }
      const auto p = RowStochasticMatrix::from_matrix(Matrix::Constant(n, n, alpha) + (1 - n * alpha) * r);
      const Matrix l = Matrix::Identity(n, n) - p.matrix();
      for (double dt : {0.25, 0.5, 1.0}) {
        const Vector xt = oracle::expm(-dt * l) * x;
        CHECK(diameter(xt) <= std::exp(-2 * alpha * (t0 + dt)) * d0 * (1 + 1e-6));
      }
      x = oracle::expm(-l) * x;
      t0 += 1.0;
    }
  }
}

TEST_CASE("deviation coordinates reproduce the plain soft-attention flow") {
  CounterRng rng(41);
  const int n = 6, m = 3;
  const Matrix h0 = random_matrix(n, m, rng, 0.5);
  SolverConfig c;
  c.rtol = 1e-10;
  c.atol = 1e-12;
  const auto plain = integrate_dopri5(make_soft_attention_field(1.5, n, m), Eigen::Map<const Vector>(h0.data(), h0.size()), 0, 3, c);
  const auto dev = integrate_dopri5(make_soft_attention_deviation_field(1.5, n, m), to_deviation(h0), 0, 3, c);
  const Matrix hp = Eigen::Map<const Matrix>(plain.final_state().data(), n, m);
  const Matrix centered = hp.rowwise() - hp.colwise().mean();
  CHECK((deviation_part(dev.final_state(), n, m) - centered).norm() <= 1e-8);
  CHECK(deviation_part(to_deviation(h0), n, m).colwise().sum().norm() <= 1e-14);
}

TEST_CASE("pack and unpack round trip") {
  CounterRng rng(2);
  const CoupledState s{random_matrix(3, 2, rng), random_matrix(5, 1, rng)};
  const auto back = unpack(pack(s), 3, 2);
  CHECK(back.h == s.h);
  CHECK(back.u == s.u);
  const auto l = coupled_layout(3, 2, 5);
  CHECK(l.size() == 11);
}
