#include "hgode/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "hgode/errors.hpp"

namespace hgode {

double critical_force(double lambda) {
  if (!(lambda >= 0.0 && lambda < 1.0)) throw InvalidArgument("lambda must lie in [0, 1)");
  return 2.0 * std::pow((1.0 - lambda) / 3.0, 1.5);
}

const char* schedule_name(ScheduleKind kind) noexcept {
  switch (kind) {
    case ScheduleKind::constant: return "constant";
    case ScheduleKind::linear: return "linear";
    case ScheduleKind::cosine: return "cosine";
  }
  return "unknown";
}

ScheduleKind parse_schedule(const std::string& name) {
  if (name == "constant") return ScheduleKind::constant;
  if (name == "linear") return ScheduleKind::linear;
  if (name == "cosine") return ScheduleKind::cosine;
  throw InvalidArgument("unknown schedule '" + name + "'");
}

void AnnealSchedule::validate() const {
  if (!(mu_start >= 0.0 && mu_start <= 1.0 && mu_end >= 0.0 && mu_end <= 1.0)) {
    throw InvalidArgument("mu_start and mu_end must lie in [0, 1]");
  }
  if (mu_end > mu_start) throw InvalidArgument("annealing must be non-increasing");
  if (!(t_end > 0.0)) throw InvalidArgument("t_end must be positive");
}

double anneal_mu(const AnnealSchedule& s, double t) {
  if (s.kind == ScheduleKind::constant) return s.mu_start;
  if (t >= s.t_end) return s.mu_end;
  const double x = std::max(t, 0.0) / s.t_end;
  const double w = s.kind == ScheduleKind::linear ? 1.0 - x
                                                  : 0.5 * (1.0 + std::cos(std::numbers::pi * x));
  return s.mu_end + (s.mu_start - s.mu_end) * w;
}

void HgodeParams::validate() const {
  if (!(lambda >= 0.0 && lambda < 1.0)) throw InvalidArgument("lambda must lie in [0, 1)");
  if (!(tau_gate > 0.0 && tau_feat > 0.0 && tau_topo > 0.0)) {
    throw InvalidArgument("time constants must be positive");
  }
  if (!(gamma >= 0.0)) throw InvalidArgument("gamma must be nonnegative");
  if (!(epsilon >= 0.0)) throw InvalidArgument("epsilon must be nonnegative");
  if (!(force_scale > 0.0)) throw InvalidArgument("force scale must be positive");
  mu_schedule.validate();
}

StateLayout coupled_layout(Eigen::Index n_nodes, Eigen::Index feature_dim, std::size_t pool_size) {
  StateLayout layout;
  layout.add("H", n_nodes * feature_dim).add("U", static_cast<Eigen::Index>(pool_size));
  return layout;
}

Vector pack(const CoupledState& state) {
  Vector y(state.h.size() + state.u.size());
  y.head(state.h.size()) = Eigen::Map<const Vector>(state.h.data(), state.h.size());
  y.tail(state.u.size()) = state.u;
  return y;
}

CoupledState unpack(const Vector& y, Eigen::Index n_nodes, Eigen::Index feature_dim) {
  const Eigen::Index nh = n_nodes * feature_dim;
  if (y.size() < nh) throw InvalidArgument("state vector too short");
  CoupledState s;
  s.h = Eigen::Map<const Matrix>(y.data(), n_nodes, feature_dim);
  s.u = y.tail(y.size() - nh);
  return s;
}

Matrix consensus_field(const RowStochasticMatrix& p, const Matrix& h) {
  if (p.size() != h.rows()) throw InvalidArgument("P and H disagree on N");
  return p.matrix() * h - h;
}

RowStochasticMatrix soft_attention_matrix(const Matrix& h, double tau_attn) {
  if (!(tau_attn > 0.0)) throw InvalidArgument("attention temperature must be positive");
  Matrix p = (h * h.transpose()) / tau_attn;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double top = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - top).exp();
    p.row(i) /= p.row(i).sum();
  }
  return RowStochasticMatrix(std::move(p));
}

Vector double_well_field(const Vector& u, const Vector& f, double lambda, double tau_topo,
                         bool cubic) {
  if (u.size() != f.size()) throw InvalidArgument("U and F lengths differ");
  if (cubic) {
    return ((1.0 - lambda) * u.array() - u.array().cube() + f.array()) / tau_topo;
  }
  return (f - u) / tau_topo;
}

Matrix gate(const Vector& u, const CandidatePool& pool, double tau_gate, double mu) {
  if (u.size() != static_cast<Eigen::Index>(pool.size())) {
    throw InvalidArgument("U length does not match pool");
  }
  const int n = pool.n_nodes();
  Matrix a = Matrix::Zero(n, n);
  for (std::size_t k = 0; k < pool.size(); ++k) {
    const Edge& e = pool.pair(k);
    a(e.src, e.dst) = mu * sigmoid(u[static_cast<Eigen::Index>(k)] / tau_gate);
  }
  return a;
}

Matrix effective_adjacency(const Vector& u, const CandidatePool& pool, const HgodeParams& params,
                           double t) {
  return gate(u, pool, params.tau_gate, anneal_mu(params.mu_schedule, t));
}

namespace {

// Sparse diffusion on the pool: weights per slot, degree and P H per node.
struct Diffusion {
  Vector weight;  // A_k
  Vector degree;  // sum_k A_k + epsilon per source node
  Matrix ph;
};

Diffusion diffuse(const Matrix& h, const Vector& u, const CandidatePool& pool,
                  const HgodeParams& params, double mu) {
  if (u.size() != static_cast<Eigen::Index>(pool.size())) {
    throw InvalidArgument("U length does not match pool");
  }
  if (h.rows() != pool.n_nodes()) throw InvalidArgument("H and pool disagree on N");
  Diffusion d;
  d.weight.resize(u.size());
  d.degree = Vector::Constant(h.rows(), params.epsilon);
  d.ph = params.epsilon * h;
  for (std::size_t k = 0; k < pool.size(); ++k) {
    const Edge& e = pool.pair(k);
    const double w = mu * sigmoid(u[static_cast<Eigen::Index>(k)] / params.tau_gate);
    d.weight[static_cast<Eigen::Index>(k)] = w;
    d.degree[e.src] += w;
    d.ph.row(e.src) += w * h.row(e.dst);
  }
  for (Eigen::Index i = 0; i < h.rows(); ++i) {
    if (d.degree[i] <= 0.0) {  // NaN passes through to the loss check
      throw ZeroRowError("node " + std::to_string(i) + " has no effective edges and epsilon = 0");
    }
    d.ph.row(i) /= d.degree[i];
  }
  return d;
}

}  // namespace

CoupledState hgode_field(const CoupledState& state, double t, const HgodeParams& params,
                         const CandidatePool& pool, const ForceField& force) {
  const double mu = anneal_mu(params.mu_schedule, t);
  const Diffusion d = diffuse(state.h, state.u, pool, params, mu);
  CoupledState out;
  out.h = (d.ph - (1.0 + params.gamma) * state.h) / params.tau_feat;
  const Vector f = force_eval(force, state.h, pool);
  out.u = double_well_field(state.u, f, params.lambda, params.tau_topo, params.cubic);
  return out;
}

FieldVjp hgode_field_vjp(const CoupledState& state, double t, const HgodeParams& params,
                         const CandidatePool& pool, const ForceField& force,
                         const CoupledState& cotangent) {
  const double mu = anneal_mu(params.mu_schedule, t);
  const Diffusion d = diffuse(state.h, state.u, pool, params, mu);
  const Matrix& gh = cotangent.h;
  const Vector& gu = cotangent.u;

  FieldVjp out;
  // Scaled cotangent g_i / (tau_feat d_i) reused by both pullbacks below.
  Matrix scaled = gh;
  for (Eigen::Index i = 0; i < scaled.rows(); ++i) scaled.row(i) /= params.tau_feat * d.degree[i];

  out.state.h = params.epsilon * scaled - ((1.0 + params.gamma) / params.tau_feat) * gh;
  out.state.u = Vector::Zero(state.u.size());
  for (std::size_t k = 0; k < pool.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const Edge& e = pool.pair(k);
    out.state.h.row(e.dst) += d.weight[kk] * scaled.row(e.src);
    const double da = scaled.row(e.src).dot(state.h.row(e.dst) - d.ph.row(e.src));
    const double g = sigmoid(state.u[kk] / params.tau_gate);
    out.state.u[kk] += da * mu * g * (1.0 - g) / params.tau_gate;
  }

  if (params.cubic) {
    out.state.u.array() +=
        gu.array() * ((1.0 - params.lambda) - 3.0 * state.u.array().square()) / params.tau_topo;
  } else {
    out.state.u -= gu / params.tau_topo;
  }

  const Vector df = gu / params.tau_topo;
  out.force = force_backward(force, state.h, pool, df);
  out.state.h += out.force.h;
  return out;
}

double topology_energy(const Vector& u, const Vector& f, double lambda, bool cubic) {
  if (u.size() != f.size()) throw InvalidArgument("U and F lengths differ");
  if (cubic) {
    return (0.25 * u.array().pow(4) - 0.5 * (1.0 - lambda) * u.array().square() - f.array() * u.array())
        .sum();
  }
  return (0.5 * u.array().square() - f.array() * u.array()).sum();
}

double feature_energy(const Matrix& h, const RowStochasticMatrix& p, double gamma) {
  if (p.size() != h.rows()) throw InvalidArgument("P and H disagree on N");
  return 0.5 * (h.transpose() * (h - p.matrix() * h)).trace() + 0.5 * gamma * h.squaredNorm();
}

OdeField make_consensus_field(const RowStochasticMatrix& p, Eigen::Index feature_dim) {
  auto shared = std::make_shared<const Matrix>(p.matrix());
  const Eigen::Index n = p.size();
  return [shared, n, feature_dim](double, const Vector& y) -> Vector {
    const Eigen::Map<const Matrix> h(y.data(), n, feature_dim);
    Matrix dh = (*shared) * h - h;
    return Eigen::Map<const Vector>(dh.data(), dh.size());
  };
}

OdeField make_soft_attention_field(double tau_attn, Eigen::Index n_nodes, Eigen::Index feature_dim) {
  if (!(tau_attn > 0.0)) throw InvalidArgument("attention temperature must be positive");
  return [tau_attn, n_nodes, feature_dim](double, const Vector& y) -> Vector {
    const Matrix h = Eigen::Map<const Matrix>(y.data(), n_nodes, feature_dim);
    const RowStochasticMatrix p = soft_attention_matrix(h, tau_attn);
    Matrix dh = p.matrix() * h - h;
    return Eigen::Map<const Vector>(dh.data(), dh.size());
  };
}

OdeField make_soft_attention_deviation_field(double tau_attn, Eigen::Index n_nodes,
                                             Eigen::Index feature_dim) {
  if (!(tau_attn > 0.0)) throw InvalidArgument("attention temperature must be positive");
  return [tau_attn, n_nodes, feature_dim](double, const Vector& y) -> Vector {
    const Vector c = y.head(feature_dim);
    const Matrix d = Eigen::Map<const Matrix>(y.data() + feature_dim, n_nodes, feature_dim);
    // <h_i, h_j> minus the terms constant along a row
    Matrix p = d * d.transpose();
    p.rowwise() += (d * c).transpose();
    p /= tau_attn;
    for (Eigen::Index i = 0; i < n_nodes; ++i) {
      const double top = p.row(i).maxCoeff();
      p.row(i) = (p.row(i).array() - top).exp();
      p.row(i) /= p.row(i).sum();
    }
    Matrix g = p * d - d;
    const Vector drift = g.colwise().mean().transpose();
    g.rowwise() -= drift.transpose();
    Vector out(y.size());
    out.head(feature_dim) = drift;
    out.tail(g.size()) = Eigen::Map<const Vector>(g.data(), g.size());
    return out;
  };
}

Vector to_deviation(const Matrix& h) {
  const Vector c = h.colwise().mean().transpose();
  const Matrix d = h.rowwise() - c.transpose();
  Vector y(c.size() + d.size());
  y.head(c.size()) = c;
  y.tail(d.size()) = Eigen::Map<const Vector>(d.data(), d.size());
  return y;
}

Matrix deviation_part(const Vector& y, Eigen::Index n_nodes, Eigen::Index feature_dim) {
  return Eigen::Map<const Matrix>(y.data() + feature_dim, n_nodes, feature_dim);
}

OdeField make_hgode_field(const HgodeParams& params, const CandidatePool& pool,
                          const ForceField& force) {
  params.validate();
  auto shared_pool = std::make_shared<const CandidatePool>(pool);
  auto shared_force = std::make_shared<const ForceField>(force);
  const Eigen::Index n = pool.n_nodes();
  const Eigen::Index m = force.feature_dim();
  return [params, shared_pool, shared_force, n, m](double t, const Vector& y) -> Vector {
    const CoupledState s = unpack(y, n, m);
    return pack(hgode_field(s, t, params, *shared_pool, *shared_force));
  };
}

}  // namespace hgode
