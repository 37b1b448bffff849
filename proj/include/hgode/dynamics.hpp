#pragma once

#include <cmath>
#include <string>

#include "hgode/force.hpp"
#include "hgode/graph.hpp"
#include "hgode/ode.hpp"

namespace hgode {

// Fold threshold of u^3 - (1 - lambda) u = F: 2 ((1 - lambda) / 3)^(3/2).
double critical_force(double lambda);

enum class ScheduleKind { constant, linear, cosine };

const char* schedule_name(ScheduleKind kind) noexcept;
ScheduleKind parse_schedule(const std::string& name);

struct AnnealSchedule {
  ScheduleKind kind = ScheduleKind::constant;
  double mu_start = 1.0;
  double mu_end = 1.0;
  double t_end = 1.0;

  void validate() const;
};

// Non-increasing from mu_start to mu_end over [0, t_end], then flat.
double anneal_mu(const AnnealSchedule& schedule, double t);

struct HgodeParams {
  double lambda = 0.2;
  double tau_gate = 0.2;
  double tau_feat = 1.0;
  double tau_topo = 1.0;
  double gamma = 0.0;
  double epsilon = 1e-3;
  AnnealSchedule mu_schedule;
  double force_scale = 1.0;
  bool cubic = true;  // false: single-well relaxation (-U + F) / tau_topo

  // Structural invariants (0 <= lambda < 1, positive timescales, ...).
  void validate() const;
};

struct CoupledState {
  Matrix h;  // N x m
  Vector u;  // one per pool slot
};

StateLayout coupled_layout(Eigen::Index n_nodes, Eigen::Index feature_dim, std::size_t pool_size);
Vector pack(const CoupledState& state);
CoupledState unpack(const Vector& y, Eigen::Index n_nodes, Eigen::Index feature_dim);

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// -(I - P) H
Matrix consensus_field(const RowStochasticMatrix& p, const Matrix& h);

// Row softmax of <h_i, h_j> / tau_attn with per-row max subtraction.
RowStochasticMatrix soft_attention_matrix(const Matrix& h, double tau_attn);

// ((1 - lambda) U - U^3 + F) / tau_topo, or (-U + F) / tau_topo without the cubic.
Vector double_well_field(const Vector& u, const Vector& f, double lambda, double tau_topo,
                         bool cubic = true);

// Dense effective adjacency: mu * sigmoid(U / tau_gate) on pool pairs, 0 elsewhere.
Matrix gate(const Vector& u, const CandidatePool& pool, double tau_gate, double mu);

// Effective adjacency at time t for the given potentials.
Matrix effective_adjacency(const Vector& u, const CandidatePool& pool, const HgodeParams& params,
                           double t);

CoupledState hgode_field(const CoupledState& state, double t, const HgodeParams& params,
                         const CandidatePool& pool, const ForceField& force);

struct FieldVjp {
  CoupledState state;    // cotangent pulled back to (H, U)
  ForceGradients force;  // parameter part; force.h is already folded into state.h
};

// Vector-Jacobian product of hgode_field at `state` against `cotangent`.
FieldVjp hgode_field_vjp(const CoupledState& state, double t, const HgodeParams& params,
                         const CandidatePool& pool, const ForceField& force,
                         const CoupledState& cotangent);

// Separable Landau energy over pool slots; the U-flow descends it for fixed F.
double topology_energy(const Vector& u, const Vector& f, double lambda, bool cubic = true);

// 0.5 tr(H^T (I - P) H) + 0.5 gamma |H|^2
double feature_energy(const Matrix& h, const RowStochasticMatrix& p, double gamma);

// Flat-state fields. The returned closures own copies of their inputs.
OdeField make_consensus_field(const RowStochasticMatrix& p, Eigen::Index feature_dim);
OdeField make_soft_attention_field(double tau_attn, Eigen::Index n_nodes, Eigen::Index feature_dim);
// Soft-attention flow on y = [c; D], c the column mean of H and D = H - 1 c^T
// (column-major). Same trajectory as the plain field, but pairwise distances
// are read off D directly and stay resolved after H has collapsed far below
// the scale of c.
OdeField make_soft_attention_deviation_field(double tau_attn, Eigen::Index n_nodes,
                                             Eigen::Index feature_dim);
Vector to_deviation(const Matrix& h);
Matrix deviation_part(const Vector& y, Eigen::Index n_nodes, Eigen::Index feature_dim);
OdeField make_hgode_field(const HgodeParams& params, const CandidatePool& pool,
                          const ForceField& force);

}  // namespace hgode
