#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "hgode/graph.hpp"

namespace hgode {

// Pairwise force s * tanh(w2 . tanh(W1^T [h_i ; h_j] + b1) + b2). W1 is
// stored as its source half (rows 0..m-1) and target half (rows m..2m-1)
// stacked, so per-node projections can be shared across pairs.
struct ForceField {
  Matrix w1;  // 2m x hidden
  Vector b1;  // hidden
  Vector w2;  // hidden
  double b2 = 0.0;
  double scale = 1.0;

  int feature_dim() const noexcept { return static_cast<int>(w1.rows() / 2); }
  int hidden() const noexcept { return static_cast<int>(w1.cols()); }
  Eigen::Index n_parameters() const noexcept { return w1.size() + b1.size() + w2.size() + 1; }

  // w1 (column-major), b1, w2, b2.
  Vector flatten() const;
  void assign(const Vector& flat);
};

struct ForceGradients {
  Matrix w1;
  Vector b1;
  Vector w2;
  double b2 = 0.0;
  Matrix h;  // N x m, both endpoints of every pair accumulated

  static ForceGradients zeros_like(const ForceField& force, Eigen::Index n_nodes);
  Vector flatten() const;  // parameter part only, ordered as ForceField::flatten
  ForceGradients& operator+=(const ForceGradients& other);
};

// One value per pool slot.
Vector force_eval(const ForceField& force, const Matrix& h, const CandidatePool& pool);

// Reverse mode: upstream holds dL/dF per slot.
ForceGradients force_backward(const ForceField& force, const Matrix& h, const CandidatePool& pool,
                              const Vector& upstream);

enum class ScaleCheck { error, warn };

// Weights uniform in +-1/sqrt(fan_in), biases zero. A scale below the fold
// threshold at the given lambda throws InvalidScale (or warns on stderr).
ForceField init_force(int hidden, int feature_dim, double scale, std::uint64_t seed,
                      ScaleCheck check = ScaleCheck::error, double lambda = 0.0);

// JSON of named arrays with shapes; doubles written with 17 significant digits.
std::string force_to_json(const ForceField& force);
ForceField force_from_json(const std::string& text);
void save_force(const std::string& path, const ForceField& force);
ForceField load_force(const std::string& path);

}  // namespace hgode
