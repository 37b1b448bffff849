#include "hgode/force.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"

#include "hgode/dynamics.hpp"
#include "hgode/errors.hpp"
#include "hgode/rng.hpp"

namespace hgode {

using nlohmann::json;

Vector ForceField::flatten() const {
  Vector out(n_parameters());
  Eigen::Index k = 0;
  out.segment(k, w1.size()) = Eigen::Map<const Vector>(w1.data(), w1.size());
  k += w1.size();
  out.segment(k, b1.size()) = b1;
  k += b1.size();
  out.segment(k, w2.size()) = w2;
  k += w2.size();
  out[k] = b2;
  return out;
}

void ForceField::assign(const Vector& flat) {
  if (flat.size() != n_parameters()) throw InvalidArgument("parameter vector has wrong length");
  Eigen::Index k = 0;
  Eigen::Map<Vector>(w1.data(), w1.size()) = flat.segment(k, w1.size());
  k += w1.size();
  b1 = flat.segment(k, b1.size());
  k += b1.size();
  w2 = flat.segment(k, w2.size());
  k += w2.size();
  b2 = flat[k];
}

ForceGradients ForceGradients::zeros_like(const ForceField& force, Eigen::Index n_nodes) {
  ForceGradients g;
  g.w1 = Matrix::Zero(force.w1.rows(), force.w1.cols());
  g.b1 = Vector::Zero(force.b1.size());
  g.w2 = Vector::Zero(force.w2.size());
  g.b2 = 0.0;
  g.h = Matrix::Zero(n_nodes, force.feature_dim());
  return g;
}

Vector ForceGradients::flatten() const {
  Vector out(w1.size() + b1.size() + w2.size() + 1);
  Eigen::Index k = 0;
  out.segment(k, w1.size()) = Eigen::Map<const Vector>(w1.data(), w1.size());
  k += w1.size();
  out.segment(k, b1.size()) = b1;
  k += b1.size();
  out.segment(k, w2.size()) = w2;
  k += w2.size();
  out[k] = b2;
  return out;
}

ForceGradients& ForceGradients::operator+=(const ForceGradients& other) {
  w1 += other.w1;
  b1 += other.b1;
  w2 += other.w2;
  b2 += other.b2;
  h += other.h;
  return *this;
}

namespace {

void check_shapes(const ForceField& force, const Matrix& h, const CandidatePool& pool) {
  if (force.w1.rows() != 2 * h.cols()) {
    throw InvalidArgument("force input width does not match feature dimension");
  }
  if (force.b1.size() != force.w1.cols() || force.w2.size() != force.w1.cols()) {
    throw InvalidArgument("force parameter shapes are inconsistent");
  }
  if (pool.n_nodes() != h.rows()) throw InvalidArgument("pool and features disagree on N");
}

}  // namespace

Vector force_eval(const ForceField& force, const Matrix& h, const CandidatePool& pool) {
  check_shapes(force, h, pool);
  const Eigen::Index m = h.cols();
  const Matrix qa = h * force.w1.topRows(m);
  const Matrix qb = h * force.w1.bottomRows(m);
  Vector out(static_cast<Eigen::Index>(pool.size()));
  const Eigen::Index width = force.w1.cols();
  for (std::size_t k = 0; k < pool.size(); ++k) {
    const Edge& e = pool.pair(k);
    double o = force.b2;
    for (Eigen::Index c = 0; c < width; ++c) {
      o += force.w2[c] * std::tanh(qa(e.src, c) + qb(e.dst, c) + force.b1[c]);
    }
    out[static_cast<Eigen::Index>(k)] = force.scale * std::tanh(o);
  }
  return out;
}

ForceGradients force_backward(const ForceField& force, const Matrix& h, const CandidatePool& pool,
                              const Vector& upstream) {
  check_shapes(force, h, pool);
  if (upstream.size() != static_cast<Eigen::Index>(pool.size())) {
    throw InvalidArgument("upstream gradient length does not match pool");
  }
  const Eigen::Index m = h.cols();
  const Eigen::Index width = force.w1.cols();
  const Matrix qa = h * force.w1.topRows(m);
  const Matrix qb = h * force.w1.bottomRows(m);
  ForceGradients g = ForceGradients::zeros_like(force, h.rows());
  Matrix dqa = Matrix::Zero(h.rows(), width);
  Matrix dqb = Matrix::Zero(h.rows(), width);
  Vector z(width);
  for (std::size_t k = 0; k < pool.size(); ++k) {
    const double up = upstream[static_cast<Eigen::Index>(k)];
    if (up == 0.0) continue;
    const Edge& e = pool.pair(k);
    double o = force.b2;
    for (Eigen::Index c = 0; c < width; ++c) {
      z[c] = std::tanh(qa(e.src, c) + qb(e.dst, c) + force.b1[c]);
      o += force.w2[c] * z[c];
    }
    const double t = std::tanh(o);
    const double go = up * force.scale * (1.0 - t * t);
    g.b2 += go;
    for (Eigen::Index c = 0; c < width; ++c) {
      g.w2[c] += go * z[c];
      const double dpre = go * force.w2[c] * (1.0 - z[c] * z[c]);
      g.b1[c] += dpre;
      dqa(e.src, c) += dpre;
      dqb(e.dst, c) += dpre;
    }
  }
  g.w1.topRows(m) = h.transpose() * dqa;
  g.w1.bottomRows(m) = h.transpose() * dqb;
  g.h = dqa * force.w1.topRows(m).transpose() + dqb * force.w1.bottomRows(m).transpose();
  return g;
}

ForceField init_force(int hidden, int feature_dim, double scale, std::uint64_t seed,
                      ScaleCheck check, double lambda) {
  if (hidden < 1) throw InvalidArgument("force hidden width must be at least 1");
  if (feature_dim < 1) throw InvalidArgument("feature dimension must be at least 1");
  if (!(scale > 0.0)) throw InvalidArgument("force scale must be positive");
  const double threshold = critical_force(lambda);
  if (scale < threshold) {
    std::ostringstream msg;
    msg << "force scale " << scale << " is below the switching threshold " << threshold
        << "; edges can never be forced across the fold";
    if (check == ScaleCheck::error) throw InvalidScale(msg.str());
    std::clog << "warning: " << msg.str() << '\n';
  }
  CounterRng rng(derive_seed(seed, 0x666f726365ULL));
  ForceField f;
  const double r1 = 1.0 / std::sqrt(2.0 * feature_dim);
  const double r2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  f.w1.resize(2 * feature_dim, hidden);
  for (Eigen::Index j = 0; j < f.w1.cols(); ++j) {
    for (Eigen::Index i = 0; i < f.w1.rows(); ++i) f.w1(i, j) = rng.uniform(-r1, r1);
  }
  f.b1 = Vector::Zero(hidden);
  f.w2.resize(hidden);
  for (Eigen::Index c = 0; c < hidden; ++c) f.w2[c] = rng.uniform(-r2, r2);
  f.b2 = 0.0;
  f.scale = scale;
  return f;
}

namespace {

json array_json(const double* data, Eigen::Index rows, Eigen::Index cols) {
  json values = json::array();
  for (Eigen::Index k = 0; k < rows * cols; ++k) values.push_back(data[k]);
  return {{"shape", {rows, cols}}, {"order", "column_major"}, {"values", values}};
}

Matrix array_from_json(const json& j, const char* name) {
  if (!j.contains(name)) throw ParseError(0, std::string("missing array ") + name);
  const json& a = j.at(name);
  const auto rows = a.at("shape").at(0).get<Eigen::Index>();
  const auto cols = a.at("shape").at(1).get<Eigen::Index>();
  const json& values = a.at("values");
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(values.size()) != rows * cols) {
    throw ParseError(0, std::string("shape mismatch for ") + name);
  }
  Matrix out(rows, cols);
  for (Eigen::Index k = 0; k < rows * cols; ++k) out.data()[k] = values[static_cast<std::size_t>(k)].get<double>();
  return out;
}

}  // namespace

std::string force_to_json(const ForceField& force) {
  json j;
  j["w1"] = array_json(force.w1.data(), force.w1.rows(), force.w1.cols());
  j["b1"] = array_json(force.b1.data(), force.b1.size(), 1);
  j["w2"] = array_json(force.w2.data(), force.w2.size(), 1);
  j["b2"] = array_json(&force.b2, 1, 1);
  j["scale"] = force.scale;
  // nlohmann writes doubles in shortest round-trip form, which is exact.
  return j.dump(1);
}

ForceField force_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(0, std::string("force checkpoint: ") + e.what());
  }
  try {
    ForceField f;
    f.w1 = array_from_json(j, "w1");
    f.b1 = array_from_json(j, "b1").col(0);
    f.w2 = array_from_json(j, "w2").col(0);
    const Matrix b2 = array_from_json(j, "b2");
    if (b2.size() != 1) throw ParseError(0, "b2 must be a scalar");
    f.b2 = b2(0, 0);
    f.scale = j.at("scale").get<double>();
    if (f.w1.rows() % 2 != 0 || f.b1.size() != f.w1.cols() || f.w2.size() != f.w1.cols()) {
      throw ParseError(0, "force checkpoint shapes are inconsistent");
    }
    return f;
  } catch (const json::exception& e) {
    throw ParseError(0, std::string("force checkpoint: ") + e.what());
  }
}

void save_force(const std::string& path, const ForceField& force) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << force_to_json(force) << '\n';
}

ForceField load_force(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return force_from_json(buffer.str());
}

}  // namespace hgode
