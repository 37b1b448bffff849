#include "hgode/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "hgode/errors.hpp"
#include "hgode/rng.hpp"

namespace hgode {

void TrainConfig::validate() const {
  if (!(delta > 0.0)) throw InvalidArgument("margin delta must be positive");
  if (!(beta >= 0.0)) throw InvalidArgument("margin weight beta must be nonnegative");
  if (!(lr >= 0.0)) throw InvalidArgument("learning rate must be nonnegative");
  if (epochs < 0) throw InvalidArgument("epochs must be nonnegative");
  if (unroll_steps < 1) throw InvalidArgument("unroll_steps must be at least 1");
  if (!(horizon > 0.0)) throw InvalidArgument("training horizon must be positive");
  if (pair_sample_size < 0) throw InvalidArgument("pair_sample_size must be nonnegative");
  if (hidden < 1) throw InvalidArgument("hidden width must be at least 1");
}

Readout Readout::zeros(Eigen::Index feature_dim, int n_classes) {
  if (n_classes < 2) throw InvalidArgument("need at least two classes");
  return {Matrix::Zero(feature_dim, n_classes), Vector::Zero(n_classes)};
}

Matrix Readout::logits(const Matrix& h) const {
  return (h * w).rowwise() + b.transpose();
}

namespace {

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

MarginLoss margin_loss(const Vector& f, const PairSets& pairs, double delta, double fcrit) {
  if (!(delta > 0.0)) throw InvalidArgument("margin delta must be positive");
  MarginLoss out;
  out.grad = Vector::Zero(f.size());
  const double target = fcrit + delta;
  for (std::size_t k : pairs.positives) {
    const auto kk = static_cast<Eigen::Index>(k);
    const double x = target - f[kk];
    out.loss += softplus(x);
    out.grad[kk] -= sigmoid(x);
  }
  for (std::size_t k : pairs.negatives) {
    const auto kk = static_cast<Eigen::Index>(k);
    const double x = target + f[kk];
    out.loss += softplus(x);
    out.grad[kk] += sigmoid(x);
  }
  return out;
}

TaskLoss task_loss(const Matrix& h, const Readout& readout, const std::vector<int>& labels,
                   const std::vector<int>& nodes) {
  const auto k = static_cast<int>(readout.b.size());
  TaskLoss out;
  out.dh = Matrix::Zero(h.rows(), h.cols());
  out.dw = Matrix::Zero(readout.w.rows(), readout.w.cols());
  out.db = Vector::Zero(readout.b.size());
  if (nodes.empty()) return out;
  const double inv = 1.0 / static_cast<double>(nodes.size());
  for (int i : nodes) {
    const int y = labels.at(static_cast<std::size_t>(i));
    if (y < 0 || y >= k) throw InvalidArgument("label out of range for the readout");
    const Vector z = readout.w.transpose() * h.row(i).transpose() + readout.b;
    const double top = z.maxCoeff();
    const Vector e = (z.array() - top).exp();
    const double sum = e.sum();
    out.loss += (std::log(sum) + top - z[y]) * inv;
    Vector dz = e / sum;
    dz[y] -= 1.0;
    dz *= inv;
    out.dw += h.row(i).transpose() * dz.transpose();
    out.db += dz;
    out.dh.row(i) += (readout.w * dz).transpose();
  }
  return out;
}

double accuracy(const Matrix& h, const Readout& readout, const std::vector<int>& labels,
                const std::vector<int>& nodes) {
  if (nodes.empty()) return 0.0;
  const Matrix z = readout.logits(h);
  int correct = 0;
  for (int i : nodes) {
    Eigen::Index best = 0;
    z.row(i).maxCoeff(&best);
    if (best == labels.at(static_cast<std::size_t>(i))) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(nodes.size());
}

std::vector<int> pseudo_partition(const Matrix& h0, int k, std::uint64_t seed) {
  const Eigen::Index n = h0.rows();
  if (k < 2) throw InvalidArgument("pseudo-partition needs K >= 2");
  if (n < k) throw InvalidArgument("pseudo-partition needs at least K points");
  CounterRng rng(derive_seed(seed, 0x6b6d65616e73ULL));

  auto sqdist = [&](Eigen::Index i, const Vector& c) { return (h0.row(i).transpose() - c).squaredNorm(); };

  // k-means++ seeding.
  std::vector<Vector> centers;
  centers.push_back(h0.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)))).transpose());
  Vector d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2[i] = sqdist(i, centers[0]);
  while (static_cast<int>(centers.size()) < k) {
    const double total = d2.sum();
    if (!(total > 0.0)) {
      throw DegenerateClusterError("fewer than K distinct points; cannot seed " +
                                   std::to_string(k) + " clusters");
    }
    double r = rng.uniform() * total;
    Eigen::Index pick = n - 1;
    for (Eigen::Index i = 0; i < n; ++i) {
      r -= d2[i];
      if (r < 0.0 && d2[i] > 0.0) {
        pick = i;
        break;
      }
    }
    if (!(d2[pick] > 0.0)) {
      for (pick = n - 1; pick > 0 && !(d2[pick] > 0.0); --pick) {}
    }
    centers.push_back(h0.row(pick).transpose());
    for (Eigen::Index i = 0; i < n; ++i) d2[i] = std::min(d2[i], sqdist(i, centers.back()));
  }

  std::vector<int> labels(static_cast<std::size_t>(n), 0);
  for (int iter = 0; iter < 50; ++iter) {
    bool changed = iter == 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = sqdist(i, centers[static_cast<std::size_t>(c)]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (labels[static_cast<std::size_t>(i)] != best) changed = true;
      labels[static_cast<std::size_t>(i)] = best;
    }
    std::vector<Vector> sums(static_cast<std::size_t>(k), Vector::Zero(h0.cols()));
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])] += h0.row(i).transpose();
      ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      const auto cu = static_cast<std::size_t>(c);
      if (counts[cu] > 0) {
        centers[cu] = sums[cu] / counts[cu];
        continue;
      }
      // Re-seed an empty cluster at the point farthest from its own center.
      Eigen::Index far = -1;
      double far_d = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto li = static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]);
        const double d = sqdist(i, centers[li]);
        if (counts[li] > 1 && d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far < 0) throw DegenerateClusterError("cluster " + std::to_string(c) + " stayed empty");
      --counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(far)])];
      labels[static_cast<std::size_t>(far)] = c;
      counts[cu] = 1;
      centers[cu] = h0.row(far).transpose();
      changed = true;
    }
    if (!changed) break;
  }
  return labels;
}

PairSets build_pair_sets(const std::vector<int>& labels, const CandidatePool& pool,
                         int sample_size, std::uint64_t seed) {
  if (static_cast<int>(labels.size()) < pool.n_nodes()) {
    throw InvalidArgument("labels do not cover the pool");
  }
  if (sample_size < 0) throw InvalidArgument("sample size must be nonnegative");
  PairSets all;
  for (std::size_t k = 0; k < pool.size(); ++k) {
    const Edge& e = pool.pair(k);
    const int a = labels[static_cast<std::size_t>(e.src)];
    const int b = labels[static_cast<std::size_t>(e.dst)];
    if (a < 0 || b < 0) continue;
    (a == b ? all.positives : all.negatives).push_back(k);
  }
  CounterRng rng(derive_seed(seed, 0x7061697273ULL));
  auto subsample = [&](std::vector<std::size_t>& v) {
    if (static_cast<int>(v.size()) <= sample_size) return;
    rng.shuffle(v);
    v.resize(static_cast<std::size_t>(sample_size));
    std::sort(v.begin(), v.end());
  };
  subsample(all.positives);
  subsample(all.negatives);
  return all;
}

Vector initial_potentials(const CandidatePool& pool, double u_observed, double u_proposed) {
  Vector u(static_cast<Eigen::Index>(pool.size()));
  for (std::size_t k = 0; k < pool.size(); ++k) {
    u[static_cast<Eigen::Index>(k)] = pool.provenance(k) == Provenance::observed ? u_observed : u_proposed;
  }
  return u;
}

Adam::Adam(Eigen::Index size, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(Vector::Zero(size)), v_(Vector::Zero(size)) {}

void Adam::step(Vector& params, const Vector& grad) {
  if (grad.size() != m_.size() || params.size() != m_.size()) {
    throw InvalidArgument("Adam parameter size mismatch");
  }
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

namespace {

CoupledState axpy(const CoupledState& y, double a, const CoupledState& k) {
  return {y.h + a * k.h, y.u + a * k.u};
}

void accumulate(CoupledState& into, double a, const CoupledState& k) {
  into.h += a * k.h;
  into.u += a * k.u;
}

struct Stepper {
  const NodeTask& task;
  const HgodeParams& params;
  const ForceField& force;

  CoupledState field(double t, const CoupledState& s) const {
    return hgode_field(s, t, params, task.pool, force);
  }
  FieldVjp vjp(double t, const CoupledState& s, const CoupledState& cot) const {
    return hgode_field_vjp(s, t, params, task.pool, force, cot);
  }
};

std::vector<CoupledState> forward_unroll(const Stepper& st, const TrainConfig& config) {
  const double h = config.horizon / config.unroll_steps;
  std::vector<CoupledState> states;
  states.reserve(static_cast<std::size_t>(config.unroll_steps) + 1);
  states.push_back({st.task.features, st.task.u0});
  for (int n = 0; n < config.unroll_steps; ++n) {
    const double t = n * h;
    const CoupledState& y = states.back();
    if (config.unroll_method == FixedMethod::euler) {
      states.push_back(axpy(y, h, st.field(t, y)));
      continue;
    }
    const CoupledState k1 = st.field(t, y);
    const CoupledState k2 = st.field(t + 0.5 * h, axpy(y, 0.5 * h, k1));
    const CoupledState k3 = st.field(t + 0.5 * h, axpy(y, 0.5 * h, k2));
    const CoupledState k4 = st.field(t + h, axpy(y, h, k3));
    CoupledState next = y;
    accumulate(next, h / 6.0, k1);
    accumulate(next, h / 3.0, k2);
    accumulate(next, h / 3.0, k3);
    accumulate(next, h / 6.0, k4);
    states.push_back(std::move(next));
  }
  return states;
}

// Pulls the cotangent of state n+1 back to state n, adding parameter
// gradients into `grad`.
CoupledState reverse_step(const Stepper& st, const TrainConfig& config, int n,
                          const CoupledState& y, const CoupledState& bar, ForceGradients& grad) {
  const double h = config.horizon / config.unroll_steps;
  const double t = n * h;
  CoupledState out = bar;
  if (config.unroll_method == FixedMethod::euler) {
    const CoupledState cot{h * bar.h, h * bar.u};
    FieldVjp v = st.vjp(t, y, cot);
    accumulate(out, 1.0, v.state);
    grad += v.force;
    return out;
  }
  const CoupledState k1 = st.field(t, y);
  const CoupledState s2 = axpy(y, 0.5 * h, k1);
  const CoupledState k2 = st.field(t + 0.5 * h, s2);
  const CoupledState s3 = axpy(y, 0.5 * h, k2);
  const CoupledState k3 = st.field(t + 0.5 * h, s3);
  const CoupledState s4 = axpy(y, h, k3);

  CoupledState kb1{(h / 6.0) * bar.h, (h / 6.0) * bar.u};
  CoupledState kb2{(h / 3.0) * bar.h, (h / 3.0) * bar.u};
  CoupledState kb3 = kb2;
  const CoupledState kb4 = kb1;

  FieldVjp v4 = st.vjp(t + h, s4, kb4);
  accumulate(out, 1.0, v4.state);
  accumulate(kb3, h, v4.state);
  grad += v4.force;

  FieldVjp v3 = st.vjp(t + 0.5 * h, s3, kb3);
  accumulate(out, 1.0, v3.state);
  accumulate(kb2, 0.5 * h, v3.state);
  grad += v3.force;

  FieldVjp v2 = st.vjp(t + 0.5 * h, s2, kb2);
  accumulate(out, 1.0, v2.state);
  accumulate(kb1, 0.5 * h, v2.state);
  grad += v2.force;

  FieldVjp v1 = st.vjp(t, y, kb1);
  accumulate(out, 1.0, v1.state);
  grad += v1.force;
  return out;
}

// Critical force of the undeformed well; the margin is measured against it.
const double kMarginThreshold = 2.0 / (3.0 * std::sqrt(3.0));

}  // namespace

LossGradient unroll_loss(const NodeTask& task, const HgodeParams& params, const ForceField& force,
                         const Readout& readout, const TrainConfig& config, const PairSets& pairs) {
  const Stepper st{task, params, force};
  const std::vector<CoupledState> states = forward_unroll(st, config);
  const Matrix& h_final = states.back().h;

  LossGradient out;
  const TaskLoss tl = task_loss(h_final, readout, task.labels, task.train_nodes);
  const Matrix& h_margin = config.margin_input == MarginInput::final ? h_final : task.features;
  const MarginLoss ml = margin_loss(force_eval(force, h_margin, task.pool), pairs, config.delta,
                                   kMarginThreshold);
  out.loss.task = tl.loss;
  out.loss.margin = ml.loss;
  out.loss.total = tl.loss + config.beta * ml.loss;
  out.readout_w = tl.dw;
  out.readout_b = tl.db;
  out.h_final = h_final;

  ForceGradients grad = force_backward(force, h_margin, task.pool, config.beta * ml.grad);
  CoupledState bar{tl.dh, Vector::Zero(task.u0.size())};
  if (config.margin_input == MarginInput::final) bar.h += grad.h;
  grad.h.setZero();

  for (int n = config.unroll_steps - 1; n >= 0; --n) {
    bar = reverse_step(st, config, n, states[static_cast<std::size_t>(n)], bar, grad);
  }
  out.force = grad.flatten();
  return out;
}

Matrix unroll_features(const NodeTask& task, const HgodeParams& params, const ForceField& force,
                       const TrainConfig& config) {
  const Stepper st{task, params, force};
  return forward_unroll(st, config).back().h;
}

namespace {

Vector join(const Vector& a, const Matrix& w, const Vector& b) {
  Vector out(a.size() + w.size() + b.size());
  out << a, Eigen::Map<const Vector>(w.data(), w.size()), b;
  return out;
}

void split(const Vector& flat, ForceField& force, Readout& readout) {
  const Eigen::Index nf = force.n_parameters();
  force.assign(flat.head(nf));
  Eigen::Map<Vector>(readout.w.data(), readout.w.size()) = flat.segment(nf, readout.w.size());
  readout.b = flat.tail(readout.b.size());
}

void check_task(const NodeTask& task) {
  if (task.features.rows() != task.pool.n_nodes()) throw InvalidArgument("features and pool disagree on N");
  if (task.u0.size() != static_cast<Eigen::Index>(task.pool.size())) {
    throw InvalidArgument("initial potentials do not match the pool");
  }
  if (static_cast<Eigen::Index>(task.labels.size()) != task.features.rows()) {
    throw InvalidArgument("one label per node required (-1 for unlabelled)");
  }
}

}  // namespace

TrainResult train(const NodeTask& task, const HgodeParams& params, const TrainConfig& config) {
  config.validate();
  params.validate();
  check_task(task);
  TrainResult out;
  out.force = init_force(config.hidden, static_cast<int>(task.features.cols()), params.force_scale,
                         derive_seed(config.seed, 1), ScaleCheck::error, params.lambda);
  out.readout = Readout::zeros(task.features.cols(), task.n_classes);
  Vector theta = join(out.force.flatten(), out.readout.w, out.readout.b);
  Adam adam(theta.size(), config.lr);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const PairSets pairs = build_pair_sets(task.labels, task.pool, config.pair_sample_size,
                                           derive_seed(config.seed, 1000 + static_cast<std::uint64_t>(epoch)));
    const LossGradient lg = unroll_loss(task, params, out.force, out.readout, config, pairs);
    if (!std::isfinite(lg.loss.total) || !lg.force.allFinite()) throw NonFiniteLoss(epoch);
    out.history.push_back({epoch, lg.loss.task, lg.loss.margin, lg.loss.total});
    adam.step(theta, join(lg.force, lg.readout_w, lg.readout_b));
    split(theta, out.force, out.readout);
  }
  return out;
}

void write_loss_csv(std::ostream& out, const std::vector<EpochLoss>& history) {
  out << "epoch,task_loss,margin_loss,total\n";
  const auto precision = out.precision(17);
  for (const EpochLoss& e : history) {
    out << e.epoch << ',' << e.task << ',' << e.margin << ',' << e.total << '\n';
  }
  out.precision(precision);
}

const char* bench_model_name(BenchModel model) noexcept {
  switch (model) {
    case BenchModel::mlp: return "mlp";
    case BenchModel::soft_attention: return "sa_ode";
    case BenchModel::hgode: return "hgode";
  }
  return "unknown";
}

namespace {

std::vector<int> all_nodes(const NodeTask& t) {
  std::vector<int> v(static_cast<std::size_t>(t.features.rows()));
  std::iota(v.begin(), v.end(), 0);
  return v;
}

// Node-weighted mean accuracy over a task collection.
template <typename Predict>
double collection_accuracy(const std::vector<NodeTask>& tasks, Predict&& predict) {
  double correct = 0.0;
  double total = 0.0;
  for (const NodeTask& t : tasks) {
    const auto nodes = all_nodes(t);
    correct += predict(t) * static_cast<double>(nodes.size());
    total += static_cast<double>(nodes.size());
  }
  return total > 0.0 ? correct / total : 0.0;
}

Matrix soft_attention_features(const Matrix& h0, double tau_attn, const TrainConfig& config) {
  const OdeField field = make_soft_attention_field(tau_attn, h0.rows(), h0.cols());
  const Vector y0 = Eigen::Map<const Vector>(h0.data(), h0.size());
  const Trajectory tr = integrate_fixed(field, y0, 0.0, config.horizon, config.unroll_steps,
                                        config.unroll_method);
  return Eigen::Map<const Matrix>(tr.final_state().data(), h0.rows(), h0.cols());
}

// Per-node two-layer perceptron ignoring edges.
struct Mlp {
  Matrix w1;
  Vector b1;
  Readout head;

  Matrix hidden(const Matrix& h) const { return ((h * w1).rowwise() + b1.transpose()).array().tanh(); }
};

}  // namespace

BenchResult train_bench_model(BenchModel model, const std::vector<NodeTask>& train_tasks,
                              const std::vector<NodeTask>& validation_tasks,
                              const BenchOptions& options) {
  const TrainConfig& tc = options.train;
  tc.validate();
  if (train_tasks.empty() || validation_tasks.empty()) throw InvalidArgument("empty task collection");
  for (const NodeTask& t : train_tasks) check_task(t);
  for (const NodeTask& t : validation_tasks) check_task(t);
  const Eigen::Index m = train_tasks.front().features.cols();
  const int k = train_tasks.front().n_classes;
  BenchResult out;
  CounterRng order_rng(derive_seed(tc.seed, 0x6f72646572ULL));
  std::vector<std::size_t> order(train_tasks.size());
  std::iota(order.begin(), order.end(), 0);

  if (model == BenchModel::hgode) {
    options.params.validate();
    ForceField force = init_force(tc.hidden, static_cast<int>(m), options.params.force_scale,
                                  derive_seed(tc.seed, 1), ScaleCheck::error, options.params.lambda);
    Readout readout = Readout::zeros(m, k);
    Vector theta = join(force.flatten(), readout.w, readout.b);
    Adam adam(theta.size(), tc.lr);
    auto evaluate = [&] {
      return collection_accuracy(validation_tasks, [&](const NodeTask& t) {
        return accuracy(unroll_features(t, options.params, force, tc), readout, t.labels, all_nodes(t));
      });
    };
    out.validation_accuracy.push_back(evaluate());
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
      order_rng.shuffle(order);
      for (std::size_t g : order) {
        const NodeTask& t = train_tasks[g];
        const PairSets pairs = build_pair_sets(t.labels, t.pool, tc.pair_sample_size,
                                               derive_seed(tc.seed, 7 + g));
        const LossGradient lg = unroll_loss(t, options.params, force, readout, tc, pairs);
        if (!std::isfinite(lg.loss.total)) throw NonFiniteLoss(epoch);
        adam.step(theta, join(lg.force, lg.readout_w, lg.readout_b));
        split(theta, force, readout);
      }
      out.validation_accuracy.push_back(evaluate());
    }
    return out;
  }

  if (model == BenchModel::soft_attention) {
    std::vector<Matrix> train_h, val_h;
    for (const NodeTask& t : train_tasks) train_h.push_back(soft_attention_features(t.features, options.tau_attn, tc));
    for (const NodeTask& t : validation_tasks) val_h.push_back(soft_attention_features(t.features, options.tau_attn, tc));
    Readout readout = Readout::zeros(m, k);
    Vector theta = join(Vector(), readout.w, readout.b);
    Adam adam(theta.size(), tc.lr);
    auto evaluate = [&] {
      double correct = 0.0, total = 0.0;
      for (std::size_t g = 0; g < validation_tasks.size(); ++g) {
        const auto nodes = all_nodes(validation_tasks[g]);
        correct += accuracy(val_h[g], readout, validation_tasks[g].labels, nodes) * nodes.size();
        total += static_cast<double>(nodes.size());
      }
      return correct / total;
    };
    out.validation_accuracy.push_back(evaluate());
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
      order_rng.shuffle(order);
      for (std::size_t g : order) {
        const NodeTask& t = train_tasks[g];
        const TaskLoss tl = task_loss(train_h[g], readout, t.labels, all_nodes(t));
        if (!std::isfinite(tl.loss)) throw NonFiniteLoss(epoch);
        adam.step(theta, join(Vector(), tl.dw, tl.db));
        Eigen::Map<Vector>(readout.w.data(), readout.w.size()) = theta.head(readout.w.size());
        readout.b = theta.tail(readout.b.size());
      }
      out.validation_accuracy.push_back(evaluate());
    }
    return out;
  }

  // Multilayer perceptron.
  CounterRng init_rng(derive_seed(tc.seed, 2));
  Mlp mlp;
  const int width = options.mlp_hidden;
  mlp.w1.resize(m, width);
  const double r = 1.0 / std::sqrt(static_cast<double>(m));
  for (Eigen::Index j = 0; j < mlp.w1.cols(); ++j) {
    for (Eigen::Index i = 0; i < mlp.w1.rows(); ++i) mlp.w1(i, j) = init_rng.uniform(-r, r);
  }
  mlp.b1 = Vector::Zero(width);
  mlp.head = Readout::zeros(width, k);
  auto flat = [&] {
    Vector v(mlp.w1.size() + mlp.b1.size() + mlp.head.w.size() + mlp.head.b.size());
    v << Eigen::Map<const Vector>(mlp.w1.data(), mlp.w1.size()), mlp.b1,
        Eigen::Map<const Vector>(mlp.head.w.data(), mlp.head.w.size()), mlp.head.b;
    return v;
  };
  auto unflat = [&](const Vector& v) {
    Eigen::Index o = 0;
    Eigen::Map<Vector>(mlp.w1.data(), mlp.w1.size()) = v.segment(o, mlp.w1.size());
    o += mlp.w1.size();
    mlp.b1 = v.segment(o, mlp.b1.size());
    o += mlp.b1.size();
    Eigen::Map<Vector>(mlp.head.w.data(), mlp.head.w.size()) = v.segment(o, mlp.head.w.size());
    o += mlp.head.w.size();
    mlp.head.b = v.segment(o, mlp.head.b.size());
  };
  Vector theta = flat();
  Adam adam(theta.size(), tc.lr);
  auto evaluate = [&] {
    return collection_accuracy(validation_tasks, [&](const NodeTask& t) {
      return accuracy(mlp.hidden(t.features), mlp.head, t.labels, all_nodes(t));
    });
  };
  out.validation_accuracy.push_back(evaluate());
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    order_rng.shuffle(order);
    for (std::size_t g : order) {
      const NodeTask& t = train_tasks[g];
      const Matrix z = mlp.hidden(t.features);
      const TaskLoss tl = task_loss(z, mlp.head, t.labels, all_nodes(t));
      if (!std::isfinite(tl.loss)) throw NonFiniteLoss(epoch);
      const Matrix dpre = tl.dh.array() * (1.0 - z.array().square());
      const Matrix dw1 = t.features.transpose() * dpre;
      const Vector db1 = dpre.colwise().sum().transpose();
      Vector grad(theta.size());
      grad << Eigen::Map<const Vector>(dw1.data(), dw1.size()), db1,
          Eigen::Map<const Vector>(tl.dw.data(), tl.dw.size()), tl.db;
      adam.step(theta, grad);
      unflat(theta);
    }
    out.validation_accuracy.push_back(evaluate());
  }
  return out;
}

}  // namespace hgode
