#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "hgode/dynamics.hpp"
#include "hgode/force.hpp"
#include "hgode/graph.hpp"
#include "hgode/ode.hpp"

namespace hgode {

// Pool slots of compatible (same cluster) and incompatible pairs.
struct PairSets {
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
};

// Which features the margin term scores: the unroll's input or its output.
enum class MarginInput { initial, final };

struct TrainConfig {
  double delta = 0.1;
  double beta = 0.1;
  double lr = 1e-3;
  int epochs = 200;
  int unroll_steps = 20;
  FixedMethod unroll_method = FixedMethod::rk4;
  double horizon = 1.0;
  int pair_sample_size = 4096;
  int hidden = 32;
  MarginInput margin_input = MarginInput::final;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Readout {
  Matrix w;  // m x K
  Vector b;  // K

  static Readout zeros(Eigen::Index feature_dim, int n_classes);
  Matrix logits(const Matrix& h) const;
};

struct MarginLoss {
  double loss = 0.0;
  Vector grad;  // dL/dF per pool slot
};

MarginLoss margin_loss(const Vector& f, const PairSets& pairs, double delta, double fcrit);

struct TaskLoss {
  double loss = 0.0;
  Matrix dh;
  Matrix dw;
  Vector db;
};

// Mean cross-entropy over `nodes`.
TaskLoss task_loss(const Matrix& h, const Readout& readout, const std::vector<int>& labels,
                   const std::vector<int>& nodes);

// Fraction of `nodes` whose argmax logit matches the label (ties go to the
// lowest class index).
double accuracy(const Matrix& h, const Readout& readout, const std::vector<int>& labels,
                const std::vector<int>& nodes);

// k-means with k-means++ seeding, at most 50 Lloyd iterations.
std::vector<int> pseudo_partition(const Matrix& h0, int k, std::uint64_t seed);

// Slots whose endpoints are both labelled (label >= 0), split by label
// equality and subsampled without replacement to at most sample_size each.
PairSets build_pair_sets(const std::vector<int>& labels, const CandidatePool& pool,
                         int sample_size, std::uint64_t seed);

// Observed pool edges start at u_observed, proposals at u_proposed.
Vector initial_potentials(const CandidatePool& pool, double u_observed, double u_proposed);

class Adam {
 public:
  Adam(Eigen::Index size, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(Vector& params, const Vector& grad);
  double lr() const noexcept { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  Vector m_, v_;
  long t_ = 0;
};

// One labelled graph with its frozen pool and starting potentials.
struct NodeTask {
  Matrix features;
  std::vector<int> labels;       // -1 for unlabelled nodes
  std::vector<int> train_nodes;  // nodes entering the task loss
  CandidatePool pool;
  Vector u0;
  int n_classes = 2;
};

struct LossBreakdown {
  double task = 0.0;
  double margin = 0.0;
  double total = 0.0;
};

struct LossGradient {
  LossBreakdown loss;
  Vector force;  // ordered as ForceField::flatten
  Matrix readout_w;
  Vector readout_b;
  Matrix h_final;
};

// Forward unroll, losses and exact reverse sweep for a single task.
LossGradient unroll_loss(const NodeTask& task, const HgodeParams& params, const ForceField& force,
                         const Readout& readout, const TrainConfig& config, const PairSets& pairs);

// Features at the end of the training unroll.
Matrix unroll_features(const NodeTask& task, const HgodeParams& params, const ForceField& force,
                       const TrainConfig& config);

struct EpochLoss {
  int epoch = 0;
  double task = 0.0;
  double margin = 0.0;
  double total = 0.0;
};

struct TrainResult {
  ForceField force;
  Readout readout;
  std::vector<EpochLoss> history;
};

// Adam on force and readout parameters. Throws NonFiniteLoss.
TrainResult train(const NodeTask& task, const HgodeParams& params, const TrainConfig& config);

void write_loss_csv(std::ostream& out, const std::vector<EpochLoss>& history);

// Graph-collection training for the perturbation benchmark. Each epoch takes
// one Adam step per training graph (shuffled); accuracy is reported on the
// validation graphs before training and after every epoch.
enum class BenchModel { mlp, soft_attention, hgode };

const char* bench_model_name(BenchModel model) noexcept;

struct BenchOptions {
  TrainConfig train;
  HgodeParams params;
  double tau_attn = 1.0;  // soft-attention baseline temperature
  int mlp_hidden = 32;
};

struct BenchResult {
  std::vector<double> validation_accuracy;  // epochs + 1 entries
};

BenchResult train_bench_model(BenchModel model, const std::vector<NodeTask>& train_tasks,
                              const std::vector<NodeTask>& validation_tasks,
                              const BenchOptions& options);

}  // namespace hgode
