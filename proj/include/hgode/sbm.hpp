#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "hgode/graph.hpp"

namespace hgode {

struct SbmSpec {
  std::vector<int> block_sizes{50, 50};
  double p_in = 0.3;
  double p_out = 0.02;
  std::uint64_t seed = 0;
  bool allow_disassortative = false;  // permits p_in <= p_out

  int n_nodes() const;
  int n_blocks() const noexcept { return static_cast<int>(block_sizes.size()); }
  void validate() const;
};

struct SbmSample {
  Graph graph;
  std::vector<int> labels;
};

// One Bernoulli draw per unordered pair, stored in both directions.
SbmSample sample_sbm(const SbmSpec& spec);

// K x m means. Two blocks: +separation and -separation on every coordinate.
// More blocks: block k is +separation on coordinates d with d % K == k and
// -separation elsewhere.
Matrix block_means(int n_blocks, int feature_dim, double separation);

struct FeatureSpec {
  Matrix means;
  double sigma = 0.5;
  std::uint64_t seed = 0;
};

// h_i = means[label_i] + sigma * N(0, I).
Matrix init_features(const std::vector<int>& labels, const FeatureSpec& spec);

struct GraphSample {
  Graph graph;
  std::vector<int> labels;
  Matrix features;
  std::uint64_t seed = 0;
};

struct PerturbationSplit {
  double sigma = 0.0;
  std::vector<GraphSample> train;
  std::vector<GraphSample> validation;
};

// For each sigma, n_graphs independent SBM draws with noisy block-mean
// features; the first round(split * n_graphs) go to training.
std::vector<PerturbationSplit> perturbation_dataset(int n_graphs, const SbmSpec& spec,
                                                    double separation, int feature_dim,
                                                    const std::vector<double>& sigmas,
                                                    double split, std::uint64_t seed);

void write_matrix_csv(std::ostream& out, const Matrix& m);

// Writes edge lists, feature/label CSVs and manifest.json under `dir`.
void write_dataset(const std::string& dir, const std::vector<PerturbationSplit>& splits);

}  // namespace hgode
