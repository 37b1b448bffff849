#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace hgode {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Directed, 0-indexed node pair.
struct Edge {
  int src = 0;
  int dst = 0;

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Directed graph with optional nonnegative edge weights. Edges are kept
// sorted and unique; self-loops are rejected (they enter through the
// epsilon term of row_normalize instead).
class Graph {
 public:
  Graph() = default;
  Graph(int n_nodes, std::vector<Edge> edges, std::vector<double> weights = {});

  int n_nodes() const noexcept { return n_nodes_; }
  std::size_t n_edges() const noexcept { return edges_.size(); }
  std::span<const Edge> edges() const noexcept { return edges_; }
  bool weighted() const noexcept { return !weights_.empty(); }
  double weight(std::size_t k) const noexcept { return weights_.empty() ? 1.0 : weights_[k]; }
  bool has_edge(int src, int dst) const;

  // Out-neighbour lists, one per node, ascending.
  std::vector<std::vector<int>> out_neighbors() const;

  // Dense N x N weighted adjacency.
  Matrix adjacency() const;

 private:
  int n_nodes_ = 0;
  std::vector<Edge> edges_;
  std::vector<double> weights_;
};

// Nonnegative square matrix whose rows sum to one. Only constructible through
// row_normalize or the validating factory, so holders can rely on the
// invariant.
class RowStochasticMatrix {
 public:
  static constexpr double kRowSumTolerance = 1e-12;

  // Validates nonnegativity and unit row sums (within kRowSumTolerance).
  static RowStochasticMatrix from_matrix(Matrix p);

  const Matrix& matrix() const noexcept { return p_; }
  Eigen::Index size() const noexcept { return p_.rows(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return p_(i, j); }

 private:
  friend RowStochasticMatrix row_normalize(const Matrix&, double);
  friend RowStochasticMatrix soft_attention_matrix(const Matrix&, double);
  explicit RowStochasticMatrix(Matrix p) : p_(std::move(p)) {}

  Matrix p_;
};

// P = D^-1 (A + epsilon I). Throws ZeroRowError when a row of A + epsilon I
// sums to zero and InvalidArgument for negative or non-square input.
RowStochasticMatrix row_normalize(const Matrix& a, double epsilon);

// {(i, j) : A_ij > threshold}, row-major order.
std::vector<Edge> support(const Matrix& a, double threshold);

struct ConnectivityReport {
  bool is_strongly_connected = false;
  int n_components = 0;
  std::vector<int> component_labels;
};

// Tarjan's strongly connected components.
ConnectivityReport strong_connectivity(std::span<const Edge> edges, int n_nodes);

enum class Provenance : std::uint8_t { observed = 0, two_hop = 1, lap_rw = 2, random = 3 };

const char* provenance_name(Provenance p) noexcept;

// Frozen, lexicographically sorted set of directed candidate pairs. Slot k
// always denotes the same pair for the lifetime of the pool.
class CandidatePool {
 public:
  CandidatePool() = default;
  CandidatePool(int n_nodes, std::vector<Edge> pairs, std::vector<Provenance> provenance);

  int n_nodes() const noexcept { return n_nodes_; }
  std::size_t size() const noexcept { return pairs_.size(); }
  bool empty() const noexcept { return pairs_.empty(); }
  std::span<const Edge> pairs() const noexcept { return pairs_; }
  const Edge& pair(std::size_t slot) const { return pairs_[slot]; }
  Provenance provenance(std::size_t slot) const { return provenance_[slot]; }
  std::optional<std::size_t> slot_of(int src, int dst) const;
  std::size_t count(Provenance p) const;

 private:
  static std::uint64_t key(int src, int dst) noexcept {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(src)) << 32) |
           static_cast<std::uint32_t>(dst);
  }

  int n_nodes_ = 0;
  std::vector<Edge> pairs_;
  std::vector<Provenance> provenance_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
};

struct PoolOptions {
  int k_2hop = 0;
  int k_lap = 0;
  double random_ratio = 0.0;
  int walk_length = 4;
  double epsilon = 1e-3;  // self-loop used for the random-walk operator
  std::size_t hard_cap = 5'000'000;
};

// Observed edges, plus per-node 2-hop completions (most shared paths first,
// ties by index), plus nodes reached by short random walks on P, plus
// uniformly sampled ordered pairs. Proposals never duplicate an existing
// out-edge; provenance records the first source that contributed a pair.
CandidatePool build_candidate_pool(const Graph& graph, const PoolOptions& options,
                                   std::uint64_t seed);

// Every ordered pair (i, j), i != j.
CandidatePool dense_pool(int n_nodes);

// Edge-list text format:
//   n_nodes=<N>
//   # comment
//   i j [w]
Graph read_edge_list(std::istream& in);
Graph load_edge_list(const std::string& path);
void write_edge_list(std::ostream& out, const Graph& graph);
void save_edge_list(const std::string& path, const Graph& graph);

}  // namespace hgode
