#include "hgode/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "hgode/errors.hpp"
#include "hgode/rng.hpp"

namespace hgode {

Graph::Graph(int n_nodes, std::vector<Edge> edges, std::vector<double> weights)
    : n_nodes_(n_nodes) {
  if (n_nodes <= 0) throw InvalidArgument("graph needs at least one node");
  if (!weights.empty() && weights.size() != edges.size()) {
    throw InvalidArgument("edge weight count does not match edge count");
  }
  std::vector<std::size_t> order(edges.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return edges[a] < edges[b]; });
  edges_.reserve(edges.size());
  if (!weights.empty()) weights_.reserve(weights.size());
  for (std::size_t k : order) {
    const Edge& e = edges[k];
    if (e.src < 0 || e.dst < 0 || e.src >= n_nodes || e.dst >= n_nodes) {
      throw InvalidArgument("edge (" + std::to_string(e.src) + "," + std::to_string(e.dst) +
                            ") out of range for " + std::to_string(n_nodes) + " nodes");
    }
    if (e.src == e.dst) {
      throw InvalidArgument("self-loop on node " + std::to_string(e.src));
    }
    if (!weights.empty() && !(weights[k] >= 0.0)) {
      throw InvalidArgument("edge weights must be nonnegative");
    }
    if (!edges_.empty() && edges_.back() == e) continue;
    edges_.push_back(e);
    if (!weights.empty()) weights_.push_back(weights[k]);
  }
}

bool Graph::has_edge(int src, int dst) const {
  return std::binary_search(edges_.begin(), edges_.end(), Edge{src, dst});
}

std::vector<std::vector<int>> Graph::out_neighbors() const {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(n_nodes_));
  for (const Edge& e : edges_) out[static_cast<std::size_t>(e.src)].push_back(e.dst);
  return out;
}

Matrix Graph::adjacency() const {
  Matrix a = Matrix::Zero(n_nodes_, n_nodes_);
  for (std::size_t k = 0; k < edges_.size(); ++k) a(edges_[k].src, edges_[k].dst) = weight(k);
  return a;
}

RowStochasticMatrix RowStochasticMatrix::from_matrix(Matrix p) {
  if (p.rows() != p.cols()) throw InvalidArgument("row-stochastic matrix must be square");
  if ((p.array() < 0.0).any() || !p.allFinite()) {
    throw InvalidArgument("row-stochastic matrix must be finite and nonnegative");
  }
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    if (std::abs(p.row(i).sum() - 1.0) > kRowSumTolerance) {
      throw InvalidArgument("row " + std::to_string(i) + " does not sum to one");
    }
  }
  return RowStochasticMatrix(std::move(p));
}

RowStochasticMatrix row_normalize(const Matrix& a, double epsilon) {
  if (a.rows() != a.cols()) throw InvalidArgument("adjacency must be square");
  if (epsilon < 0.0) throw InvalidArgument("epsilon must be nonnegative");
  if ((a.array() < 0.0).any()) throw InvalidArgument("adjacency must be nonnegative");
  Matrix p = a;
  p.diagonal().array() += epsilon;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double d = p.row(i).sum();
    if (!(d > 0.0)) {
      throw ZeroRowError("row " + std::to_string(i) + " of A + eps*I has zero sum");
    }
    p.row(i) /= d;
  }
  return RowStochasticMatrix(std::move(p));
}

std::vector<Edge> support(const Matrix& a, double threshold) {
  if (threshold < 0.0) throw InvalidArgument("support threshold must be nonnegative");
  std::vector<Edge> out;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      if (a(i, j) > threshold) out.push_back({static_cast<int>(i), static_cast<int>(j)});
    }
  }
  return out;
}

ConnectivityReport strong_connectivity(std::span<const Edge> edges, int n_nodes) {
  if (n_nodes < 0) throw InvalidArgument("negative node count");
  const auto n = static_cast<std::size_t>(n_nodes);
  std::vector<std::vector<int>> adj(n);
  for (const Edge& e : edges) {
    if (e.src < 0 || e.dst < 0 || e.src >= n_nodes || e.dst >= n_nodes) {
      throw InvalidArgument("edge index out of range");
    }
    adj[static_cast<std::size_t>(e.src)].push_back(e.dst);
  }

  // Iterative Tarjan.
  constexpr int kUnvisited = -1;
  std::vector<int> index(n, kUnvisited), low(n, 0), label(n, -1);
  std::vector<bool> on_stack(n, false);
  std::vector<int> stack;
  std::vector<std::pair<int, std::size_t>> call;  // (node, next child position)
  int next_index = 0;
  int n_components = 0;

  for (int root = 0; root < n_nodes; ++root) {
    if (index[static_cast<std::size_t>(root)] != kUnvisited) continue;
    call.push_back({root, 0});
    while (!call.empty()) {
      auto& [v, child] = call.back();
      const auto vu = static_cast<std::size_t>(v);
      if (child == 0 && index[vu] == kUnvisited) {
        index[vu] = low[vu] = next_index++;
        stack.push_back(v);
        on_stack[vu] = true;
      }
      if (child < adj[vu].size()) {
        const int w = adj[vu][child++];
        const auto wu = static_cast<std::size_t>(w);
        if (index[wu] == kUnvisited) {
          call.push_back({w, 0});
        } else if (on_stack[wu]) {
          low[vu] = std::min(low[vu], index[wu]);
        }
        continue;
      }
      if (low[vu] == index[vu]) {
        int w = -1;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[static_cast<std::size_t>(w)] = false;
          label[static_cast<std::size_t>(w)] = n_components;
        } while (w != v);
        ++n_components;
      }
      const int finished = v;
      call.pop_back();
      if (!call.empty()) {
        const auto parent = static_cast<std::size_t>(call.back().first);
        low[parent] = std::min(low[parent], low[static_cast<std::size_t>(finished)]);
      }
    }
  }

  ConnectivityReport report;
  report.n_components = n_components;
  report.is_strongly_connected = n_components == 1;
  report.component_labels = std::move(label);
  return report;
}

const char* provenance_name(Provenance p) noexcept {
  switch (p) {
    case Provenance::observed: return "observed";
    case Provenance::two_hop: return "two_hop";
    case Provenance::lap_rw: return "lap_rw";
    case Provenance::random: return "random";
  }
  return "unknown";
}

CandidatePool::CandidatePool(int n_nodes, std::vector<Edge> pairs,
                             std::vector<Provenance> provenance)
    : n_nodes_(n_nodes) {
  if (pairs.size() != provenance.size()) {
    throw InvalidArgument("provenance count does not match pair count");
  }
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return pairs[a] < pairs[b]; });
  pairs_.reserve(pairs.size());
  provenance_.reserve(pairs.size());
  index_.reserve(pairs.size());
  for (std::size_t k : order) {
    const Edge& e = pairs[k];
    if (e.src == e.dst) throw InvalidArgument("candidate pool cannot hold self-pairs");
    if (e.src < 0 || e.dst < 0 || e.src >= n_nodes || e.dst >= n_nodes) {
      throw InvalidArgument("candidate pair out of range");
    }
    if (!pairs_.empty() && pairs_.back() == e) {
      throw InvalidArgument("duplicate candidate pair (" + std::to_string(e.src) + "," +
                            std::to_string(e.dst) + ")");
    }
    index_.emplace(key(e.src, e.dst), pairs_.size());
    pairs_.push_back(e);
    provenance_.push_back(provenance[k]);
  }
}

std::optional<std::size_t> CandidatePool::slot_of(int src, int dst) const {
  const auto it = index_.find(key(src, dst));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t CandidatePool::count(Provenance p) const {
  return static_cast<std::size_t>(std::count(provenance_.begin(), provenance_.end(), p));
}

namespace {

// Samples `count` distinct ordered pairs (i != j) uniformly. Pair index
// r in [0, N(N-1)) maps to i = r / (N-1), j = r % (N-1) skipping the diagonal.
std::vector<Edge> sample_ordered_pairs(int n, std::uint64_t count, CounterRng& rng) {
  const std::uint64_t total =
      static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(n > 0 ? n - 1 : 0);
  count = std::min(count, total);
  std::vector<std::uint64_t> chosen;
  if (count * 2 >= total) {
    chosen.resize(total);
    for (std::uint64_t r = 0; r < total; ++r) chosen[r] = r;
    rng.shuffle(chosen);
    chosen.resize(count);
  } else {
    // Floyd's algorithm.
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(count * 2);
    for (std::uint64_t j = total - count; j < total; ++j) {
      const std::uint64_t t = rng.below(j + 1);
      const std::uint64_t pick = seen.contains(t) ? j : t;
      seen.insert(pick);
      chosen.push_back(pick);
    }
  }
  std::vector<Edge> out;
  out.reserve(chosen.size());
  const auto m = static_cast<std::uint64_t>(n - 1);
  for (std::uint64_t r : chosen) {
    const auto i = static_cast<int>(r / m);
    auto j = static_cast<int>(r % m);
    if (j >= i) ++j;
    out.push_back({i, j});
  }
  return out;
}

}  // namespace

CandidatePool build_candidate_pool(const Graph& graph, const PoolOptions& options,
                                   std::uint64_t seed) {
  if (options.k_2hop < 0 || options.k_lap < 0 || options.walk_length < 0) {
    throw InvalidArgument("pool budgets must be nonnegative");
  }
  if (options.random_ratio < 0.0 || options.random_ratio > 1.0) {
    throw InvalidArgument("random_ratio must lie in [0, 1]");
  }
  const int n = graph.n_nodes();
  const auto nn = static_cast<std::uint64_t>(n);
  const auto n_random = static_cast<std::uint64_t>(
      std::floor(options.random_ratio * static_cast<double>(nn * (nn - 1))));
  const std::uint64_t requested =
      graph.n_edges() + nn * static_cast<std::uint64_t>(options.k_2hop + options.k_lap) +
      n_random;
  if (requested > options.hard_cap) {
    throw PoolOverflowError("requested pool of up to " + std::to_string(requested) +
                            " pairs exceeds the hard cap of " +
                            std::to_string(options.hard_cap));
  }

  std::map<Edge, Provenance> chosen;
  for (const Edge& e : graph.edges()) chosen.emplace(e, Provenance::observed);

  const auto neighbors = graph.out_neighbors();

  if (options.k_2hop > 0) {
    std::vector<int> paths(static_cast<std::size_t>(n), 0);
    std::vector<int> touched;
    for (int i = 0; i < n; ++i) {
      touched.clear();
      for (int mid : neighbors[static_cast<std::size_t>(i)]) {
        for (int j : neighbors[static_cast<std::size_t>(mid)]) {
          if (j == i) continue;
          if (paths[static_cast<std::size_t>(j)]++ == 0) touched.push_back(j);
        }
      }
      std::vector<std::pair<int, int>> ranked;  // (-paths, node)
      for (int j : touched) {
        if (!graph.has_edge(i, j)) ranked.push_back({-paths[static_cast<std::size_t>(j)], j});
        paths[static_cast<std::size_t>(j)] = 0;
      }
      std::sort(ranked.begin(), ranked.end());
      const auto take = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(options.k_2hop));
      for (std::size_t r = 0; r < take; ++r) chosen.emplace(Edge{i, ranked[r].second}, Provenance::two_hop);
    }
  }

  CounterRng rng(derive_seed(seed, 0x706f6f6cULL));

  if (options.k_lap > 0 && options.walk_length > 0) {
    const Matrix p = row_normalize(graph.adjacency(), options.epsilon).matrix();
    // Cumulative rows for inverse-CDF sampling of walk transitions.
    Matrix cdf = p;
    for (Eigen::Index i = 0; i < cdf.rows(); ++i) {
      for (Eigen::Index j = 1; j < cdf.cols(); ++j) cdf(i, j) += cdf(i, j - 1);
    }
    auto step = [&](int from) {
      const double u = rng.uniform() * cdf(from, n - 1);
      int j = 0;
      while (j < n - 1 && cdf(from, j) <= u) ++j;
      return j;
    };
    const int max_walks = 4 * options.k_lap;
    for (int i = 0; i < n; ++i) {
      std::vector<int> found;
      for (int w = 0; w < max_walks && static_cast<int>(found.size()) < options.k_lap; ++w) {
        int at = i;
        for (int s = 0; s < options.walk_length; ++s) {
          at = step(at);
          if (at == i || graph.has_edge(i, at)) continue;
          if (std::find(found.begin(), found.end(), at) != found.end()) continue;
          found.push_back(at);
          if (static_cast<int>(found.size()) == options.k_lap) break;
        }
      }
      for (int j : found) chosen.emplace(Edge{i, j}, Provenance::lap_rw);
    }
  }

  if (n_random > 0) {
    for (const Edge& e : sample_ordered_pairs(n, n_random, rng)) {
      chosen.emplace(e, Provenance::random);
    }
  }

  std::vector<Edge> pairs;
  std::vector<Provenance> provenance;
  pairs.reserve(chosen.size());
  provenance.reserve(chosen.size());
  for (const auto& [e, p] : chosen) {
    pairs.push_back(e);
    provenance.push_back(p);
  }
  return CandidatePool(n, std::move(pairs), std::move(provenance));
}

CandidatePool dense_pool(int n_nodes) {
  std::vector<Edge> pairs;
  for (int i = 0; i < n_nodes; ++i) {
    for (int j = 0; j < n_nodes; ++j) {
      if (i != j) pairs.push_back({i, j});
    }
  }
  std::vector<Provenance> provenance(pairs.size(), Provenance::random);
  return CandidatePool(n_nodes, std::move(pairs), std::move(provenance));
}

Graph read_edge_list(std::istream& in) {
  std::string line;
  int line_no = 0;
  int n_nodes = -1;
  std::vector<Edge> edges;
  std::vector<double> weights;
  bool any_weight = false;
  bool any_unweighted = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const std::string body = line.substr(first);
    if (body.rfind("n_nodes=", 0) == 0) {
      if (n_nodes >= 0) throw ParseError(line_no, "duplicate n_nodes header");
      try {
        n_nodes = std::stoi(body.substr(8));
      } catch (const std::exception&) {
        throw ParseError(line_no, "malformed n_nodes header");
      }
      continue;
    }
    if (n_nodes < 0) throw ParseError(line_no, "edge before n_nodes header");
    std::istringstream fields(body);
    long long i = 0, j = 0;
    if (!(fields >> i >> j)) throw ParseError(line_no, "expected 'i j [w]'");
    double w = 1.0;
    if (fields >> w) {
      any_weight = true;
    } else {
      any_unweighted = true;
    }
    std::string extra;
    if (fields.clear(), fields >> extra) throw ParseError(line_no, "trailing tokens");
    if (i < 0 || j < 0 || i >= n_nodes || j >= n_nodes) {
      throw ParseError(line_no, "node index out of range");
    }
    edges.push_back({static_cast<int>(i), static_cast<int>(j)});
    weights.push_back(w);
  }
  if (n_nodes < 0) throw ParseError(line_no, "missing n_nodes header");
  if (any_weight && any_unweighted) {
    throw ParseError(line_no, "mixed weighted and unweighted edges");
  }
  if (!any_weight) weights.clear();
  return Graph(n_nodes, std::move(edges), std::move(weights));
}

Graph load_edge_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return read_edge_list(in);
}

void write_edge_list(std::ostream& out, const Graph& graph) {
  out << "n_nodes=" << graph.n_nodes() << '\n';
  const auto precision = out.precision(17);
  const auto edges = graph.edges();
  for (std::size_t k = 0; k < edges.size(); ++k) {
    out << edges[k].src << ' ' << edges[k].dst;
    if (graph.weighted()) out << ' ' << graph.weight(k);
    out << '\n';
  }
  out.precision(precision);
}

void save_edge_list(const std::string& path, const Graph& graph) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  write_edge_list(out, graph);
}

}  // namespace hgode
