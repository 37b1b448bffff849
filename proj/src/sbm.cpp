#include "hgode/sbm.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>

#include "json.hpp"

#include "hgode/errors.hpp"
#include "hgode/rng.hpp"

namespace hgode {

int SbmSpec::n_nodes() const {
  return std::accumulate(block_sizes.begin(), block_sizes.end(), 0);
}

void SbmSpec::validate() const {
  if (block_sizes.empty()) throw InvalidArgument("SBM needs at least one block");
  for (int n : block_sizes) {
    if (n <= 0) throw InvalidArgument("block sizes must be positive");
  }
  if (!(p_in >= 0.0 && p_in <= 1.0 && p_out >= 0.0 && p_out <= 1.0)) {
    throw InvalidArgument("edge probabilities must lie in [0, 1]");
  }
  if (!allow_disassortative && p_in <= p_out && !(p_in == 0.0 && p_out == 0.0) &&
      !(p_in == 1.0 && p_out == 1.0)) {
    throw InvalidArgument("p_in must exceed p_out unless allow_disassortative is set");
  }
}

SbmSample sample_sbm(const SbmSpec& spec) {
  spec.validate();
  const int n = spec.n_nodes();
  SbmSample out;
  out.labels.reserve(static_cast<std::size_t>(n));
  for (int b = 0; b < spec.n_blocks(); ++b) {
    out.labels.insert(out.labels.end(), static_cast<std::size_t>(spec.block_sizes[static_cast<std::size_t>(b)]), b);
  }
  CounterRng rng(derive_seed(spec.seed, 0x73626dULL));
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double p = out.labels[static_cast<std::size_t>(i)] == out.labels[static_cast<std::size_t>(j)]
                           ? spec.p_in
                           : spec.p_out;
      if (rng.bernoulli(p)) {
        edges.push_back({i, j});
        edges.push_back({j, i});
      }
    }
  }
  out.graph = Graph(n, std::move(edges));
  return out;
}

Matrix block_means(int n_blocks, int feature_dim, double separation) {
  if (n_blocks < 1 || feature_dim < 1) throw InvalidArgument("need positive block count and dimension");
  Matrix means(n_blocks, feature_dim);
  if (n_blocks == 2) {
    means.row(0).setConstant(separation);
    means.row(1).setConstant(-separation);
    return means;
  }
  for (int k = 0; k < n_blocks; ++k) {
    for (int d = 0; d < feature_dim; ++d) means(k, d) = d % n_blocks == k ? separation : -separation;
  }
  return means;
}

Matrix init_features(const std::vector<int>& labels, const FeatureSpec& spec) {
  if (!(spec.sigma >= 0.0)) throw InvalidArgument("sigma must be nonnegative");
  const auto n = static_cast<Eigen::Index>(labels.size());
  const Eigen::Index m = spec.means.cols();
  Matrix h(n, m);
  CounterRng rng(derive_seed(spec.seed, 0x66656174ULL));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = labels[static_cast<std::size_t>(i)];
    if (c < 0 || c >= spec.means.rows()) throw InvalidArgument("label has no block mean");
    for (Eigen::Index d = 0; d < m; ++d) h(i, d) = spec.means(c, d) + spec.sigma * rng.normal();
  }
  return h;
}

std::vector<PerturbationSplit> perturbation_dataset(int n_graphs, const SbmSpec& spec,
                                                    double separation, int feature_dim,
                                                    const std::vector<double>& sigmas,
                                                    double split, std::uint64_t seed) {
  if (n_graphs < 1) throw InvalidArgument("need at least one graph");
  if (!(split > 0.0 && split < 1.0)) throw InvalidArgument("split must lie in (0, 1)");
  if (sigmas.empty()) throw InvalidArgument("sigma list is empty");
  spec.validate();
  const auto n_train = static_cast<int>(std::lround(split * n_graphs));
  const Matrix means = block_means(spec.n_blocks(), feature_dim, separation);
  std::vector<PerturbationSplit> out;
  for (std::size_t s = 0; s < sigmas.size(); ++s) {
    PerturbationSplit part;
    part.sigma = sigmas[s];
    for (int g = 0; g < n_graphs; ++g) {
      const std::uint64_t gseed = derive_seed(derive_seed(seed, s), static_cast<std::uint64_t>(g));
      SbmSpec gspec = spec;
      gspec.seed = gseed;
      SbmSample sample = sample_sbm(gspec);
      GraphSample item;
      item.features = init_features(sample.labels, {means, sigmas[s], gseed});
      item.graph = std::move(sample.graph);
      item.labels = std::move(sample.labels);
      item.seed = gseed;
      (g < n_train ? part.train : part.validation).push_back(std::move(item));
    }
    out.push_back(std::move(part));
  }
  return out;
}

void write_matrix_csv(std::ostream& out, const Matrix& m) {
  const auto precision = out.precision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out << ',';
      out << m(i, j);
    }
    out << '\n';
  }
  out.precision(precision);
}

void write_dataset(const std::string& dir, const std::vector<PerturbationSplit>& splits) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json manifest = nlohmann::json::array();
  for (std::size_t s = 0; s < splits.size(); ++s) {
    const auto emit = [&](const std::vector<GraphSample>& items, const char* tag) {
      for (std::size_t g = 0; g < items.size(); ++g) {
        const std::string stem = "s" + std::to_string(s) + "_" + tag + "_" + std::to_string(g);
        save_edge_list((fs::path(dir) / (stem + ".edges")).string(), items[g].graph);
        std::ofstream feat(fs::path(dir) / (stem + "_features.csv"));
        std::ofstream lab(fs::path(dir) / (stem + "_labels.csv"));
        if (!feat || !lab) throw IoError("cannot write dataset files under " + dir);
        write_matrix_csv(feat, items[g].features);
        for (int l : items[g].labels) lab << l << '\n';
        manifest.push_back({{"graph", stem + ".edges"},
                            {"features", stem + "_features.csv"},
                            {"labels", stem + "_labels.csv"},
                            {"sigma", splits[s].sigma},
                            {"seed", items[g].seed},
                            {"split", tag}});
      }
    };
    emit(splits[s].train, "train");
    emit(splits[s].validation, "validation");
  }
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw IoError("cannot write manifest under " + dir);
  out << manifest.dump(1) << '\n';
}

}  // namespace hgode
