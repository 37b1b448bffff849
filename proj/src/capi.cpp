#include "hgode/hgode.h"

#include <cstring>
#include <exception>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include "hgode/config.hpp"
#include "hgode/diagnostics.hpp"
#include "hgode/errors.hpp"
#include "hgode/experiments.hpp"
#include "hgode/force.hpp"

struct hgode_config {
  hgode::ExperimentConfig value;
};
struct hgode_summary {
  hgode::RunSummary value;
};
struct hgode_force {
  hgode::ForceField value;
};

namespace {

thread_local std::string g_last_error;

hgode_status fail(hgode_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

// Maps exceptions to status codes at the boundary.
template <typename F>
hgode_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return HGODE_OK;
  } catch (const hgode::Error& e) {
    return fail(static_cast<hgode_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(HGODE_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(HGODE_INTERNAL, e.what());
  } catch (...) {
    return fail(HGODE_INTERNAL, "unknown exception");
  }
}

void copy_out(const std::string& s, char* buf, size_t cap, size_t* needed) {
  if (needed) *needed = s.size() + 1;
  if (buf && cap > 0) {
    const size_t n = s.size() < cap - 1 ? s.size() : cap - 1;
    std::memcpy(buf, s.data(), n);
    buf[n] = '\0';
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw hgode::InvalidArgument(what);
}

hgode::RowStochasticMatrix dense_stochastic(const double* p, int n) {
  require(p != nullptr && n >= 1, "null matrix or n < 1");
  hgode::Matrix m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = p[i * n + j];
  return hgode::RowStochasticMatrix::from_matrix(m);
}

}  // namespace

extern "C" {

const char* hgode_version(void) { return "0.1.0"; }

const char* hgode_last_error(void) { return g_last_error.c_str(); }

const char* hgode_status_name(hgode_status status) {
  return hgode::error_code_name(static_cast<hgode::ErrorCode>(status));
}

hgode_status hgode_config_load(const char* path, const char* preset, hgode_config** out) {
  return guarded([&] {
    require(path && out, "null argument");
    auto cfg = std::make_unique<hgode_config>();
    cfg->value = hgode::parse_config(path, preset ? preset : "");
    *out = cfg.release();
  });
}

hgode_status hgode_config_parse(const char* text, const char* preset, hgode_config** out) {
  return guarded([&] {
    require(text && out, "null argument");
    auto cfg = std::make_unique<hgode_config>();
    cfg->value = hgode::parse_config_text(text, preset ? preset : "");
    *out = cfg.release();
  });
}

hgode_status hgode_config_set_seeds(hgode_config* cfg, const uint64_t* seeds, size_t n) {
  return guarded([&] {
    require(cfg && seeds && n > 0, "null config or empty seed list");
    cfg->value.seeds.assign(seeds, seeds + n);
  });
}

hgode_status hgode_config_set_output_dir(hgode_config* cfg, const char* dir) {
  return guarded([&] {
    require(cfg && dir, "null argument");
    cfg->value.output_dir = dir;
  });
}

hgode_status hgode_config_set_kind(hgode_config* cfg, const char* kind) {
  return guarded([&] {
    require(cfg && kind, "null argument");
    cfg->value.kind = hgode::parse_experiment(kind);
  });
}

hgode_status hgode_config_set_break_fcrit(hgode_config* cfg, double value) {
  return guarded([&] {
    require(cfg && value >= 0.0, "null config or negative value");
    cfg->value.theory.break_fcrit = value;
  });
}

hgode_status hgode_config_kind(const hgode_config* cfg, char* buf, size_t cap, size_t* needed) {
  return guarded([&] {
    require(cfg, "null config");
    copy_out(hgode::experiment_name(cfg->value.kind), buf, cap, needed);
  });
}

hgode_status hgode_config_serialize(const hgode_config* cfg, char* buf, size_t cap, size_t* needed) {
  return guarded([&] {
    require(cfg, "null config");
    copy_out(hgode::serialize_config(cfg->value), buf, cap, needed);
  });
}

void hgode_config_free(hgode_config* cfg) { delete cfg; }

hgode_status hgode_run(const hgode_config* cfg, hgode_summary** out) {
  return guarded([&] {
    require(cfg && out, "null argument");
    auto s = std::make_unique<hgode_summary>();
    s->value = hgode::run_experiment(cfg->value);
    *out = s.release();
  });
}

hgode_status hgode_summary_passed(const hgode_summary* s, int* passed) {
  return guarded([&] {
    require(s && passed, "null argument");
    *passed = s->value.passed() ? 1 : 0;
  });
}

hgode_status hgode_summary_json(const hgode_summary* s, char* buf, size_t cap, size_t* needed) {
  return guarded([&] {
    require(s, "null summary");
    copy_out(s->value.to_json(), buf, cap, needed);
  });
}

hgode_status hgode_summary_metric(const hgode_summary* s, const char* key, double* mean, double* std,
                                  int* count) {
  return guarded([&] {
    require(s && key, "null argument");
    const auto it = s->value.aggregates.find(key);
    if (it == s->value.aggregates.end()) throw hgode::InvalidArgument(std::string("no metric '") + key + "'");
    if (mean) *mean = it->second.mean;
    if (std) *std = it->second.std;
    if (count) *count = it->second.count;
  });
}

void hgode_summary_free(hgode_summary* s) { delete s; }

hgode_status hgode_critical_force(double lambda, double* out) {
  return guarded([&] {
    require(out != nullptr, "null output");
    *out = hgode::critical_force(lambda);
  });
}

hgode_status hgode_cubic_equilibria(double force, double lambda, double roots[3], int stability[3], int* n_roots,
                                    int* regime) {
  return guarded([&] {
    require(roots && stability && n_roots && regime, "null output");
    require(lambda >= 0.0 && lambda < 1.0, "lambda must lie in [0, 1)");
    const hgode::EquilibriumSet eq = hgode::cubic_equilibria(force, lambda);
    *n_roots = static_cast<int>(eq.roots.size());
    for (size_t k = 0; k < 3; ++k) {
      roots[k] = k < eq.roots.size() ? eq.roots[k] : 0.0;
      stability[k] = k < eq.roots.size() ? static_cast<int>(eq.stability[k]) : -1;
    }
    *regime = static_cast<int>(eq.regime);
  });
}

hgode_status hgode_stationary_distribution(const double* p, int n, double* pi) {
  return guarded([&] {
    require(pi != nullptr, "null output");
    const hgode::Vector v = hgode::stationary_distribution(dense_stochastic(p, n));
    for (int i = 0; i < n; ++i) pi[i] = v[i];
  });
}

hgode_status hgode_spectral_gap(const double* p, int n, double* gap) {
  return guarded([&] {
    require(gap != nullptr, "null output");
    *gap = hgode::spectral_gap(dense_stochastic(p, n));
  });
}

hgode_status hgode_force_init(int hidden, int feature_dim, double scale, uint64_t seed, hgode_force** out) {
  return guarded([&] {
    require(out != nullptr, "null output");
    auto f = std::make_unique<hgode_force>();
    f->value = hgode::init_force(hidden, feature_dim, scale, seed);
    *out = f.release();
  });
}

hgode_status hgode_force_load(const char* path, hgode_force** out) {
  return guarded([&] {
    require(path && out, "null argument");
    auto f = std::make_unique<hgode_force>();
    f->value = hgode::load_force(path);
    *out = f.release();
  });
}

hgode_status hgode_force_save(const hgode_force* f, const char* path) {
  return guarded([&] {
    require(f && path, "null argument");
    hgode::save_force(path, f->value);
  });
}

hgode_status hgode_force_eval(const hgode_force* f, const double* h, int n_nodes, int feature_dim, const int* src,
                              const int* dst, size_t n_pairs, double* out) {
  return guarded([&] {
    require(f && h && src && dst && out, "null argument");
    require(n_nodes >= 1 && feature_dim == f->value.feature_dim(), "feature dimension mismatch");
    hgode::Matrix hm(n_nodes, feature_dim);
    for (int i = 0; i < n_nodes; ++i)
      for (int j = 0; j < feature_dim; ++j) hm(i, j) = h[i * feature_dim + j];
    std::vector<hgode::Edge> pairs(n_pairs);
    for (size_t k = 0; k < n_pairs; ++k) pairs[k] = {src[k], dst[k]};
    const hgode::CandidatePool pool(n_nodes, pairs,
                                    std::vector<hgode::Provenance>(n_pairs, hgode::Provenance::observed));
    const hgode::Vector v = hgode::force_eval(f->value, hm, pool);
    for (size_t k = 0; k < n_pairs; ++k) out[k] = v[static_cast<Eigen::Index>(k)];
  });
}

void hgode_force_free(hgode_force* f) { delete f; }

}  // extern "C"
