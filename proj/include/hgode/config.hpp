#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hgode/dynamics.hpp"
#include "hgode/graph.hpp"
#include "hgode/ode.hpp"
#include "hgode/sbm.hpp"
#include "hgode/training.hpp"

namespace hgode {

enum class ExperimentKind {
  validate_theory,
  monostability_sweep,
  hysteresis_trace,
  sbm_train,
  perturbation_bench,
};

const char* experiment_name(ExperimentKind kind) noexcept;
ExperimentKind parse_experiment(const std::string& name);

struct FeatureOptions {
  double separation = 0.5;
  double sigma = 0.5;
  int dim = 16;
};

struct PotentialInit {
  double observed = 1.0;
  double proposed = 0.0;
};

struct TheoryOptions {
  double break_fcrit = 0.0;  // > 0 replaces the fold threshold (harness self-test)
  bool reducible = false;    // feed a reducible P to the consensus check
};

struct SweepOptions {
  std::vector<double> tau_attn{0.5, 1.0, 2.0, 5.0};
  double horizon = 50.0;
  int n_save = 51;
};

struct HysteresisOptions {
  double lambda = 0.0;
  double f_max = 0.6;
  double step = 0.0;  // 0: critical_force(lambda) / 200
  double dwell = 20.0;
  double u0 = 1.0;
};

struct BenchSection {
  int n_graphs = 200;
  double split = 0.8;
  int block_size = 20;
  double p_in = 0.5;
  double p_out = 0.3;
  double separation = 0.5;
  std::vector<double> sigmas{0.1, 1.0};
  int epochs = 10;
  double tau_attn = 1.0;
  int mlp_hidden = 32;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::validate_theory;
  std::string preset = "homo-local";
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::string output_dir = "out";
  bool force = false;  // bypass the tabulated hyperparameter ranges

  SbmSpec sbm;
  FeatureOptions features;
  HgodeParams hgode;
  PoolOptions pool;
  PotentialInit potentials;
  TrainConfig train;
  double train_fraction = 0.5;
  SolverConfig solver;
  TheoryOptions theory;
  SweepOptions sweep;
  HysteresisOptions hysteresis;
  BenchSection bench;

  // Structural checks always; tabulated ranges unless `force`. Throws RangeError.
  void validate() const;
};

// Names accepted by --preset.
const std::vector<std::string>& preset_names();

// Defaults with the given preset's hysteresis and force settings applied.
ExperimentConfig preset_config(const std::string& name);

// `key = value` lines under [section] headers; '#' and ';' start comments.
// The base is preset_override if nonempty, else the file's experiment.preset
// key (wherever it appears), else homo-local; other keys apply on top.
ExperimentConfig parse_config_text(const std::string& text, const std::string& preset_override = "");
ExperimentConfig parse_config(const std::string& path, const std::string& preset_override = "");

// Every key, in a form parse_config_text reads back to the same config.
std::string serialize_config(const ExperimentConfig& config);

// FNV-1a of the serialized config, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

}  // namespace hgode
