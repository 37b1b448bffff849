#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hgode/config.hpp"

namespace hgode {

struct SeedRecord {
  std::uint64_t seed = 0;
  std::map<std::string, double> metrics;
  std::optional<std::string> error;  // set when the seed aborted
};

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  int count = 0;
};

struct SolverCounts {
  long long accepted = 0;
  long long rejected = 0;
  long long evaluations = 0;
};

struct RunSummary {
  std::string experiment;
  std::string config_hash;
  std::vector<SeedRecord> seeds;
  std::map<std::string, Aggregate> aggregates;
  std::map<std::string, bool> checks;        // gated pass/fail results
  std::map<std::string, std::string> notes;  // failure reasons, labels
  double wall_seconds = 0.0;
  SolverCounts solver;

  bool passed() const;

  // Mean and std of every metric over the seeds that report it.
  void aggregate();
  std::string to_json() const;  // sorted keys
};

// HGODE_JOBS if set and positive, else the hardware concurrency (at least 1).
int job_limit();

RunSummary run_validate_theory(const ExperimentConfig& config);
RunSummary run_monostability_sweep(const ExperimentConfig& config);
RunSummary run_hysteresis_trace(const ExperimentConfig& config);
RunSummary run_sbm_train(const ExperimentConfig& config);
RunSummary run_perturbation_bench(const ExperimentConfig& config);

// Each run writes its files and summary.json under config.output_dir unless
// that is empty.
RunSummary run_experiment(const ExperimentConfig& config);

}  // namespace hgode
