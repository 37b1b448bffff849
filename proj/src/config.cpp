#include "hgode/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "hgode/errors.hpp"

namespace hgode {

namespace {

struct Kind {
  ExperimentKind kind;
  const char* name;
};

constexpr Kind kKinds[] = {
    {ExperimentKind::validate_theory, "validate-theory"},
    {ExperimentKind::monostability_sweep, "monostability-sweep"},
    {ExperimentKind::hysteresis_trace, "hysteresis-trace"},
    {ExperimentKind::sbm_train, "sbm-train"},
    {ExperimentKind::perturbation_bench, "perturbation-bench"},
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Value conversion failures carry no line; the parser adds it.
struct BadValue {
  std::string what;
};

double to_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw BadValue{"expected a number, got '" + s + "'"};
  }
  if (used != s.size()) throw BadValue{"expected a number, got '" + s + "'"};
  return v;
}

long long to_int(const std::string& s) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    throw BadValue{"expected an integer, got '" + s + "'"};
  }
  if (used != s.size()) throw BadValue{"expected an integer, got '" + s + "'"};
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw BadValue{"expected a boolean, got '" + s + "'"};
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <class T, class F>
std::string join(const std::vector<T>& xs, F f) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += f(xs[i]);
  }
  return out;
}

struct Field {
  std::string key;  // section.name
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define REAL(KEY, MEMBER)                                                          \
  Field {                                                                          \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.MEMBER = to_double(v); }, \
        [](const ExperimentConfig& c) { return fmt(c.MEMBER); }                    \
  }
#define INT(KEY, MEMBER, TYPE)                                                                 \
  Field {                                                                                      \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.MEMBER = static_cast<TYPE>(to_int(v)); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.MEMBER); }                     \
  }
#define BOOL(KEY, MEMBER)                                                        \
  Field {                                                                        \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.MEMBER = to_bool(v); }, \
        [](const ExperimentConfig& c) { return std::string(c.MEMBER ? "true" : "false"); } \
  }
#define REALS(KEY, MEMBER)                                                  \
  Field {                                                                   \
    KEY,                                                                    \
        [](ExperimentConfig& c, const std::string& v) {                     \
          c.MEMBER.clear();                                                 \
          for (const auto& x : split_list(v)) c.MEMBER.push_back(to_double(x)); \
        },                                                                  \
        [](const ExperimentConfig& c) { return join(c.MEMBER, fmt); }       \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"experiment.kind",
       [](ExperimentConfig& c, const std::string& v) {
         try {
           c.kind = parse_experiment(v);
         } catch (const Error& e) {
           throw BadValue{e.what()};
         }
       },
       [](const ExperimentConfig& c) { return std::string(experiment_name(c.kind)); }},
      {"experiment.preset", [](ExperimentConfig&, const std::string&) {},
       [](const ExperimentConfig& c) { return c.preset; }},
      {"experiment.seeds",
       [](ExperimentConfig& c, const std::string& v) {
         c.seeds.clear();
         for (const auto& x : split_list(v)) {
           const long long s = to_int(x);
           if (s < 0) throw BadValue{"seeds must be nonnegative"};
           c.seeds.push_back(static_cast<std::uint64_t>(s));
         }
       },
       [](const ExperimentConfig& c) {
         return join(c.seeds, [](std::uint64_t s) { return std::to_string(s); });
       }},
      {"experiment.output_dir",
       [](ExperimentConfig& c, const std::string& v) { c.output_dir = v; },
       [](const ExperimentConfig& c) { return c.output_dir; }},
      BOOL("experiment.force", force),

      {"sbm.block_sizes",
       [](ExperimentConfig& c, const std::string& v) {
         c.sbm.block_sizes.clear();
         for (const auto& x : split_list(v)) c.sbm.block_sizes.push_back(static_cast<int>(to_int(x)));
       },
       [](const ExperimentConfig& c) {
         return join(c.sbm.block_sizes, [](int b) { return std::to_string(b); });
       }},
      REAL("sbm.p_in", sbm.p_in),
      REAL("sbm.p_out", sbm.p_out),
      BOOL("sbm.allow_disassortative", sbm.allow_disassortative),

      REAL("features.separation", features.separation),
      REAL("features.sigma", features.sigma),
      INT("features.dim", features.dim, int),

      REAL("hgode.lambda", hgode.lambda),
      REAL("hgode.tau_gate", hgode.tau_gate),
      REAL("hgode.tau_feat", hgode.tau_feat),
      REAL("hgode.tau_topo", hgode.tau_topo),
      REAL("hgode.gamma", hgode.gamma),
      REAL("hgode.epsilon", hgode.epsilon),
      REAL("hgode.force_scale", hgode.force_scale),
      BOOL("hgode.cubic", hgode.cubic),
      {"hgode.mu_schedule",
       [](ExperimentConfig& c, const std::string& v) {
         try {
           c.hgode.mu_schedule.kind = parse_schedule(v);
         } catch (const Error& e) {
           throw BadValue{e.what()};
         }
       },
       [](const ExperimentConfig& c) { return std::string(schedule_name(c.hgode.mu_schedule.kind)); }},
      REAL("hgode.mu_start", hgode.mu_schedule.mu_start),
      REAL("hgode.mu_end", hgode.mu_schedule.mu_end),
      REAL("hgode.mu_t_end", hgode.mu_schedule.t_end),

      INT("pool.k_2hop", pool.k_2hop, int),
      INT("pool.k_lap", pool.k_lap, int),
      REAL("pool.random_ratio", pool.random_ratio),
      INT("pool.walk_length", pool.walk_length, int),
      REAL("pool.u_observed", potentials.observed),
      REAL("pool.u_proposed", potentials.proposed),

      REAL("train.delta", train.delta),
      REAL("train.beta", train.beta),
      REAL("train.lr", train.lr),
      INT("train.epochs", train.epochs, int),
      INT("train.unroll_steps", train.unroll_steps, int),
      {"train.unroll_method",
       [](ExperimentConfig& c, const std::string& v) {
         if (v == "euler") c.train.unroll_method = FixedMethod::euler;
         else if (v == "rk4") c.train.unroll_method = FixedMethod::rk4;
         else throw BadValue{"unroll_method must be euler or rk4"};
       },
       [](const ExperimentConfig& c) {
         return std::string(c.train.unroll_method == FixedMethod::euler ? "euler" : "rk4");
       }},
      REAL("train.horizon", train.horizon),
      INT("train.pair_sample_size", train.pair_sample_size, int),
      INT("train.hidden", train.hidden, int),
      {"train.margin_input",
       [](ExperimentConfig& c, const std::string& v) {
         if (v == "initial") c.train.margin_input = MarginInput::initial;
         else if (v == "final") c.train.margin_input = MarginInput::final;
         else throw BadValue{"margin_input must be initial or final"};
       },
       [](const ExperimentConfig& c) {
         return std::string(c.train.margin_input == MarginInput::initial ? "initial" : "final");
       }},
      REAL("train.train_fraction", train_fraction),

      REAL("solver.rtol", solver.rtol),
      REAL("solver.atol", solver.atol),
      REAL("solver.h_init", solver.h_init),
      REAL("solver.h_min", solver.h_min),
      REAL("solver.h_max", solver.h_max),
      INT("solver.max_steps", solver.max_steps, std::int64_t),

      REAL("theory.break_fcrit", theory.break_fcrit),
      BOOL("theory.reducible", theory.reducible),

      REALS("sweep.tau_attn", sweep.tau_attn),
      REAL("sweep.horizon", sweep.horizon),
      INT("sweep.n_save", sweep.n_save, int),

      REAL("hysteresis.lambda", hysteresis.lambda),
      REAL("hysteresis.f_max", hysteresis.f_max),
      REAL("hysteresis.step", hysteresis.step),
      REAL("hysteresis.dwell", hysteresis.dwell),
      REAL("hysteresis.u0", hysteresis.u0),

      INT("bench.n_graphs", bench.n_graphs, int),
      REAL("bench.split", bench.split),
      INT("bench.block_size", bench.block_size, int),
      REAL("bench.p_in", bench.p_in),
      REAL("bench.p_out", bench.p_out),
      REAL("bench.separation", bench.separation),
      REALS("bench.sigmas", bench.sigmas),
      INT("bench.epochs", bench.epochs, int),
      REAL("bench.tau_attn", bench.tau_attn),
      INT("bench.mlp_hidden", bench.mlp_hidden, int),
  };
  return table;
}

#undef REAL
#undef INT
#undef BOOL
#undef REALS

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw RangeError(key + " " + what);
}

// Hull of the tabulated search ranges; lambda, gamma and beta extend to 0
// for the theory runs and the no-margin setting.
struct SoftRange {
  const char* key;
  double lo, hi;
  double (*get)(const ExperimentConfig&);
};

const SoftRange kSoftRanges[] = {
    {"hgode.lambda", 0.0, 0.8, [](const ExperimentConfig& c) { return c.hgode.lambda; }},
    {"hgode.tau_gate", 0.05, 0.5, [](const ExperimentConfig& c) { return c.hgode.tau_gate; }},
    {"hgode.tau_feat", 0.3, 1.0, [](const ExperimentConfig& c) { return c.hgode.tau_feat; }},
    {"hgode.tau_topo", 0.3, 1.0, [](const ExperimentConfig& c) { return c.hgode.tau_topo; }},
    {"hgode.gamma", 0.0, 1.0, [](const ExperimentConfig& c) { return c.hgode.gamma; }},
    {"hgode.force_scale", 1.0, 1.5, [](const ExperimentConfig& c) { return c.hgode.force_scale; }},
    {"train.delta", 0.1, 0.5, [](const ExperimentConfig& c) { return c.train.delta; }},
    {"train.beta", 0.0, 0.7, [](const ExperimentConfig& c) { return c.train.beta; }},
    {"train.lr", 1e-4, 1e-3, [](const ExperimentConfig& c) { return c.train.lr; }},
    {"train.horizon", 0.3, 1.0, [](const ExperimentConfig& c) { return c.train.horizon; }},
    {"pool.random_ratio", 0.0, 1e-2, [](const ExperimentConfig& c) { return c.pool.random_ratio; }},
    {"pool.k_2hop", 0, 12, [](const ExperimentConfig& c) { return double(c.pool.k_2hop); }},
    {"pool.k_lap", 0, 8, [](const ExperimentConfig& c) { return double(c.pool.k_lap); }},
};

struct Preset {
  const char* name;
  double lambda, tau_gate, tau_topo, force_scale, delta, beta;
};

// Starting configurations per dataset regime, at the middle of each band.
constexpr Preset kPresets[] = {
    {"homo-local", 0.2, 0.2, 1.0, 1.0, 0.1, 0.1},
    {"homo-global", 0.4, 0.15, 1.0, 1.25, 0.15, 0.2},
    {"hetero-local", 0.5, 0.075, 1.0, 1.25, 0.25, 0.4},
    {"hetero-global", 0.65, 0.075, 0.75, 1.25, 0.25, 0.2},
};

}  // namespace

const char* experiment_name(ExperimentKind kind) noexcept {
  for (const auto& k : kKinds)
    if (k.kind == kind) return k.name;
  return "unknown";
}

ExperimentKind parse_experiment(const std::string& name) {
  for (const auto& k : kKinds)
    if (name == k.name) return k.kind;
  throw InvalidArgument("unknown experiment kind '" + name + "'");
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& p : kPresets) out.emplace_back(p.name);
    return out;
  }();
  return names;
}

ExperimentConfig preset_config(const std::string& name) {
  for (const auto& p : kPresets) {
    if (name != p.name) continue;
    ExperimentConfig c;
    c.preset = p.name;
    c.hgode.lambda = p.lambda;
    c.hgode.tau_gate = p.tau_gate;
    c.hgode.tau_feat = 1.0;
    c.hgode.tau_topo = p.tau_topo;
    c.hgode.force_scale = p.force_scale;
    c.train.delta = p.delta;
    c.train.beta = p.beta;
    return c;
  }
  throw InvalidArgument("unknown preset '" + name + "'");
}

void ExperimentConfig::validate() const {
  // structural
  require(!seeds.empty(), "experiment.seeds", "must list at least one seed");
  require(!sbm.block_sizes.empty(), "sbm.block_sizes", "must list at least one block");
  for (int b : sbm.block_sizes) require(b >= 1, "sbm.block_sizes", "entries must be >= 1");
  require(sbm.p_in >= 0 && sbm.p_in <= 1, "sbm.p_in", "must lie in [0, 1]");
  require(sbm.p_out >= 0 && sbm.p_out <= 1, "sbm.p_out", "must lie in [0, 1]");
  require(features.sigma >= 0, "features.sigma", "must be >= 0");
  require(features.dim >= 1, "features.dim", "must be >= 1");
  require(hgode.lambda >= 0 && hgode.lambda < 1, "hgode.lambda", "must lie in [0, 1)");
  require(hgode.tau_gate > 0, "hgode.tau_gate", "must be > 0");
  require(hgode.tau_feat > 0, "hgode.tau_feat", "must be > 0");
  require(hgode.tau_topo > 0, "hgode.tau_topo", "must be > 0");
  require(hgode.gamma >= 0, "hgode.gamma", "must be >= 0");
  require(hgode.epsilon > 0, "hgode.epsilon", "must be > 0");
  require(hgode.force_scale > 0, "hgode.force_scale", "must be > 0");
  require(hgode.mu_schedule.mu_start > 0 && hgode.mu_schedule.mu_end > 0, "hgode.mu_start",
          "and mu_end must be > 0");
  require(hgode.mu_schedule.mu_end <= hgode.mu_schedule.mu_start, "hgode.mu_end",
          "must not exceed mu_start");
  require(hgode.mu_schedule.t_end > 0, "hgode.mu_t_end", "must be > 0");
  require(pool.k_2hop >= 0, "pool.k_2hop", "must be >= 0");
  require(pool.k_lap >= 0, "pool.k_lap", "must be >= 0");
  require(pool.random_ratio >= 0 && pool.random_ratio <= 1, "pool.random_ratio", "must lie in [0, 1]");
  require(pool.walk_length >= 1, "pool.walk_length", "must be >= 1");
  require(train.delta > 0, "train.delta", "must be > 0");
  require(train.beta >= 0, "train.beta", "must be >= 0");
  require(train.lr >= 0, "train.lr", "must be >= 0");
  require(train.epochs >= 0, "train.epochs", "must be >= 0");
  require(train.unroll_steps >= 1, "train.unroll_steps", "must be >= 1");
  require(train.horizon > 0, "train.horizon", "must be > 0");
  require(train.pair_sample_size >= 1, "train.pair_sample_size", "must be >= 1");
  require(train.hidden >= 1, "train.hidden", "must be >= 1");
  require(train_fraction > 0 && train_fraction <= 1, "train.train_fraction", "must lie in (0, 1]");
  require(solver.rtol > 0, "solver.rtol", "must be > 0");
  require(solver.atol > 0, "solver.atol", "must be > 0");
  require(solver.h_min > 0 && solver.h_min <= solver.h_init, "solver.h_min", "must lie in (0, h_init]");
  require(solver.h_init <= solver.h_max, "solver.h_init", "must not exceed h_max");
  require(solver.max_steps >= 1, "solver.max_steps", "must be >= 1");
  require(theory.break_fcrit >= 0, "theory.break_fcrit", "must be >= 0");
  require(!sweep.tau_attn.empty(), "sweep.tau_attn", "must be nonempty");
  for (double t : sweep.tau_attn) require(t > 0, "sweep.tau_attn", "entries must be > 0");
  require(sweep.horizon > 0, "sweep.horizon", "must be > 0");
  require(sweep.n_save >= 2, "sweep.n_save", "must be >= 2");
  require(hysteresis.f_max > 0, "hysteresis.f_max", "must be > 0");
  require(hysteresis.lambda >= 0 && hysteresis.lambda < 1, "hysteresis.lambda", "must lie in [0, 1)");
  require(hysteresis.step >= 0 && hysteresis.step < hysteresis.f_max, "hysteresis.step",
          "must lie in [0, f_max)");
  require(hysteresis.dwell > 0, "hysteresis.dwell", "must be > 0");
  require(bench.n_graphs >= 2, "bench.n_graphs", "must be >= 2");
  require(bench.split > 0 && bench.split < 1, "bench.split", "must lie in (0, 1)");
  require(bench.block_size >= 2, "bench.block_size", "must be >= 2");
  require(bench.p_in >= 0 && bench.p_in <= 1, "bench.p_in", "must lie in [0, 1]");
  require(bench.p_out >= 0 && bench.p_out <= 1, "bench.p_out", "must lie in [0, 1]");
  require(!bench.sigmas.empty(), "bench.sigmas", "must be nonempty");
  for (double s : bench.sigmas) require(s >= 0, "bench.sigmas", "entries must be >= 0");
  require(bench.epochs >= 0, "bench.epochs", "must be >= 0");
  require(bench.tau_attn > 0, "bench.tau_attn", "must be > 0");
  require(bench.mlp_hidden >= 1, "bench.mlp_hidden", "must be >= 1");

  if (force) return;
  for (const auto& r : kSoftRanges) {
    const double v = r.get(*this);
    if (v < r.lo || v > r.hi)
      throw RangeError(std::string(r.key) + " = " + fmt(v) + " outside [" + fmt(r.lo) + ", " +
                       fmt(r.hi) + "]; set experiment.force = true to override");
  }
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& preset_override) {
  struct Entry {
    std::string value;
    int line;
  };
  std::map<std::string, Entry> entries;
  std::vector<std::string> order;

  std::stringstream in(text);
  std::string raw, section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(line_no, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ParseError(line_no, "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(line_no, "expected key = value");
    const std::string name = trim(line.substr(0, eq));
    if (name.empty()) throw ParseError(line_no, "missing key");
    if (section.empty()) throw ParseError(line_no, "key '" + name + "' outside any section");
    const std::string key = section + "." + name;
    const auto known = std::find_if(fields().begin(), fields().end(),
                                    [&](const Field& f) { return f.key == key; });
    if (known == fields().end()) throw ParseError(line_no, "unknown key '" + key + "'");
    if (entries.count(key)) throw ParseError(line_no, "duplicate key '" + key + "'");
    entries[key] = {trim(line.substr(eq + 1)), line_no};
    order.push_back(key);
  }

  std::string preset = "homo-local";
  int preset_line = 0;
  if (auto it = entries.find("experiment.preset"); it != entries.end()) {
    preset = it->second.value;
    preset_line = it->second.line;
  }
  if (!preset_override.empty()) preset = preset_override;
  ExperimentConfig config;
  try {
    config = preset_config(preset);
  } catch (const InvalidArgument& e) {
    throw ParseError(preset_line, e.what());
  }

  for (const auto& key : order) {
    const auto& entry = entries[key];
    const auto f = std::find_if(fields().begin(), fields().end(),
                                [&](const Field& fd) { return fd.key == key; });
    try {
      f->set(config, entry.value);
    } catch (const BadValue& e) {
      throw ParseError(entry.line, key + ": " + e.what);
    }
  }
  config.validate();
  return config;
}

ExperimentConfig parse_config(const std::string& path, const std::string& preset_override) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), preset_override);
}

std::string serialize_config(const ExperimentConfig& config) {
  std::string out, section;
  for (const auto& f : fields()) {
    const auto dot = f.key.find('.');
    const std::string s = f.key.substr(0, dot);
    if (s != section) {
      if (!section.empty()) out += "\n";
      out += "[" + s + "]\n";
      section = s;
    }
    out += f.key.substr(dot + 1) + " = " + f.get(config) + "\n";
  }
  return out;
}

std::string config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : serialize_config(config)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace hgode
