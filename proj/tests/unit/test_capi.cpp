#include "doctest.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "hgode/hgode.h"
#include "json.hpp"

TEST_CASE("c api: status names and errors") {
  CHECK(std::string(hgode_status_name(HGODE_RANGE_ERROR)) == "range_error");
  CHECK(std::string(hgode_version()).size() > 0);
  hgode_config* cfg = nullptr;
  CHECK(hgode_config_parse("[hgode]\nlambda = 1.5\n", nullptr, &cfg) == HGODE_RANGE_ERROR);
  CHECK(cfg == nullptr);
  CHECK(std::string(hgode_last_error()).find("lambda") != std::string::npos);
  CHECK(hgode_config_parse("[hgode]\nlambda = 0.2\nlambda = 0.2\n", nullptr, &cfg) == HGODE_PARSE_ERROR);
  CHECK(hgode_config_load("/nonexistent.ini", nullptr, &cfg) == HGODE_IO_ERROR);
  CHECK(hgode_config_parse(nullptr, nullptr, &cfg) == HGODE_INVALID_ARGUMENT);
}

TEST_CASE("c api: config round trip") {
  hgode_config* cfg = nullptr;
  REQUIRE(hgode_config_parse("", "hetero-local", &cfg) == HGODE_OK);
  REQUIRE(hgode_config_set_kind(cfg, "hysteresis-trace") == HGODE_OK);
  CHECK(hgode_config_set_kind(cfg, "bogus") != HGODE_OK);
  const uint64_t seeds[] = {4, 5};
  REQUIRE(hgode_config_set_seeds(cfg, seeds, 2) == HGODE_OK);
  size_t need = 0;
  REQUIRE(hgode_config_kind(cfg, nullptr, 0, &need) == HGODE_OK);
  std::string kind(need, '\0');
  hgode_config_kind(cfg, kind.data(), kind.size(), nullptr);
  CHECK(std::string(kind.c_str()) == "hysteresis-trace");
  // truncation keeps the buffer terminated
  char small[4];
  hgode_config_kind(cfg, small, sizeof small, nullptr);
  CHECK(std::strlen(small) == 3);

  hgode_config_serialize(cfg, nullptr, 0, &need);
  std::string text(need, '\0');
  hgode_config_serialize(cfg, text.data(), text.size(), nullptr);
  hgode_config* again = nullptr;
  REQUIRE(hgode_config_parse(text.c_str(), nullptr, &again) == HGODE_OK);
  size_t need2 = 0;
  hgode_config_serialize(again, nullptr, 0, &need2);
  std::string text2(need2, '\0');
  hgode_config_serialize(again, text2.data(), text2.size(), nullptr);
  CHECK(text == text2);
  hgode_config_free(again);
  hgode_config_free(cfg);
}

TEST_CASE("c api: run an experiment") {
  hgode_config* cfg = nullptr;
  REQUIRE(hgode_config_parse("[experiment]\nkind = hysteresis-trace\n[hysteresis]\nlambda = 0.8\n", nullptr, &cfg) == HGODE_OK);
  const auto dir = std::filesystem::temp_directory_path() / "hgode_capi_run";
  std::filesystem::remove_all(dir);
  REQUIRE(hgode_config_set_output_dir(cfg, dir.string().c_str()) == HGODE_OK);
  hgode_summary* s = nullptr;
  REQUIRE(hgode_run(cfg, &s) == HGODE_OK);
  int passed = 0;
  hgode_summary_passed(s, &passed);
  CHECK(passed == 1);
  double mean = 0, sd = -1;
  int count = 0;
  REQUIRE(hgode_summary_metric(s, "up_switch_F", &mean, &sd, &count) == HGODE_OK);
  CHECK(std::abs(mean - 2 * std::pow(0.2 / 3, 1.5)) <= 0.02 * 2 * std::pow(0.2 / 3, 1.5));
  CHECK(hgode_summary_metric(s, "missing", &mean, &sd, &count) == HGODE_INVALID_ARGUMENT);
  size_t need = 0;
  hgode_summary_json(s, nullptr, 0, &need);
  std::string js(need, '\0');
  hgode_summary_json(s, js.data(), js.size(), nullptr);
  js.resize(need - 1);
  const auto j = nlohmann::json::parse(js);
  CHECK(j["experiment"] == "hysteresis-trace");
  CHECK(std::filesystem::exists(dir / "summary.json"));
  CHECK(std::filesystem::exists(dir / "hysteresis.csv"));
  hgode_summary_free(s);
  hgode_config_free(cfg);
  std::filesystem::remove_all(dir);
}

TEST_CASE("c api: numerics") {
  double fc = 0;
  REQUIRE(hgode_critical_force(0.0, &fc) == HGODE_OK);
  CHECK(std::abs(fc - 0.3849002) <= 1e-7);
  double roots[3];
  int stab[3], n = 0, regime = -1;
  REQUIRE(hgode_cubic_equilibria(0.0, 0.0, roots, stab, &n, &regime) == HGODE_OK);
  CHECK(n == 3);
  CHECK(regime == 0);
  CHECK(stab[1] == 1);
  CHECK(hgode_cubic_equilibria(0.0, 1.5, roots, stab, &n, &regime) == HGODE_INVALID_ARGUMENT);

  const double p[] = {0.5, 0.5, 0.25, 0.75};
  double pi[2];
  REQUIRE(hgode_stationary_distribution(p, 2, pi) == HGODE_OK);
  CHECK(std::abs(pi[0] - 1.0 / 3) <= 1e-10);
  const double id[] = {1, 0, 0, 1};
  CHECK(hgode_stationary_distribution(id, 2, pi) == HGODE_NOT_IRREDUCIBLE);
  const double swap[] = {0, 1, 1, 0};
  double gap = 0;
  REQUIRE(hgode_spectral_gap(swap, 2, &gap) == HGODE_OK);
  CHECK(std::abs(gap - 2.0) <= 1e-12);
  const double bad[] = {0.5, 0.6, 0.5, 0.5};
  CHECK(hgode_spectral_gap(bad, 2, &gap) == HGODE_INVALID_ARGUMENT);
}

TEST_CASE("c api: force field handle") {
  hgode_force* f = nullptr;
  CHECK(hgode_force_init(8, 3, 0.1, 1, &f) == HGODE_INVALID_SCALE);
  REQUIRE(hgode_force_init(8, 3, 1.0, 1, &f) == HGODE_OK);
  const double h[] = {0.1, 0.2, 0.3, -0.4, 0.5, -0.6};
  const int src[] = {0, 1}, dst[] = {1, 0};
  double out[2];
  REQUIRE(hgode_force_eval(f, h, 2, 3, src, dst, 2, out) == HGODE_OK);
  CHECK(std::abs(out[0]) <= 1.0);
  CHECK(hgode_force_eval(f, h, 2, 2, src, dst, 2, out) == HGODE_INVALID_ARGUMENT);
  const auto path = std::filesystem::temp_directory_path() / "hgode_capi_force.json";
  REQUIRE(hgode_force_save(f, path.string().c_str()) == HGODE_OK);
  hgode_force* g = nullptr;
  REQUIRE(hgode_force_load(path.string().c_str(), &g) == HGODE_OK);
  double out2[2];
  hgode_force_eval(g, h, 2, 3, src, dst, 2, out2);
  CHECK(out2[0] == out[0]);
  CHECK(out2[1] == out[1]);
  hgode_force_free(g);
  hgode_force_free(f);
  std::filesystem::remove(path);
}
