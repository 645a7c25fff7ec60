#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>

#include "tvs/experiment.hpp"

using namespace tvs;

namespace {
const std::filesystem::path tmp = std::filesystem::temp_directory_path();
}

TEST_CASE("key=value files parse with comments and trimming", "[experiment]") {
  const auto path = (tmp / "tvs_test_cfg.txt").string();
  std::ofstream(path) << "# comment line\n"
                      << "model = sbn   # trailing comment\n"
                      << "\n"
                      << "seed=9\n"
                      << "bars.pi = 0.3\n";
  KvConfig kv;
  kv.load_file(path);
  CHECK(kv.get_str("model", "") == "sbn");
  CHECK(kv.get_int("seed", 0) == 9);
  CHECK(kv.get_double("bars.pi", 0.0) == 0.3);
  std::filesystem::remove(path);
}

TEST_CASE("malformed config lines and values are rejected", "[experiment]") {
  const auto path = (tmp / "tvs_test_badcfg.txt").string();
  std::ofstream(path) << "just words\n";
  KvConfig kv;
  CHECK_THROWS_AS(kv.load_file(path), ConfigError);
  std::filesystem::remove(path);

  KvConfig kv2;
  kv2.set("seed", "abc");
  CHECK_THROWS_AS(kv2.get_int("seed", 0), ConfigError);
  KvConfig kv3;
  kv3.set("amortizer.enabled", "yes");
  CHECK_THROWS_AS(kv3.get_bool("amortizer.enabled", false), ConfigError);
  KvConfig kv4;
  CHECK_THROWS_AS(kv4.apply_override("no_equals_sign"), ConfigError);
}

TEST_CASE("unknown keys are flagged before compute", "[experiment]") {
  KvConfig kv;
  kv.set("model", "bsc");
  kv.set("iterationz", "5");
  CHECK_THROWS_WITH(build_experiment(kv), Catch::Matchers::ContainsSubstring("iterationz"));
}

TEST_CASE("experiment defaults and overrides", "[experiment]") {
  KvConfig kv;
  kv.set("model", "bsc");
  kv.set("iterations", "7");
  kv.set("m_p", "3");
  kv.set("m_q", "5");
  kv.set("seed", "42");
  const ExperimentConfig cfg = build_experiment(kv);
  CHECK(cfg.tvs.total_iterations == 7);
  REQUIRE(cfg.tvs.schedule.size() == 1);
  CHECK(cfg.tvs.schedule[0].m_p == 3);
  CHECK(cfg.tvs.schedule[0].m_q == 5);
  CHECK(cfg.tvs.rng_seed == 42);
  CHECK(cfg.bars.n == 10000);

  KvConfig bad;
  bad.set("model", "gmm");
  CHECK_THROWS_AS(build_experiment(bad), ConfigError);
}

TEST_CASE("schedule segments expand with an exact total on ramps", "[experiment]") {
  const auto entries = parse_schedule("0-100:200:0,100-200:200->0:0->200");
  TvsConfig cfg;
  cfg.S = 4;
  cfg.total_iterations = 200;
  cfg.schedule = entries;
  CHECK_NOTHROW(validate_config(cfg));
  for (int t = 0; t < 200; ++t) {
    const ScheduleEntry& e = schedule_at(cfg, t);
    CHECK(e.m_p + e.m_q == 200);
    if (t < 100) {
      CHECK(e.m_p == 200);
    } else {
      CHECK(e.m_p == 200 - 2 * (t - 100));
    }
  }
}

TEST_CASE("schedule text errors are config errors", "[experiment]") {
  CHECK_THROWS_AS(parse_schedule("0:100:3:3"), ConfigError);
  CHECK_THROWS_AS(parse_schedule("0-100:abc:3"), ConfigError);
  KvConfig kv;
  kv.set("iterations", "100");
  kv.set("schedule", "0-50:4:4");  // gap at 50
  CHECK_THROWS_AS(build_experiment(kv), ConfigError);
}

TEST_CASE("exact-ll toggle is guarded by the enumeration cap", "[experiment]") {
  KvConfig kv;
  kv.set("H", "25");
  kv.set("eval.exact_ll", "true");
  CHECK_THROWS_AS(build_experiment(kv), ConfigError);
}

TEST_CASE("inline bars datasets honor the model kind", "[experiment]") {
  KvConfig kv;
  kv.set("model", "sbn");
  kv.set("bars.n", "50");
  kv.set("seed", "3");
  const ExperimentConfig cfg = build_experiment(kv);
  const Dataset ds = resolve_dataset(cfg);
  CHECK(ds.kind == DataKind::binary);
  CHECK(ds.n() == 50);
  CHECK(ds.d() == 25);
  REQUIRE(ds.ground_truth.has_value());
  CHECK(ds.ground_truth->model == ModelKind::sbn);
  CHECK((ds.Y.array() == 0.0 || ds.Y.array() == 1.0).all());
}

TEST_CASE("binary models reject continuous files", "[experiment]") {
  const auto path = (tmp / "tvs_test_cont.txt").string();
  std::ofstream(path) << "0 1 0.5\n";
  KvConfig kv;
  kv.set("model", "sbn");
  kv.set("dataset", path);
  const ExperimentConfig cfg = build_experiment(kv);
  CHECK_THROWS_AS(resolve_dataset(cfg), ConfigError);
  std::filesystem::remove(path);
}

TEST_CASE("missing dataset files are config errors", "[experiment]") {
  KvConfig kv;
  kv.set("dataset", (tmp / "does_not_exist.tvsd").string());
  const ExperimentConfig cfg = build_experiment(kv);
  CHECK_THROWS_AS(resolve_dataset(cfg), ConfigError);
}

TEST_CASE("dictionary rasterization needs a square dimension", "[experiment]") {
  CHECK_THROWS_AS(write_dictionary_pgms(Eigen::MatrixXd::Zero(30, 2), (tmp / "nope").string()),
                  Error);
  int side = 0;
  CHECK(perfect_square(25, &side));
  CHECK(side == 5);
  CHECK_FALSE(perfect_square(30, &side));
}
