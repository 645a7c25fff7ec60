#include <algorithm>
#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <vector>

#include "fixtures.hpp"
#include "oracle.hpp"
#include "tvs/engine.hpp"
#include "tvs/model_bsc.hpp"
#include "tvs/model_sbn.hpp"

using namespace tvs;

namespace {

// Canonical order for set comparison.
std::vector<LatentState> sorted_states(const StateSet& ks) {
  std::vector<LatentState> out = ks.states;
  std::sort(out.begin(), out.end(), [](const LatentState& a, const LatentState& b) {
    return packed_less(a, b);
  });
  return out;
}

std::vector<double> sorted_joints(const StateSet& ks) {
  std::vector<double> out = ks.log_joints;
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("tv_e_step with proposals already in the set is a no-op", "[engine]") {
  const BscParams p = fixtures::random_bsc_params(4, 3, 11);
  const BscModel model(p);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(4, 0.5);
  StateSet ks;
  ks.capacity = 3;
  for (std::uint64_t idx : {0ULL, 3ULL, 5ULL}) {
    LatentState s = LatentState::from_index(3, idx);
    ks.log_joints.push_back(model.log_joint(s, y));
    ks.states.push_back(std::move(s));
  }
  std::vector<LatentState> proposals = {LatentState::from_index(3, 3),
                                        LatentState::from_index(3, 0),
                                        LatentState::from_index(3, 5)};
  const StateSet out = tv_e_step(ks, proposals, model, y);
  CHECK(sorted_states(out) == sorted_states(ks));
  CHECK(sorted_joints(out) == sorted_joints(ks));
}

TEST_CASE("tv_e_step replaces a single incumbent with a better proposal", "[engine]") {
  const BscParams p = fixtures::random_bsc_params(4, 3, 12);
  const BscModel model(p);
  // y equals the active column of s_b, so s_b has the larger joint
  const LatentState s_a = LatentState::from_index(3, 0);
  LatentState s_b(3);
  s_b.set_bit(1, true);
  const Eigen::VectorXd y = p.W.col(1);
  REQUIRE(model.log_joint(s_b, y) > model.log_joint(s_a, y));
  StateSet ks;
  ks.capacity = 1;
  ks.states = {s_a};
  ks.log_joints = {model.log_joint(s_a, y)};
  const std::vector<LatentState> proposals = {s_b};
  const StateSet out = tv_e_step(ks, proposals, model, y);
  REQUIRE(out.size() == 1);
  CHECK(out.states[0] == s_b);
}

TEST_CASE("tv_e_step equals the full-sort top-S oracle", "[engine]") {
  const BscParams p = fixtures::random_bsc_params(5, 4, 13);
  const BscModel model(p);
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    Rng rng(seed + 1);
    Eigen::VectorXd y(5);
    for (int d = 0; d < 5; ++d) y(d) = rng.normal();

    const int S = 3;
    StateSet ks;
    ks.capacity = S;
    std::unordered_set<LatentState, LatentStateHash> seen;
    while (ks.size() < S) {
      LatentState s = LatentState::from_index(4, rng.below(16));
      if (!seen.insert(s).second) continue;
      ks.log_joints.push_back(model.log_joint(s, y));
      ks.states.push_back(std::move(s));
    }
    std::vector<LatentState> proposals;
    for (int i = 0; i < 5; ++i) proposals.push_back(LatentState::from_index(4, rng.below(16)));

    const StateSet out = tv_e_step(ks, proposals, model, y);
    REQUIRE(out.size() == S);
    std::unordered_set<LatentState, LatentStateHash> unique(out.states.begin(), out.states.end());
    REQUIRE(unique.size() == static_cast<std::size_t>(S));

    // full-sort oracle over the deduplicated union
    std::vector<std::pair<double, LatentState>> pool;
    std::unordered_set<LatentState, LatentStateHash> pool_seen;
    for (const auto& s : ks.states)
      if (pool_seen.insert(s).second) pool.emplace_back(model.log_joint(s, y), s);
    for (const auto& s : proposals)
      if (pool_seen.insert(s).second) pool.emplace_back(model.log_joint(s, y), s);
    std::sort(pool.begin(), pool.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<double> expected;
    for (int i = 0; i < S; ++i) expected.push_back(pool[i].first);
    std::sort(expected.begin(), expected.end());
    CHECK(sorted_joints(out) == expected);

    // replacement criterion: the set's log-mass never decreases
    CHECK(set_logsumexp(out) >= set_logsumexp(ks) - 1e-12);
  }
}

TEST_CASE("free energy at fixed parameters never decreases under the E-step", "[engine]") {
  const int D = 6, H = 5, N = 8, S = 4;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const BscParams p = fixtures::random_bsc_params(D, H, seed * 7 + 1);
    const BscModel model(p);
    const Dataset data = BscModel::generate(p, N, seed + 900);
    TvsConfig cfg = TvsConfig::uniform(S, 2, 2, 1, seed);
    VariationalState vs = init_ksets(model, cfg, data);
    const double before = free_energy(vs);
    for (int n = 0; n < N; ++n) {
      Rng rng = derive_rng(seed, Stream::proposals, 0, n);
      const auto y = data.Y.row(n).transpose();
      std::vector<LatentState> proposals = prior_draw(model, 2, rng);
      const auto mq = marginal_draw(truncated_marginals(vs.ksets[n]), 2, rng);
      for (const auto& s : mq) proposals.push_back(s);
      vs.ksets[n] = tv_e_step(vs.ksets[n], proposals, model, y);
    }
    const double after = free_energy(vs);
    CHECK(after >= before - 1e-12 * std::max(1.0, std::abs(before)));
  }
}

TEST_CASE("exhaustive sets give the exact log-likelihood", "[engine]") {
  const int D = 4, H = 3, N = 6;
  const BscParams p = fixtures::random_bsc_params(D, H, 21);
  const BscModel model(p);
  const Dataset data = BscModel::generate(p, N, 22);
  const VariationalState vs = fixtures::exhaustive_state(model, data);

  const auto states = oracle::all_states(H);
  const double exact = oracle::loglik_dataset(states, data.Y, [&](const auto& s, const auto& y) {
    return oracle::bsc_log_joint(s, y, p.pi, p.W, p.sigma2);
  });
  CHECK_THAT(free_energy(vs), Catch::Matchers::WithinAbs(exact, 1e-10));

  // expectations with the full space equal the exact posterior mean
  for (int n = 0; n < N; ++n) {
    const Eigen::VectorXd mean = mean_state(vs.ksets[n]);
    const Eigen::VectorXd want =
        oracle::posterior_mean(states, data.Y.row(n).transpose(), [&](const auto& s, const auto& y) {
          return oracle::bsc_log_joint(s, y, p.pi, p.W, p.sigma2);
        });
    CHECK((mean - want).cwiseAbs().maxCoeff() < 1e-12);
  }

  // any proper subset lower-bounds the exact value strictly
  VariationalState subset = vs;
  for (auto& ks : subset.ksets) {
    ks.states.pop_back();
    ks.log_joints.pop_back();
    ks.capacity -= 1;
  }
  CHECK(free_energy(subset) < exact);
}

TEST_CASE("single-state single-datapoint free energy is one log-joint", "[engine]") {
  const BscParams p = fixtures::random_bsc_params(3, 2, 31);
  const BscModel model(p);
  const Dataset data = BscModel::generate(p, 1, 32);
  TvsConfig cfg = TvsConfig::uniform(1, 1, 0, 0, 5);
  VariationalState vs = init_ksets(model, cfg, data);
  REQUIRE(vs.ksets[0].size() == 1);
  CHECK(free_energy(vs) == vs.ksets[0].log_joints[0]);
}

TEST_CASE("free energy names the degenerate datapoint", "[engine]") {
  StateSet ok;
  ok.capacity = 1;
  ok.states = {LatentState(2)};
  ok.log_joints = {-1.0};
  StateSet bad = ok;
  bad.log_joints = {kNegInf};
  VariationalState vs;
  vs.ksets = {ok, bad};
  CHECK_THROWS_WITH(free_energy(vs), Catch::Matchers::ContainsSubstring("datapoint 1"));
}

TEST_CASE("init_ksets invariants across sizes", "[engine]") {
  const BscParams p = fixtures::random_bsc_params(4, 2, 41, 0.5);
  const BscModel model(p);
  const Dataset data = BscModel::generate(p, 40, 42);

  SECTION("S=1 draws a single prior sample") {
    TvsConfig cfg = TvsConfig::uniform(1, 1, 0, 0, 3);
    const VariationalState vs = init_ksets(model, cfg, data);
    for (const auto& ks : vs.ksets) CHECK(ks.size() == 1);
  }

  SECTION("S=2^H forces the full state space") {
    TvsConfig cfg = TvsConfig::uniform(4, 1, 0, 0, 3);
    const VariationalState vs = init_ksets(model, cfg, data);
    for (const auto& ks : vs.ksets) {
      REQUIRE(ks.size() == 4);
      CHECK(sorted_states(ks) ==
            std::vector<LatentState>{LatentState::from_index(2, 0), LatentState::from_index(2, 1),
                                     LatentState::from_index(2, 2), LatentState::from_index(2, 3)});
    }
  }

  SECTION("S above 2^H is a config error") {
    TvsConfig cfg = TvsConfig::uniform(5, 1, 0, 0, 3);
    CHECK_THROWS_AS(init_ksets(model, cfg, data), ConfigError);
  }
}

TEST_CASE("init_ksets deterministic fill under a degenerate prior", "[engine]") {
  // pi = 0: the prior only ever produces the all-zero state
  BscParams p = fixtures::random_bsc_params(3, 2, 51);
  p.pi = 0.0;
  const BscModel model(p);
  const Dataset data = BscModel::generate(p, 2, 52);
  TvsConfig cfg = TvsConfig::uniform(4, 1, 0, 0, 9);
  cfg.dedup_retry_cap = 20;
  const VariationalState vs = init_ksets(model, cfg, data);
  for (const auto& ks : vs.ksets) {
    REQUIRE(ks.size() == 4);
    // zero state, both one-hots, then the counter fill reaches 11
    CHECK(sorted_states(ks) ==
          std::vector<LatentState>{LatentState::from_index(2, 0), LatentState::from_index(2, 1),
                                   LatentState::from_index(2, 2), LatentState::from_index(2, 3)});
  }
}

TEST_CASE("init_ksets holds unique-state and size invariants at scale", "[engine]") {
  const BscParams p = fixtures::random_bsc_params(25, 10, 61, 0.2);
  const BscModel model(p);
  const Dataset data = BscModel::generate(p, 2000, 62);
  TvsConfig cfg = TvsConfig::uniform(64, 1, 0, 0, 99);
  const VariationalState vs = init_ksets(model, cfg, data);
  for (const auto& ks : vs.ksets) {
    REQUIRE(ks.size() == 64);
    std::unordered_set<LatentState, LatentStateHash> unique(ks.states.begin(), ks.states.end());
    REQUIRE(unique.size() == 64);
  }
}

TEST_CASE("refresh_log_joints is bit-stable for unchanged parameters", "[engine]") {
  const BscParams p = fixtures::random_bsc_params(4, 3, 71);
  BscModel model(p);
  const Dataset data = BscModel::generate(p, 10, 72);
  TvsConfig cfg = TvsConfig::uniform(4, 1, 0, 0, 3);
  VariationalState vs = init_ksets(model, cfg, data);
  const VariationalState before = vs;
  refresh_log_joints(vs, model, data, 2);
  for (int n = 0; n < vs.n(); ++n) CHECK(vs.ksets[n].log_joints == before.ksets[n].log_joints);

  // after a parameter update the caches match direct recomputation
  model.m_step(vs, data, 1);
  refresh_log_joints(vs, model, data, 1);
  for (int n = 0; n < vs.n(); ++n)
    for (int i = 0; i < vs.ksets[n].size(); ++i)
      CHECK(vs.ksets[n].log_joints[i] ==
            model.log_joint(vs.ksets[n].states[i], data.Y.row(n).transpose()));
}

TEST_CASE("one exhaustive TVS iteration equals the exact EM update", "[engine]") {
  const int D = 4, H = 3, N = 12;
  const BscParams gen = fixtures::random_bsc_params(D, H, 81);
  const Dataset data = BscModel::generate(gen, N, 82);
  const BscParams init = fixtures::random_bsc_params(D, H, 83, 0.4, 0.8);
  BscModel model(init);
  TvsConfig cfg = TvsConfig::uniform(1 << H, 1, 1, 1, 84);
  SamplerBundle bundle;
  const FitResult res = tvs_fit(model, data, cfg, bundle);

  const oracle::BscUpdate want = oracle::bsc_exact_em(data.Y, init.pi, init.W, init.sigma2);
  CHECK_THAT(model.params().pi, Catch::Matchers::WithinAbs(want.pi, 1e-10));
  CHECK_THAT(model.params().sigma2, Catch::Matchers::WithinAbs(want.sigma2, 1e-10));
  CHECK((model.params().W - want.W).cwiseAbs().maxCoeff() < 1e-10);
  REQUIRE(res.log.rows.size() == 1);
}

TEST_CASE("zero iterations log only the initial free energy", "[engine]") {
  const BscParams p = fixtures::random_bsc_params(4, 3, 91);
  BscModel model(p);
  const Dataset data = BscModel::generate(p, 5, 92);
  TvsConfig cfg = TvsConfig::uniform(4, 1, 1, 0, 93);
  SamplerBundle bundle;
  const FitResult res = tvs_fit(model, data, cfg, bundle);
  REQUIRE(res.log.rows.size() == 1);
  CHECK(res.log.rows[0].iteration == 0);
  CHECK(res.log.rows[0].free_energy == free_energy(res.state));
  CHECK(model.params().pi == p.pi);  // parameters untouched
  CHECK(model.params().W == p.W);
}

TEST_CASE("identical seeds give bit-identical trajectories", "[engine]") {
  const BscParams gen = fixtures::random_bsc_params(9, 4, 101, 0.3, 1.0);
  const Dataset data = BscModel::generate(gen, 50, 102);
  auto run = [&]() {
    Rng rng(55);
    BscModel model = BscModel::init_from_data(data, 4, rng);
    TvsConfig cfg = TvsConfig::uniform(8, 4, 4, 12, 1234);
    cfg.threads = 2;
    SamplerBundle bundle;
    return trajectory_csv(tvs_fit(model, data, cfg, bundle).log);
  };
  const std::string a = run();
  const std::string b = run();
  CHECK(a == b);
}

TEST_CASE("schedule validation catches gaps and empty batches", "[engine]") {
  TvsConfig cfg;
  cfg.S = 4;
  cfg.total_iterations = 10;
  cfg.schedule = {{0, 5, 1, 1}, {6, 10, 1, 1}};
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);
  cfg.schedule = {{0, 5, 1, 1}};
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);
  cfg.schedule = {{0, 5, 1, 1}, {5, 10, 0, 0}};
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);
  cfg.schedule = {{5, 10, 1, 1}, {0, 5, 3, 0}};  // order does not matter
  CHECK_NOTHROW(validate_config(cfg));
  cfg.S = 0;
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);
}

TEST_CASE("fit rejects empty data and dimension mismatches", "[engine]") {
  const BscParams p = fixtures::random_bsc_params(4, 3, 111);
  BscModel model(p);
  SamplerBundle bundle;
  TvsConfig cfg = TvsConfig::uniform(2, 1, 1, 3, 7);
  Dataset empty;
  empty.Y.resize(0, 4);
  CHECK_THROWS_AS(tvs_fit(model, empty, cfg, bundle), ConfigError);
  Dataset wrong;
  wrong.Y = MatrixRM::Zero(3, 5);
  CHECK_THROWS_AS(tvs_fit(model, wrong, cfg, bundle), ConfigError);
}

TEST_CASE("state-set checkpoints round trip bit-exactly", "[engine]") {
  const BscParams p = fixtures::random_bsc_params(6, 70, 121, 0.3);
  const BscModel model(p);
  const Dataset data = BscModel::generate(p, 9, 122);
  TvsConfig cfg = TvsConfig::uniform(16, 1, 0, 0, 5);
  const VariationalState vs = init_ksets(model, cfg, data);
  const auto path = std::filesystem::temp_directory_path() / "tvs_test_ksets.tvsk";
  save_ksets(vs, model.latent_dim(), path.string());
  int H = 0;
  VariationalState loaded = load_ksets(path.string(), &H);
  CHECK(H == 70);
  REQUIRE(loaded.n() == vs.n());
  for (int n = 0; n < vs.n(); ++n) {
    REQUIRE(loaded.ksets[n].capacity == vs.ksets[n].capacity);
    for (int i = 0; i < vs.ksets[n].size(); ++i) {
      const auto a = vs.ksets[n].states[i].words();
      const auto b = loaded.ksets[n].states[i].words();
      CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
    }
  }
  std::filesystem::remove(path);
}

TEST_CASE("resuming mid-run continues bit-identically", "[engine]") {
  const BscParams gen = fixtures::random_bsc_params(9, 4, 131, 0.25, 1.0);
  const Dataset data = BscModel::generate(gen, 60, 132);
  const std::uint64_t seed = 4242;
  TvsConfig cfg = TvsConfig::uniform(8, 3, 3, 10, seed);

  Rng rng_a(5);
  BscModel full = BscModel::init_from_data(data, 4, rng_a);
  SamplerBundle bundle;
  const FitResult full_run = tvs_fit(full, data, cfg, bundle);

  // replay the first half, snapshot, then continue on fresh objects
  Rng rng_b(5);
  BscModel half = BscModel::init_from_data(data, 4, rng_b);
  TvsConfig cfg_half = cfg;
  cfg_half.total_iterations = 5;
  cfg_half.schedule = {{0, 5, 3, 3}};
  SamplerBundle bundle_b;
  FitResult half_run = tvs_fit(half, data, cfg_half, bundle_b);

  BscModel resumed(half.params());
  VariationalState vs = half_run.state;
  refresh_log_joints(vs, resumed, data);
  SamplerBundle bundle_c;
  const TrajectoryLog tail = run_tvs(resumed, data, cfg, bundle_c, vs, 5);

  REQUIRE(full_run.log.rows.size() == 10);
  REQUIRE(tail.rows.size() == 5);
  for (int i = 0; i < 5; ++i) {
    const TrajectoryRow& a = full_run.log.rows[5 + i];
    const TrajectoryRow& b = tail.rows[i];
    CHECK(a.iteration == b.iteration);
    CHECK(a.free_energy == b.free_energy);
    CHECK(a.scalars == b.scalars);
  }
}
