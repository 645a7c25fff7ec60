#include <catch2/catch_amalgamated.hpp>
#include <filesystem>

#include "fixtures.hpp"
#include "tvs/checkpoint.hpp"

using namespace tvs;

namespace {
const std::filesystem::path tmp = std::filesystem::temp_directory_path();
}

TEST_CASE("parameter checkpoints round trip bit-exactly", "[checkpoint]") {
  SECTION("gaussian-noise model") {
    ParamsCheckpoint ckpt;
    ckpt.kind = ModelKind::bsc;
    ckpt.params = fixtures::random_bsc_params(7, 4, 3, 0.217, 1.618);
    const auto path = (tmp / "tvs_test_params_bsc.tvsp").string();
    save_params(ckpt, path);
    const ParamsCheckpoint back = load_params(path);
    CHECK(back.kind == ModelKind::bsc);
    const auto& a = std::get<BscParams>(ckpt.params);
    const auto& b = std::get<BscParams>(back.params);
    CHECK(a.pi == b.pi);
    CHECK(a.sigma2 == b.sigma2);
    CHECK(a.W == b.W);
    std::filesystem::remove(path);
  }
  SECTION("all-binary model") {
    ParamsCheckpoint ckpt;
    ckpt.kind = ModelKind::sbn;
    ckpt.params = fixtures::random_sbn_params(6, 5, 4);
    const auto path = (tmp / "tvs_test_params_sbn.tvsp").string();
    save_params(ckpt, path);
    const ParamsCheckpoint back = load_params(path);
    CHECK(back.kind == ModelKind::sbn);
    const auto& a = std::get<SbnParams>(ckpt.params);
    const auto& b = std::get<SbnParams>(back.params);
    CHECK(a.pi == b.pi);
    CHECK(a.b == b.b);
    CHECK(a.W == b.W);
    std::filesystem::remove(path);
  }
}

TEST_CASE("fit-state checkpoints carry everything needed to resume", "[checkpoint]") {
  const BscParams p = fixtures::random_bsc_params(5, 3, 11, 0.3, 0.9);
  const BscModel model(p);
  const Dataset data = BscModel::generate(p, 12, 12);
  TvsConfig cfg = TvsConfig::uniform(4, 1, 0, 0, 13);
  FitStateCheckpoint ckpt;
  ckpt.rng_seed = 987654321;
  ckpt.next_iteration = 17;
  ckpt.sbn_lr = 0.25;
  ckpt.params.kind = ModelKind::bsc;
  ckpt.params.params = p;
  ckpt.state = init_ksets(model, cfg, data);
  Rng rng(14);
  ckpt.net = AmortizerNet::init(5, 6, 3, rng);

  const auto path = (tmp / "tvs_test_state.tvsf").string();
  save_fit_state(ckpt, path);
  const FitStateCheckpoint back = load_fit_state(path);
  CHECK(back.rng_seed == ckpt.rng_seed);
  CHECK(back.next_iteration == 17);
  CHECK(back.sbn_lr == 0.25);
  CHECK(std::get<BscParams>(back.params.params).W == p.W);
  REQUIRE(back.net.has_value());
  CHECK(back.net->W1 == ckpt.net->W1);
  REQUIRE(back.state.n() == ckpt.state.n());
  for (int n = 0; n < ckpt.state.n(); ++n)
    for (int i = 0; i < ckpt.state.ksets[n].size(); ++i)
      CHECK(back.state.ksets[n].states[i] == ckpt.state.ksets[n].states[i]);

  // the generic loader accepts both checkpoint flavors
  CHECK(load_any_params(path).kind == ModelKind::bsc);
  const auto ppath = (tmp / "tvs_test_state_params.tvsp").string();
  save_params(ckpt.params, ppath);
  CHECK(load_any_params(ppath).kind == ModelKind::bsc);
  std::filesystem::remove(path);
  std::filesystem::remove(ppath);
}

TEST_CASE("checkpoint loaders reject foreign magic", "[checkpoint]") {
  const auto path = (tmp / "tvs_test_badmagic.bin").string();
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPEnope";
  }
  CHECK_THROWS_AS(load_params(path), IoError);
  CHECK_THROWS_AS(load_fit_state(path), IoError);
  std::filesystem::remove(path);
}
