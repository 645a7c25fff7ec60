#pragma once

#include <optional>
#include <string>
#include <variant>

#include "tvs/amortizer.hpp"
#include "tvs/data.hpp"
#include "tvs/engine.hpp"
#include "tvs/io.hpp"
#include "tvs/model_bsc.hpp"
#include "tvs/model_sbn.hpp"

namespace tvs {

// ---------------------------------------------------------------------------
// Parameter checkpoint (magic TVSP): dimension header, then flat little-endian
// f64 blocks.
//   bsc: pi, sigma2, W (row-major)
//   sbn: pi[H], b[D], W (row-major)

constexpr std::uint32_t kParamsVersion = 1;

struct ParamsCheckpoint {
  ModelKind kind = ModelKind::bsc;
  std::variant<BscParams, SbnParams> params;

  int data_dim() const {
    return kind == ModelKind::bsc ? static_cast<int>(std::get<BscParams>(params).W.rows())
                                  : static_cast<int>(std::get<SbnParams>(params).W.rows());
  }
  int latent_dim() const {
    return kind == ModelKind::bsc ? static_cast<int>(std::get<BscParams>(params).W.cols())
                                  : static_cast<int>(std::get<SbnParams>(params).W.cols());
  }
  const Eigen::MatrixXd& W() const {
    return kind == ModelKind::bsc ? std::get<BscParams>(params).W : std::get<SbnParams>(params).W;
  }
};

inline void save_params(const ParamsCheckpoint& ckpt, BinWriter& w) {
  w.magic("TVSP");
  w.u32(kParamsVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.kind));
  w.u32(static_cast<std::uint32_t>(ckpt.data_dim()));
  w.u32(static_cast<std::uint32_t>(ckpt.latent_dim()));
  if (ckpt.kind == ModelKind::bsc) {
    const auto& p = std::get<BscParams>(ckpt.params);
    w.f64(p.pi);
    w.f64(p.sigma2);
    w.matrix_f64(p.W);
  } else {
    const auto& p = std::get<SbnParams>(ckpt.params);
    w.vector_f64(p.pi);
    w.vector_f64(p.b);
    w.matrix_f64(p.W);
  }
}

inline void save_params(const ParamsCheckpoint& ckpt, const std::string& path) {
  BinWriter w(path);
  save_params(ckpt, w);
  w.close();
}

inline ParamsCheckpoint load_params(BinReader& r) {
  r.expect_magic("TVSP");
  if (r.u32() != kParamsVersion) throw IoError("unsupported params checkpoint version");
  ParamsCheckpoint ckpt;
  ckpt.kind = static_cast<ModelKind>(r.u32());
  const auto D = static_cast<Eigen::Index>(r.u32());
  const auto H = static_cast<Eigen::Index>(r.u32());
  if (ckpt.kind == ModelKind::bsc) {
    BscParams p;
    p.pi = r.f64();
    p.sigma2 = r.f64();
    p.W.resize(D, H);
    r.matrix_f64(p.W);
    ckpt.params = std::move(p);
  } else {
    SbnParams p;
    p.pi.resize(H);
    r.vector_f64(p.pi);
    p.b.resize(D);
    r.vector_f64(p.b);
    p.W.resize(D, H);
    r.matrix_f64(p.W);
    ckpt.params = std::move(p);
  }
  return ckpt;
}

inline ParamsCheckpoint load_params(const std::string& path) {
  BinReader r(path);
  return load_params(r);
}

// ---------------------------------------------------------------------------
// Fit-state checkpoint (magic TVSF): everything needed to continue a fit
// bit-identically — parameters, state sets, iteration cursor, seed, optimizer
// state, and the amortizer net when one is in play.

constexpr std::uint32_t kFitStateVersion = 1;

struct FitStateCheckpoint {
  std::uint64_t rng_seed = 0;
  int next_iteration = 0;
  double sbn_lr = 0.0;  // meaningful for sbn only
  ParamsCheckpoint params;
  VariationalState state;  // log-joint caches are not stored
  std::optional<AmortizerNet> net;
};

inline void save_fit_state(const FitStateCheckpoint& ckpt, const std::string& path) {
  BinWriter w(path);
  w.magic("TVSF");
  w.u32(kFitStateVersion);
  w.u64(ckpt.rng_seed);
  w.u32(static_cast<std::uint32_t>(ckpt.next_iteration));
  w.f64(ckpt.sbn_lr);
  w.u32(ckpt.net ? 1 : 0);
  save_params(ckpt.params, w);
  save_ksets(ckpt.state, ckpt.params.latent_dim(), w);
  if (ckpt.net) save_amortizer(*ckpt.net, w);
  w.close();
}

inline FitStateCheckpoint load_fit_state(const std::string& path) {
  BinReader r(path);
  r.expect_magic("TVSF");
  if (r.u32() != kFitStateVersion) throw IoError("unsupported fit-state checkpoint version");
  FitStateCheckpoint ckpt;
  ckpt.rng_seed = r.u64();
  ckpt.next_iteration = static_cast<int>(r.u32());
  ckpt.sbn_lr = r.f64();
  const std::uint32_t has_net = r.u32();
  ckpt.params = load_params(r);
  ckpt.state = load_ksets(r);
  if (has_net == 1) ckpt.net = load_amortizer(r);
  return ckpt;
}

// Accepts either a params checkpoint or a full fit-state checkpoint.
inline ParamsCheckpoint load_any_params(const std::string& path) {
  {
    BinReader sniff(path);
    char m[4];
    sniff.bytes(m, 4);
    if (std::memcmp(m, "TVSF", 4) == 0) return load_fit_state(path).params;
  }
  return load_params(path);
}

}  // namespace tvs
