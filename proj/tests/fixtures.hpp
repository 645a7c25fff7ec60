// Shared toy-instance builders for the tests.
#pragma once

#include <Eigen/Core>

#include "tvs/engine.hpp"
#include "tvs/model_bsc.hpp"
#include "tvs/model_sbn.hpp"
#include "tvs/rng.hpp"

namespace fixtures {

inline tvs::BscParams random_bsc_params(int D, int H, std::uint64_t seed, double pi = 0.3,
                                        double sigma2 = 0.5) {
  tvs::Rng rng(seed);
  tvs::BscParams p;
  p.pi = pi;
  p.sigma2 = sigma2;
  p.W.resize(D, H);
  for (int d = 0; d < D; ++d)
    for (int h = 0; h < H; ++h) p.W(d, h) = rng.normal();
  return p;
}

inline tvs::SbnParams random_sbn_params(int D, int H, std::uint64_t seed) {
  tvs::Rng rng(seed);
  tvs::SbnParams p;
  p.pi.resize(H);
  for (int h = 0; h < H; ++h) p.pi(h) = rng.uniform(0.15, 0.7);
  p.W.resize(D, H);
  for (int d = 0; d < D; ++d)
    for (int h = 0; h < H; ++h) p.W(d, h) = rng.normal();
  p.b.resize(D);
  for (int d = 0; d < D; ++d) p.b(d) = 0.5 * rng.normal();
  return p;
}

// State set holding the entire latent space, joints freshly computed.
template <typename Model>
tvs::StateSet exhaustive_set(const Model& model, Eigen::Ref<const Eigen::VectorXd> y) {
  const int H = model.latent_dim();
  tvs::StateSet ks;
  ks.capacity = 1 << H;
  for (std::uint64_t idx = 0; idx < (1ULL << H); ++idx) {
    tvs::LatentState s = tvs::LatentState::from_index(H, idx);
    ks.log_joints.push_back(model.log_joint(s, y));
    ks.states.push_back(std::move(s));
  }
  return ks;
}

template <typename Model>
tvs::VariationalState exhaustive_state(const Model& model, const tvs::Dataset& data) {
  tvs::VariationalState vs;
  vs.ksets.reserve(data.n());
  for (int n = 0; n < data.n(); ++n)
    vs.ksets.push_back(exhaustive_set(model, data.Y.row(n).transpose()));
  return vs;
}

}  // namespace fixtures
