#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "tvs/amortizer.hpp"
#include "tvs/latent_state.hpp"
#include "tvs/rng.hpp"
#include "tvs/state_set.hpp"

namespace tvs {

enum class MarginalSource { truncated, amortized };

// Proposal machinery for the variational E-step: model-prior samples explore,
// marginal samples exploit what the current sets already know.
struct SamplerBundle {
  MarginalSource source = MarginalSource::truncated;
  // Marginal probabilities are clamped to [lo, hi] before sampling so a
  // collapsed marginal can still propose bit flips. (0, 1) disables clamping.
  double clamp_lo = 0.01;
  double clamp_hi = 0.99;
  std::optional<AmortizerNet> net;
  AmortizerTrainOpts train_opts;
};

template <typename Model>
std::vector<LatentState> prior_draw(const Model& model, int m, Rng& rng) {
  std::vector<LatentState> out;
  out.reserve(m > 0 ? m : 0);
  for (int i = 0; i < m; ++i) out.push_back(model.sample_prior(rng));
  return out;
}

// Per-latent activation probabilities of the truncated posterior.
inline Eigen::VectorXd truncated_marginals(const StateSet& kset) { return mean_state(kset); }

// Independent Bernoulli samples from (clamped) per-latent probabilities.
inline std::vector<LatentState> marginal_draw(Eigen::Ref<const Eigen::VectorXd> probs, int m,
                                              Rng& rng, double clamp_lo = 0.01,
                                              double clamp_hi = 0.99) {
  const int H = static_cast<int>(probs.size());
  std::vector<LatentState> out;
  out.reserve(m > 0 ? m : 0);
  for (int i = 0; i < m; ++i) {
    out.push_back(LatentState::random(
        H, [&](int h) { return clamp01(probs[h], clamp_lo, clamp_hi); }, rng));
  }
  return out;
}

}  // namespace tvs
