#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "tvs/errors.hpp"
#include "tvs/latent_state.hpp"
#include "tvs/math.hpp"

namespace tvs {

// Per-datapoint set of distinct latent states with cached log-joint values.
// The states are the variational parameters; log_joints[i] caches
// log p(states[i], y | theta) and goes stale whenever theta changes.
struct StateSet {
  std::vector<LatentState> states;
  std::vector<double> log_joints;
  int capacity = 0;

  int size() const { return static_cast<int>(states.size()); }
  int latent_dim() const { return states.empty() ? 0 : states.front().size(); }
};

inline double set_logsumexp(const StateSet& kset) { return logsumexp(kset.log_joints); }

// Normalized posterior weights over the set, computed in the log domain.
inline std::vector<double> posterior_weights(const StateSet& kset) {
  if (kset.states.empty()) throw ContractViolation("posterior_weights: empty state set");
  double m = kNegInf;
  for (double lj : kset.log_joints) m = std::max(m, lj);
  if (m == kNegInf) throw DegenerateJointError("posterior_weights: all log-joints are -inf");
  std::vector<double> w(kset.log_joints.size());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(kset.log_joints[i] - m);
    total += w[i];
  }
  for (double& x : w) x /= total;
  return w;
}

// Expectation of a vector-valued state function under the set's weights.
template <typename G>
Eigen::VectorXd truncated_expectation(G&& g, const StateSet& kset, int out_dim) {
  const std::vector<double> w = posterior_weights(kset);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(out_dim);
  for (std::size_t i = 0; i < w.size(); ++i) out += w[i] * g(kset.states[i]);
  return out;
}

// Expected state <s>: the per-latent activation probabilities of the set.
inline Eigen::VectorXd mean_state(const StateSet& kset) {
  const std::vector<double> w = posterior_weights(kset);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(kset.latent_dim());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double wi = w[i];
    kset.states[i].for_each_active([&](int h) { out[h] += wi; });
  }
  return out;
}

}  // namespace tvs
