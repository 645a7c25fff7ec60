#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <concepts>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tvs/data.hpp"
#include "tvs/errors.hpp"
#include "tvs/io.hpp"
#include "tvs/latent_state.hpp"
#include "tvs/math.hpp"
#include "tvs/parallel.hpp"
#include "tvs/rng.hpp"
#include "tvs/samplers.hpp"
#include "tvs/state_set.hpp"

namespace tvs {

// One state set per datapoint: the variational parameters of the whole fit.
struct VariationalState {
  std::vector<StateSet> ksets;
  double free_energy = std::numeric_limits<double>::quiet_NaN();
  long iteration = 0;

  int n() const { return static_cast<int>(ksets.size()); }
};

struct ScheduleEntry {
  int begin = 0;  // [begin, end)
  int end = 0;
  int m_p = 0;  // prior samples per datapoint per iteration
  int m_q = 0;  // marginal samples per datapoint per iteration
};

struct TvsConfig {
  int S = 1;
  std::vector<ScheduleEntry> schedule;
  int total_iterations = 0;
  std::uint64_t rng_seed = 0;
  int dedup_retry_cap = 1000;
  bool amortizer_enabled = false;
  int amortizer_refresh_period = 5;
  int threads = 0;  // 0: TVS_THREADS env, then hardware concurrency

  static TvsConfig uniform(int S, int m_p, int m_q, int iterations, std::uint64_t seed) {
    TvsConfig cfg;
    cfg.S = S;
    cfg.total_iterations = iterations;
    cfg.rng_seed = seed;
    if (iterations > 0) cfg.schedule.push_back({0, iterations, m_p, m_q});
    return cfg;
  }
};

inline void validate_config(const TvsConfig& cfg) {
  if (cfg.S < 1) throw ConfigError("S must be >= 1");
  if (cfg.total_iterations < 0) throw ConfigError("total_iterations must be >= 0");
  if (cfg.dedup_retry_cap < 0) throw ConfigError("dedup_retry_cap must be >= 0");
  if (cfg.amortizer_enabled && cfg.amortizer_refresh_period < 1)
    throw ConfigError("amortizer_refresh_period must be >= 1");
  if (cfg.total_iterations == 0) return;
  std::vector<ScheduleEntry> entries = cfg.schedule;
  std::sort(entries.begin(), entries.end(),
            [](const ScheduleEntry& a, const ScheduleEntry& b) { return a.begin < b.begin; });
  int expected = 0;
  for (const ScheduleEntry& e : entries) {
    if (e.begin != expected) throw ConfigError("schedule gap at iteration " + std::to_string(expected));
    if (e.end <= e.begin) throw ConfigError("empty schedule entry at iteration " + std::to_string(e.begin));
    if (e.m_p < 0 || e.m_q < 0 || e.m_p + e.m_q < 1)
      throw ConfigError("schedule entry needs m_p >= 0, m_q >= 0, m_p + m_q >= 1");
    expected = e.end;
  }
  if (expected != cfg.total_iterations)
    throw ConfigError("schedule does not cover [0, total_iterations)");
}

inline const ScheduleEntry& schedule_at(const TvsConfig& cfg, int iteration) {
  for (const ScheduleEntry& e : cfg.schedule) {
    if (iteration >= e.begin && iteration < e.end) return e;
  }
  throw ConfigError("schedule gap at iteration " + std::to_string(iteration));
}

// ---------------------------------------------------------------------------
// Model contracts

template <typename M>
concept LogJointModel = requires(const M m, const LatentState& s, Eigen::Ref<const Eigen::VectorXd> y) {
  { m.latent_dim() } -> std::convertible_to<int>;
  { m.data_dim() } -> std::convertible_to<int>;
  { m.log_joint(s, y) } -> std::convertible_to<double>;
};

template <typename M>
concept PriorModel = LogJointModel<M> && requires(const M m, Rng& rng) {
  { m.sample_prior(rng) } -> std::same_as<LatentState>;
};

template <typename M>
concept GenerativeModel = PriorModel<M> && requires(M m, const M cm, const VariationalState& vs,
                                                    const Dataset& data, int threads) {
  { m.m_step(vs, data, threads) };
  { cm.scalar_names() } -> std::convertible_to<std::vector<std::string>>;
  { cm.scalars() } -> std::convertible_to<std::vector<double>>;
};

// ---------------------------------------------------------------------------
// Core operations

// Partial E-step for one datapoint: score the proposals, merge with the
// incumbents (duplicates dropped), keep the S states with the largest
// log-joints. Selection runs in linear time via nth_element; ties break on
// the packed state value so the result never depends on input order.
template <LogJointModel Model>
StateSet tv_e_step(const StateSet& kset, std::span<const LatentState> proposals,
                   const Model& model, Eigen::Ref<const Eigen::VectorXd> y) {
  const int S = kset.capacity;
  if (kset.size() != S) throw ContractViolation("tv_e_step: incumbent set must hold exactly S states");

  std::vector<LatentState> cand = kset.states;
  std::vector<double> lj = kset.log_joints;
  std::unordered_set<LatentState, LatentStateHash> seen(cand.begin(), cand.end(),
                                                        cand.size() + proposals.size());
  for (const LatentState& p : proposals) {
    if (seen.insert(p).second) {
      cand.push_back(p);
      lj.push_back(model.log_joint(p, y));
    }
  }

  std::vector<int> idx(cand.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto better = [&](int a, int b) {
    if (lj[a] != lj[b]) return lj[a] > lj[b];
    return packed_less(cand[a], cand[b]);
  };
  if (static_cast<int>(idx.size()) > S)
    std::nth_element(idx.begin(), idx.begin() + S, idx.end(), better);
  idx.resize(S);
  std::sort(idx.begin(), idx.end(), better);

  StateSet out;
  out.capacity = S;
  out.states.reserve(S);
  out.log_joints.reserve(S);
  for (int i : idx) {
    out.states.push_back(std::move(cand[i]));
    out.log_joints.push_back(lj[i]);
  }
  return out;
}

// Deterministic fill used when prior sampling stops producing new states:
// the all-zero state, the one-hot states in index order, then the remaining
// states in packed-counter order, skipping anything already present.
inline void fill_deterministic(StateSet& kset, std::unordered_set<LatentState, LatentStateHash>& seen,
                               int H, int S) {
  auto try_add = [&](LatentState&& s) {
    if (kset.size() >= S) return;
    if (seen.insert(s).second) kset.states.push_back(std::move(s));
  };
  try_add(LatentState(H));
  for (int h = 0; h < H && kset.size() < S; ++h) {
    LatentState s(H);
    s.set_bit(h, true);
    try_add(std::move(s));
  }
  for (std::uint64_t idx = 0; kset.size() < S; ++idx) try_add(LatentState::from_index(H, idx));
}

template <PriorModel Model>
VariationalState init_ksets(const Model& model, const TvsConfig& cfg, const Dataset& data) {
  const int H = model.latent_dim();
  const int S = cfg.S;
  if (S < 1) throw ConfigError("S must be >= 1");
  if (H < 63 && static_cast<std::uint64_t>(S) > (1ULL << H))
    throw ConfigError("S exceeds the number of distinct latent states (2^H)");
  const int N = data.n();
  VariationalState vs;
  vs.ksets.resize(N);
  const int threads = resolve_threads(cfg.threads);
  parallel_for_blocks(N, threads, [&](long, long lo, long hi) {
    for (long n = lo; n < hi; ++n) {
      Rng rng = derive_rng(cfg.rng_seed, Stream::kset_init, 0, static_cast<std::uint64_t>(n));
      StateSet ks;
      ks.capacity = S;
      ks.states.reserve(S);
      std::unordered_set<LatentState, LatentStateHash> seen;
      int fails = 0;
      while (ks.size() < S && fails < cfg.dedup_retry_cap) {
        LatentState s = model.sample_prior(rng);
        if (seen.insert(s).second) {
          ks.states.push_back(std::move(s));
        } else {
          ++fails;
        }
      }
      if (ks.size() < S) fill_deterministic(ks, seen, H, S);
      ks.log_joints.resize(S);
      const auto y = data.Y.row(n).transpose();
      for (int i = 0; i < S; ++i) ks.log_joints[i] = model.log_joint(ks.states[i], y);
      vs.ksets[n] = std::move(ks);
    }
  });
  return vs;
}

template <LogJointModel Model>
void refresh_log_joints(VariationalState& vs, const Model& model, const Dataset& data,
                        int threads = 1) {
  parallel_for_blocks(vs.n(), threads, [&](long, long lo, long hi) {
    for (long n = lo; n < hi; ++n) {
      StateSet& ks = vs.ksets[n];
      const auto y = data.Y.row(n).transpose();
      for (int i = 0; i < ks.size(); ++i) ks.log_joints[i] = model.log_joint(ks.states[i], y);
    }
  });
}

// Truncated free energy: sum over datapoints of logsumexp of the cached
// log-joints. Caches must be fresh for the current parameters.
inline double free_energy(const VariationalState& vs, int threads = 1) {
  const long N = vs.n();
  const long nb = num_blocks(N);
  std::vector<double> partial(nb, 0.0);
  parallel_for_blocks(N, threads, [&](long b, long lo, long hi) {
    KahanSum acc;
    for (long n = lo; n < hi; ++n) {
      if (vs.ksets[n].states.empty())
        throw ContractViolation("free_energy: empty state set at datapoint " + std::to_string(n));
      const double lse = set_logsumexp(vs.ksets[n]);
      if (lse == kNegInf)
        throw DegenerateJointError("free_energy: all log-joints are -inf for datapoint " +
                                   std::to_string(n));
      acc.add(lse);
    }
    partial[b] = acc.value();
  });
  return pairwise_sum(partial);
}

// ---------------------------------------------------------------------------
// Trajectory log

struct TrajectoryRow {
  int iteration = 0;
  double free_energy = 0.0;
  int m_p = 0;
  int m_q = 0;
  std::vector<double> scalars;
};

struct TrajectoryLog {
  std::vector<std::string> scalar_names;
  std::vector<TrajectoryRow> rows;
};

inline std::string trajectory_csv_header(const std::vector<std::string>& scalar_names) {
  std::string h = "iteration,free_energy";
  for (const auto& name : scalar_names) h += "," + name;
  h += ",m_p,m_q";
  return h;
}

inline std::string trajectory_csv_row(const TrajectoryRow& row) {
  std::string s = std::to_string(row.iteration) + "," + format_double(row.free_energy);
  for (double v : row.scalars) s += "," + format_double(v);
  s += "," + std::to_string(row.m_p) + "," + std::to_string(row.m_q);
  return s;
}

inline std::string trajectory_csv(const TrajectoryLog& log) {
  std::string s = trajectory_csv_header(log.scalar_names) + "\n";
  for (const TrajectoryRow& row : log.rows) s += trajectory_csv_row(row) + "\n";
  return s;
}

// ---------------------------------------------------------------------------
// Fit loop

using FitObserver = std::function<void(const TrajectoryRow&, const VariationalState&)>;

namespace detail {

template <typename E>
[[noreturn]] void rethrow_with_iteration(const E& e, int iteration) {
  throw E("iteration " + std::to_string(iteration) + ": " + e.what());
}

}  // namespace detail

// Runs iterations [start_iteration, total_iterations) on an existing
// variational state whose log-joint caches are fresh. Each iteration:
// sampler adjustment, per-datapoint proposals + partial E-step, M-step,
// cache refresh, free-energy evaluation (the logged value).
template <GenerativeModel Model>
TrajectoryLog run_tvs(Model& model, const Dataset& data, const TvsConfig& cfg,
                      SamplerBundle& bundle, VariationalState& vs, int start_iteration = 0,
                      const FitObserver& on_row = {}) {
  validate_config(cfg);
  if (data.n() == 0) throw ConfigError("empty dataset");
  if (model.data_dim() != data.d()) throw ConfigError("model/data dimension mismatch");
  if ((cfg.amortizer_enabled || bundle.source == MarginalSource::amortized) && !bundle.net)
    throw ConfigError("amortized marginals requested but no net provided");

  const int N = data.n();
  const int threads = resolve_threads(cfg.threads);
  TrajectoryLog log;
  log.scalar_names = model.scalar_names();

  auto emit = [&](TrajectoryRow row) {
    log.rows.push_back(row);
    if (on_row) on_row(log.rows.back(), vs);
  };

  if (cfg.total_iterations == 0 && start_iteration == 0) {
    TrajectoryRow row{0, free_energy(vs, threads), 0, 0, model.scalars()};
    vs.free_energy = row.free_energy;
    emit(std::move(row));
    return log;
  }

  for (int t = start_iteration; t < cfg.total_iterations; ++t) {
    const ScheduleEntry& entry = schedule_at(cfg, t);
    const int m_p = entry.m_p;
    const int m_q = entry.m_q;

    if (cfg.amortizer_enabled && t % cfg.amortizer_refresh_period == 0) {
      MatrixRM targets(N, model.latent_dim());
      parallel_for_blocks(N, threads, [&](long, long lo, long hi) {
        for (long n = lo; n < hi; ++n) targets.row(n) = truncated_marginals(vs.ksets[n]).transpose();
      });
      Rng rng = derive_rng(cfg.rng_seed, Stream::amortizer, static_cast<std::uint64_t>(t), 0);
      amortizer_train(*bundle.net, data.Y, targets, bundle.train_opts, rng);
    }

    parallel_for_blocks(N, threads, [&](long, long lo, long hi) {
      for (long n = lo; n < hi; ++n) {
        Rng rng = derive_rng(cfg.rng_seed, Stream::proposals, static_cast<std::uint64_t>(t),
                             static_cast<std::uint64_t>(n));
        const auto y = data.Y.row(n).transpose();
        std::vector<LatentState> proposals = prior_draw(model, m_p, rng);
        if (m_q > 0) {
          const Eigen::VectorXd probs = bundle.source == MarginalSource::amortized
                                            ? bundle.net->forward(y)
                                            : truncated_marginals(vs.ksets[n]);
          std::vector<LatentState> mq =
              marginal_draw(probs, m_q, rng, bundle.clamp_lo, bundle.clamp_hi);
          for (auto& s : mq) proposals.push_back(std::move(s));
        }
        vs.ksets[n] = tv_e_step(vs.ksets[n], proposals, model, y);
      }
    });

    try {
      model.m_step(vs, data, threads);
    } catch (const SingularStatsError& e) {
      detail::rethrow_with_iteration(e, t);
    } catch (const DivergenceError& e) {
      detail::rethrow_with_iteration(e, t);
    } catch (const Error& e) {
      detail::rethrow_with_iteration(e, t);
    }
    refresh_log_joints(vs, model, data, threads);

    TrajectoryRow row{t, free_energy(vs, threads), m_p, m_q, model.scalars()};
    vs.free_energy = row.free_energy;
    vs.iteration = t + 1;
    emit(std::move(row));
  }
  return log;
}

struct FitResult {
  TrajectoryLog log;
  VariationalState state;
};

// Full fit from scratch: prior-sampled state sets, then the iteration loop.
template <GenerativeModel Model>
FitResult tvs_fit(Model& model, const Dataset& data, const TvsConfig& cfg, SamplerBundle& bundle,
                  const FitObserver& on_row = {}) {
  validate_config(cfg);
  if (data.n() == 0) throw ConfigError("empty dataset");
  FitResult result;
  result.state = init_ksets(model, cfg, data);
  result.log = run_tvs(model, data, cfg, bundle, result.state, 0, on_row);
  return result;
}

// ---------------------------------------------------------------------------
// Held-out evaluation: free energy under fixed parameters, improved by
// iterating the partial E-step on fresh state sets.

struct EvalOpts {
  int e_steps = 50;
  int m_p = 10;
  int m_q = 20;
  double clamp_lo = 0.01;
  double clamp_hi = 0.99;
  std::uint64_t seed = 0;
  int dedup_retry_cap = 1000;
  int threads = 0;
};

// Returns e_steps + 1 values: free energy after initialization and after
// each E-step pass. Non-decreasing up to arithmetic slack.
template <PriorModel Model>
std::vector<double> eval_free_energy_curve(const Model& model, const Dataset& data, int S,
                                           const EvalOpts& opts) {
  TvsConfig cfg;
  cfg.S = S;
  cfg.rng_seed = opts.seed;
  cfg.dedup_retry_cap = opts.dedup_retry_cap;
  cfg.threads = opts.threads;
  VariationalState vs = init_ksets(model, cfg, data);
  const int threads = resolve_threads(opts.threads);
  std::vector<double> curve;
  curve.push_back(free_energy(vs, threads));
  for (int step = 0; step < opts.e_steps; ++step) {
    parallel_for_blocks(data.n(), threads, [&](long, long lo, long hi) {
      for (long n = lo; n < hi; ++n) {
        Rng rng = derive_rng(opts.seed, Stream::eval, static_cast<std::uint64_t>(step) + 1,
                             static_cast<std::uint64_t>(n));
        const auto y = data.Y.row(n).transpose();
        std::vector<LatentState> proposals = prior_draw(model, opts.m_p, rng);
        if (opts.m_q > 0) {
          const Eigen::VectorXd probs = truncated_marginals(vs.ksets[n]);
          std::vector<LatentState> mq =
              marginal_draw(probs, opts.m_q, rng, opts.clamp_lo, opts.clamp_hi);
          for (auto& s : mq) proposals.push_back(std::move(s));
        }
        vs.ksets[n] = tv_e_step(vs.ksets[n], proposals, model, y);
      }
    });
    curve.push_back(free_energy(vs, threads));
  }
  return curve;
}

// ---------------------------------------------------------------------------
// State-set checkpoint (magic TVSK): packed bitstrings only; log-joints are
// rebuilt by the loader's caller. Bit-exact round trip.

constexpr std::uint32_t kKsetVersion = 1;

inline void save_ksets(const VariationalState& vs, int latent_dim, BinWriter& w) {
  const int N = vs.n();
  const int S = N > 0 ? vs.ksets.front().capacity : 0;
  w.magic("TVSK");
  w.u32(kKsetVersion);
  w.u32(static_cast<std::uint32_t>(N));
  w.u32(static_cast<std::uint32_t>(latent_dim));
  w.u32(static_cast<std::uint32_t>(S));
  for (const StateSet& ks : vs.ksets) {
    if (ks.size() != S) throw Error("save_ksets: state set size differs from capacity");
    for (const LatentState& s : ks.states) {
      const auto words = s.words();
      w.bytes(words.data(), words.size() * sizeof(std::uint64_t));
    }
  }
}

inline void save_ksets(const VariationalState& vs, int latent_dim, const std::string& path) {
  BinWriter w(path);
  save_ksets(vs, latent_dim, w);
  w.close();
}

// Loads states with stale (NaN) log-joint caches; refresh before use.
inline VariationalState load_ksets(BinReader& r, int* latent_dim_out = nullptr) {
  r.expect_magic("TVSK");
  if (r.u32() != kKsetVersion) throw IoError("unsupported state-set checkpoint version");
  const int N = static_cast<int>(r.u32());
  const int H = static_cast<int>(r.u32());
  const int S = static_cast<int>(r.u32());
  if (latent_dim_out) *latent_dim_out = H;
  VariationalState vs;
  vs.ksets.resize(N);
  for (int n = 0; n < N; ++n) {
    StateSet ks;
    ks.capacity = S;
    ks.states.reserve(S);
    for (int i = 0; i < S; ++i) {
      LatentState s(H);
      auto words = s.mutable_words();
      r.bytes(words.data(), words.size() * sizeof(std::uint64_t));
      ks.states.push_back(std::move(s));
    }
    ks.log_joints.assign(S, std::numeric_limits<double>::quiet_NaN());
    vs.ksets[n] = std::move(ks);
  }
  return vs;
}

inline VariationalState load_ksets(const std::string& path, int* latent_dim_out = nullptr) {
  BinReader r(path);
  return load_ksets(r, latent_dim_out);
}

}  // namespace tvs
