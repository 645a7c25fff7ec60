#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <string>
#include <vector>

#include "tvs/data.hpp"
#include "tvs/engine.hpp"
#include "tvs/errors.hpp"
#include "tvs/math.hpp"
#include "tvs/parallel.hpp"
#include "tvs/rng.hpp"

namespace tvs {

// Binary sparse coding: iid Bernoulli(pi) latents, observation y = W s plus
// isotropic Gaussian noise of variance sigma2.
struct BscParams {
  double pi = 0.1;
  Eigen::MatrixXd W;  // D x H
  double sigma2 = 1.0;
};

struct BscClamps {
  double pi_min = 1e-4;
  double sigma2_min = 1e-8;
};

// Aggregated truncated expectations of one full E-pass.
struct BscSuffStats {
  Eigen::VectorXd sum_s;   // sum_n <s>
  Eigen::MatrixXd sum_ys;  // sum_n y <s>^T
  Eigen::MatrixXd sum_ss;  // sum_n <s s^T>
  double sum_yy = 0.0;     // sum_n |y|^2
  long count = 0;

  // sum_n <|y - W s|^2> expanded through the aggregates, for any W.
  double expected_recon(const Eigen::MatrixXd& W) const {
    const double cross = (W.cwiseProduct(sum_ys)).sum();
    const double quad = ((W.transpose() * W).cwiseProduct(sum_ss)).sum();
    return sum_yy - 2.0 * cross + quad;
  }
};

class BscModel {
 public:
  BscModel(BscParams params, BscClamps clamps = {}) : p_(std::move(params)), clamps_(clamps) {
    rebuild_cache();
  }

  // sigma2 from the mean per-dimension data variance, pi = 1/H, dictionary
  // columns at the mean datapoint plus noise of std sigma/4.
  static BscModel init_from_data(const Dataset& data, int H, Rng& rng, BscClamps clamps = {}) {
    const int D = data.d();
    const int N = data.n();
    BscParams p;
    p.pi = 1.0 / static_cast<double>(H);
    const Eigen::VectorXd mean = data.Y.colwise().mean().transpose();
    double var = 0.0;
    if (N > 0) {
      for (int d = 0; d < D; ++d) {
        const double m = mean(d);
        double acc = 0.0;
        for (int n = 0; n < N; ++n) {
          const double diff = data.Y(n, d) - m;
          acc += diff * diff;
        }
        var += acc / static_cast<double>(N);
      }
      var /= static_cast<double>(D);
    }
    p.sigma2 = std::max(var, clamps.sigma2_min);
    const double noise_std = std::sqrt(p.sigma2) / 4.0;
    p.W.resize(D, H);
    for (int h = 0; h < H; ++h)
      for (int d = 0; d < D; ++d) p.W(d, h) = mean(d) + noise_std * rng.normal();
    return BscModel(std::move(p), clamps);
  }

  int latent_dim() const { return static_cast<int>(p_.W.cols()); }
  int data_dim() const { return static_cast<int>(p_.W.rows()); }
  const BscParams& params() const { return p_; }
  const BscClamps& clamps() const { return clamps_; }

  void set_params(BscParams p) {
    p_ = std::move(p);
    rebuild_cache();
  }

  double log_joint(const LatentState& s, Eigen::Ref<const Eigen::VectorXd> y) const {
    thread_local Eigen::VectorXd residual;
    residual = y;
    int active = 0;
    s.for_each_active([&](int h) {
      residual -= p_.W.col(h);
      ++active;
    });
    const double prior = active * log_pi_ + (latent_dim() - active) * log_1mpi_;
    return prior + gauss_norm_ - residual.squaredNorm() * inv_two_sigma2_;
  }

  LatentState sample_prior(Rng& rng) const {
    return LatentState::random(latent_dim(), [&](int) { return p_.pi; }, rng);
  }

  // Truncated expectations aggregated over the dataset, block-reduced in
  // fixed order so the result is independent of the thread count.
  static BscSuffStats suff_stats(const VariationalState& vs, const Dataset& data, int threads) {
    const int N = data.n();
    const int D = data.d();
    const int H = vs.ksets.empty() ? 0 : vs.ksets.front().latent_dim();
    const long nb = num_blocks(N);
    std::vector<BscSuffStats> partial(nb);
    for (auto& st : partial) {
      st.sum_s = Eigen::VectorXd::Zero(H);
      st.sum_ys = Eigen::MatrixXd::Zero(D, H);
      st.sum_ss = Eigen::MatrixXd::Zero(H, H);
    }
    parallel_for_blocks(N, threads, [&](long b, long lo, long hi) {
      BscSuffStats& st = partial[b];
      Eigen::VectorXd es(H);
      std::vector<int> active;
      for (long n = lo; n < hi; ++n) {
        const StateSet& ks = vs.ksets[n];
        const std::vector<double> w = posterior_weights(ks);
        es.setZero();
        for (int i = 0; i < ks.size(); ++i) {
          const double wi = w[i];
          active.clear();
          ks.states[i].for_each_active([&](int h) { active.push_back(h); });
          for (int h1 : active) {
            es[h1] += wi;
            for (int h2 : active) st.sum_ss(h1, h2) += wi;
          }
        }
        st.sum_s += es;
        st.sum_ys.noalias() += data.Y.row(n).transpose() * es.transpose();
        st.sum_yy += data.Y.row(n).squaredNorm();
        ++st.count;
      }
    });
    BscSuffStats total;
    total.sum_s = Eigen::VectorXd::Zero(H);
    total.sum_ys = Eigen::MatrixXd::Zero(D, H);
    total.sum_ss = Eigen::MatrixXd::Zero(H, H);
    for (const BscSuffStats& st : partial) {
      total.sum_s += st.sum_s;
      total.sum_ys += st.sum_ys;
      total.sum_ss += st.sum_ss;
      total.sum_yy += st.sum_yy;
      total.count += st.count;
    }
    return total;
  }

  // Closed-form updates: mean activation for pi, a regularized Gram solve for
  // W, and the expected reconstruction error (under the new W) for sigma2.
  static BscParams m_step_update(const BscSuffStats& stats, const BscClamps& clamps) {
    const long N = stats.count;
    const int D = static_cast<int>(stats.sum_ys.rows());
    const int H = static_cast<int>(stats.sum_ss.rows());
    if (N == 0) throw SingularStatsError("m_step: no datapoints accumulated");
    BscParams out;
    out.pi = clamp01(stats.sum_s.sum() / (static_cast<double>(N) * H), clamps.pi_min,
                     1.0 - clamps.pi_min);
    const double eps = 1e-6 * stats.sum_ss.trace() / static_cast<double>(H);
    Eigen::MatrixXd gram = stats.sum_ss;
    gram.diagonal().array() += eps;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    if (ldlt.info() != Eigen::Success) throw SingularStatsError("m_step: Gram factorization failed");
    out.W = ldlt.solve(stats.sum_ys.transpose()).transpose();
    if (!out.W.allFinite()) throw SingularStatsError("m_step: dictionary solve produced non-finite values");
    // a solver can hand back a least-squares answer to an inconsistent system
    const double scale = std::max(1.0, stats.sum_ys.cwiseAbs().maxCoeff());
    const double residual =
        (gram * out.W.transpose() - stats.sum_ys.transpose()).cwiseAbs().maxCoeff();
    if (residual > 1e-6 * scale)
      throw SingularStatsError("m_step: Gram system inconsistent even with regularization");
    out.sigma2 =
        std::max(stats.expected_recon(out.W) / (static_cast<double>(N) * D), clamps.sigma2_min);
    return out;
  }

  void m_step(const VariationalState& vs, const Dataset& data, int threads) {
    set_params(m_step_update(suff_stats(vs, data, threads), clamps_));
  }

  std::vector<std::string> scalar_names() const { return {"sigma2", "pi_H"}; }
  std::vector<double> scalars() const { return {p_.sigma2, p_.pi * latent_dim()}; }

  // Exact log-likelihood by log-domain enumeration of all 2^H states,
  // processed in chunks so memory stays bounded.
  double exact_loglik(const Dataset& data, int threads = 1) const {
    const int H = latent_dim();
    if (H > 20) throw CapacityError("exact_loglik: H > 20 would enumerate too many states");
    const int D = data_dim();
    const int N = data.n();
    const std::uint64_t total = 1ULL << H;
    const int chunk = static_cast<int>(std::min<std::uint64_t>(total, 256));
    std::vector<OnlineLogSumExp> acc(N);
    Eigen::VectorXd yy(N);
    for (int n = 0; n < N; ++n) yy(n) = data.Y.row(n).squaredNorm();
    Eigen::MatrixXd WS(D, chunk);
    Eigen::VectorXd prior(chunk);
    Eigen::VectorXd wsq(chunk);
    for (std::uint64_t base = 0; base < total; base += chunk) {
      const int B = static_cast<int>(std::min<std::uint64_t>(chunk, total - base));
      for (int b = 0; b < B; ++b) {
        const LatentState s = LatentState::from_index(H, base + b);
        WS.col(b).setZero();
        s.for_each_active([&](int h) { WS.col(b) += p_.W.col(h); });
        const int act = s.popcount();
        prior(b) = act * log_pi_ + (H - act) * log_1mpi_;
        wsq(b) = WS.col(b).squaredNorm();
      }
      parallel_for_blocks(N, threads, [&](long, long lo, long hi) {
        const auto rows = data.Y.middleRows(lo, hi - lo);
        const Eigen::MatrixXd G = rows * WS.leftCols(B);
        for (long n = lo; n < hi; ++n) {
          for (int b = 0; b < B; ++b) {
            const double r2 = yy(n) - 2.0 * G(n - lo, b) + wsq(b);
            acc[n].add(prior(b) + gauss_norm_ - r2 * inv_two_sigma2_);
          }
        }
      });
    }
    std::vector<double> per_point(N);
    for (int n = 0; n < N; ++n) per_point[n] = acc[n].value();
    return pairwise_sum(per_point);
  }

  // Ancestral sampling; the generating parameters and states ride along.
  static Dataset generate(const BscParams& params, int n, std::uint64_t seed) {
    const int D = static_cast<int>(params.W.rows());
    const int H = static_cast<int>(params.W.cols());
    const double noise_std = std::sqrt(params.sigma2);
    Dataset ds;
    ds.kind = DataKind::continuous;
    ds.Y.resize(n, D);
    GroundTruth gt;
    gt.model = ModelKind::bsc;
    gt.W = params.W;
    gt.pi = Eigen::VectorXd::Constant(1, params.pi);
    gt.sigma2 = params.sigma2;
    gt.states.resize(n, H);
    for (int i = 0; i < n; ++i) {
      Rng rng = derive_rng(seed, Stream::data_gen, 0, static_cast<std::uint64_t>(i));
      Eigen::VectorXd y = Eigen::VectorXd::Zero(D);
      for (int h = 0; h < H; ++h) {
        const bool on = rng.bernoulli(params.pi);
        gt.states(i, h) = on ? 1 : 0;
        if (on) y += params.W.col(h);
      }
      for (int d = 0; d < D; ++d) y(d) += noise_std * rng.normal();
      ds.Y.row(i) = y.transpose();
    }
    ds.ground_truth = std::move(gt);
    return ds;
  }

 private:
  void rebuild_cache() {
    const double pi = clamp01(p_.pi, clamps_.pi_min, 1.0 - clamps_.pi_min);
    log_pi_ = std::log(pi);
    log_1mpi_ = std::log1p(-pi);
    const double s2 = std::max(p_.sigma2, clamps_.sigma2_min);
    gauss_norm_ = -0.5 * data_dim() * std::log(2.0 * M_PI * s2);
    inv_two_sigma2_ = 0.5 / s2;
  }

  BscParams p_;
  BscClamps clamps_;
  double log_pi_ = 0.0;
  double log_1mpi_ = 0.0;
  double gauss_norm_ = 0.0;
  double inv_two_sigma2_ = 0.0;
};

}  // namespace tvs
