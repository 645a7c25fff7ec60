#pragma once

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

// Shallow sigmoid belief network: per-latent Bernoulli(pi_h) priors and
// binary observations y_d ~ Bernoulli(logistic(W s + b)_d).
struct SbnParams {
  Eigen::VectorXd pi;  // H
  Eigen::MatrixXd W;   // D x H
  Eigen::VectorXd b;   // D
};

struct SbnClamps {
  double pi_min = 1e-4;
};

// Free-energy gradient aggregated over the dataset, plus the closed-form
// prior update.
struct SbnGrad {
  Eigen::MatrixXd dW;      // D x H
  Eigen::VectorXd db;      // D
  Eigen::VectorXd new_pi;  // H, mean <s_h>, unclamped
};

namespace detail {

inline Eigen::ArrayXd softplus_array(const Eigen::ArrayXd& x) {
  return x.max(0.0) + (-x.abs()).exp().log1p();
}

}  // namespace detail

class SbnModel {
 public:
  SbnModel(SbnParams params, SbnClamps clamps = {}, double lr = 0.5, double lr_decay = 0.999)
      : p_(std::move(params)), clamps_(clamps), lr_(lr), lr_decay_(lr_decay) {
    rebuild_cache();
  }

  // Biases at the logit of the per-pixel means (clamped), Gaussian dictionary
  // noise of configurable scale, uniform starting priors.
  static SbnModel init_from_data(const Dataset& data, int H, Rng& rng, SbnClamps clamps = {},
                                 double lr = 0.5, double lr_decay = 0.999,
                                 double init_w_std = 0.01, double init_pi = 0.0) {
    const int D = data.d();
    SbnParams p;
    if (init_pi <= 0.0) init_pi = 1.0 / static_cast<double>(H);
    p.pi = Eigen::VectorXd::Constant(H, init_pi);
    p.W.resize(D, H);
    for (int h = 0; h < H; ++h)
      for (int d = 0; d < D; ++d) p.W(d, h) = init_w_std * rng.normal();
    p.b.resize(D);
    const Eigen::VectorXd mean = data.Y.colwise().mean().transpose();
    for (int d = 0; d < D; ++d) {
      const double m = clamp01(mean(d), 1e-3, 1.0 - 1e-3);
      p.b(d) = std::log(m / (1.0 - m));
    }
    return SbnModel(std::move(p), clamps, lr, lr_decay);
  }

  int latent_dim() const { return static_cast<int>(p_.W.cols()); }
  int data_dim() const { return static_cast<int>(p_.W.rows()); }
  const SbnParams& params() const { return p_; }
  const SbnClamps& clamps() const { return clamps_; }
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  double learning_rate_decay() const { return lr_decay_; }

  void set_params(SbnParams p) {
    p_ = std::move(p);
    rebuild_cache();
  }

  double log_joint(const LatentState& s, Eigen::Ref<const Eigen::VectorXd> y) const {
    thread_local Eigen::VectorXd preact;
    preact = p_.b;
    double prior = sum_log_1mpi_;
    s.for_each_active([&](int h) {
      preact += p_.W.col(h);
      prior += logit_pi_[h];
    });
    const double ll =
        (y.array() * preact.array() - detail::softplus_array(preact.array())).sum();
    return prior + ll;
  }

  LatentState sample_prior(Rng& rng) const {
    return LatentState::random(latent_dim(), [&](int h) { return p_.pi(h); }, rng);
  }

  // dW_dh = sum_n <(y_d - g_d(s)) s_h>, db_d = sum_n <y_d - g_d(s)>, with the
  // expectation taken state-by-state over each set (g is nonlinear in s).
  SbnGrad grad(const VariationalState& vs, const Dataset& data, int threads) const {
    const int N = data.n();
    const int D = data_dim();
    const int H = latent_dim();
    const long nb = num_blocks(N);
    struct Partial {
      Eigen::MatrixXd dW;
      Eigen::VectorXd db;
      Eigen::VectorXd sum_s;
    };
    std::vector<Partial> partial(nb);
    for (auto& p : partial) {
      p.dW = Eigen::MatrixXd::Zero(D, H);
      p.db = Eigen::VectorXd::Zero(D);
      p.sum_s = Eigen::VectorXd::Zero(H);
    }
    parallel_for_blocks(N, threads, [&](long blk, long lo, long hi) {
      Partial& acc = partial[blk];
      Eigen::VectorXd preact(D), resid(D);
      for (long n = lo; n < hi; ++n) {
        const StateSet& ks = vs.ksets[n];
        const std::vector<double> w = posterior_weights(ks);
        const auto y = data.Y.row(n).transpose();
        for (int i = 0; i < ks.size(); ++i) {
          const double wi = w[i];
          preact = p_.b;
          ks.states[i].for_each_active([&](int h) { preact += p_.W.col(h); });
          resid = (y.array() - 1.0 / (1.0 + (-preact.array()).exp())).matrix();
          acc.db += wi * resid;
          ks.states[i].for_each_active([&](int h) {
            acc.dW.col(h) += wi * resid;
            acc.sum_s[h] += wi;
          });
        }
      }
    });
    SbnGrad g;
    g.dW = Eigen::MatrixXd::Zero(D, H);
    g.db = Eigen::VectorXd::Zero(D);
    g.new_pi = Eigen::VectorXd::Zero(H);
    for (const Partial& p : partial) {
      g.dW += p.dW;
      g.db += p.db;
      g.new_pi += p.sum_s;
    }
    g.new_pi /= static_cast<double>(N);
    return g;
  }

  // One ascent step scaled by 1/N; the prior is replaced by its closed form.
  static SbnParams apply_gradient(const SbnParams& p, const SbnGrad& g, double lr, long n_data,
                                  const SbnClamps& clamps) {
    SbnParams out;
    const double scale = lr / static_cast<double>(n_data);
    out.W = p.W + scale * g.dW;
    out.b = p.b + scale * g.db;
    out.pi = g.new_pi.unaryExpr(
        [&](double v) { return clamp01(v, clamps.pi_min, 1.0 - clamps.pi_min); });
    if (!out.W.allFinite() || !out.b.allFinite() || !out.pi.allFinite())
      throw DivergenceError("sbn m_step produced non-finite parameters");
    return out;
  }

  void m_step(const VariationalState& vs, const Dataset& data, int threads) {
    set_params(apply_gradient(p_, grad(vs, data, threads), lr_, data.n(), clamps_));
    lr_ *= lr_decay_;
  }

  std::vector<std::string> scalar_names() const { return {"pi_mean", "lr"}; }
  std::vector<double> scalars() const { return {p_.pi.mean(), lr_}; }

  double exact_loglik(const Dataset& data, int threads = 1) const {
    const int H = latent_dim();
    if (H > 20) throw CapacityError("exact_loglik: H > 20 would enumerate too many states");
    const int D = data_dim();
    const int N = data.n();
    const std::uint64_t total = 1ULL << H;
    const int chunk = static_cast<int>(std::min<std::uint64_t>(total, 256));
    std::vector<OnlineLogSumExp> acc(N);
    Eigen::MatrixXd A(D, chunk);   // preactivations per state
    Eigen::VectorXd base(chunk);   // prior + sum_d log(1 - g_d)
    for (std::uint64_t start = 0; start < total; start += chunk) {
      const int B = static_cast<int>(std::min<std::uint64_t>(chunk, total - start));
      for (int b = 0; b < B; ++b) {
        const LatentState s = LatentState::from_index(H, start + b);
        A.col(b) = p_.b;
        double prior = sum_log_1mpi_;
        s.for_each_active([&](int h) {
          A.col(b) += p_.W.col(h);
          prior += logit_pi_[h];
        });
        base(b) = prior - detail::softplus_array(A.col(b).array()).sum();
      }
      parallel_for_blocks(N, threads, [&](long, long lo, long hi) {
        const auto rows = data.Y.middleRows(lo, hi - lo);
        const Eigen::MatrixXd G = rows * A.leftCols(B);
        for (long n = lo; n < hi; ++n)
          for (int b = 0; b < B; ++b) acc[n].add(base(b) + G(n - lo, b));
      });
    }
    std::vector<double> per_point(N);
    for (int n = 0; n < N; ++n) per_point[n] = acc[n].value();
    return pairwise_sum(per_point);
  }

  static Dataset generate(const SbnParams& params, int n, std::uint64_t seed) {
    const int D = static_cast<int>(params.W.rows());
    const int H = static_cast<int>(params.W.cols());
    Dataset ds;
    ds.kind = DataKind::binary;
    ds.Y.resize(n, D);
    GroundTruth gt;
    gt.model = ModelKind::sbn;
    gt.W = params.W;
    gt.pi = params.pi;
    gt.b = params.b;
    gt.states.resize(n, H);
    for (int i = 0; i < n; ++i) {
      Rng rng = derive_rng(seed, Stream::data_gen, 0, static_cast<std::uint64_t>(i));
      Eigen::VectorXd preact = params.b;
      for (int h = 0; h < H; ++h) {
        const bool on = rng.bernoulli(params.pi(h));
        gt.states(i, h) = on ? 1 : 0;
        if (on) preact += params.W.col(h);
      }
      for (int d = 0; d < D; ++d) ds.Y(i, d) = rng.bernoulli(logistic(preact(d))) ? 1.0 : 0.0;
    }
    ds.ground_truth = std::move(gt);
    return ds;
  }

 private:
  void rebuild_cache() {
    const int H = latent_dim();
    logit_pi_.resize(H);
    sum_log_1mpi_ = 0.0;
    for (int h = 0; h < H; ++h) {
      const double pi = clamp01(p_.pi(h), clamps_.pi_min, 1.0 - clamps_.pi_min);
      logit_pi_[h] = std::log(pi) - std::log1p(-pi);
      sum_log_1mpi_ += std::log1p(-pi);
    }
  }

  SbnParams p_;
  SbnClamps clamps_;
  double lr_;
  double lr_decay_;
  Eigen::VectorXd logit_pi_;
  double sum_log_1mpi_ = 0.0;
};

// Ground-truth bars parameters for the binary bars benchmark: strongly
// positive on-bar weights against a strongly negative bias, so a pixel is
// active essentially iff one of its covering bars is on.
inline SbnParams sbn_bars_ground_truth(int grid, double bar_value, double bias, double pi) {
  SbnParams p;
  p.W = make_bars_dictionary(grid, bar_value);
  p.pi = Eigen::VectorXd::Constant(p.W.cols(), pi);
  p.b = Eigen::VectorXd::Constant(p.W.rows(), bias);
  return p;
}

}  // namespace tvs
