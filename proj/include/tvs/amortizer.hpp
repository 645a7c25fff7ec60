#pragma once

#include <Eigen/Core>
#include <cmath>
#include <string>
#include <vector>

#include "tvs/errors.hpp"
#include "tvs/io.hpp"
#include "tvs/rng.hpp"

namespace tvs {

// One-hidden-layer perceptron mapping a datapoint to per-latent activation
// probabilities: logistic(W2 * tanh(W1 * y + b1) + b2).
struct AmortizerNet {
  Eigen::MatrixXd W1;  // hidden x D
  Eigen::VectorXd b1;  // hidden
  Eigen::MatrixXd W2;  // H x hidden
  Eigen::VectorXd b2;  // H

  int in_dim() const { return static_cast<int>(W1.cols()); }
  int hidden_dim() const { return static_cast<int>(W1.rows()); }
  int out_dim() const { return static_cast<int>(W2.rows()); }

  // Uniform init on [-1/sqrt(fan_in), +1/sqrt(fan_in)].
  static AmortizerNet init(int in_dim, int hidden_dim, int out_dim, Rng& rng) {
    AmortizerNet net;
    const double s1 = 1.0 / std::sqrt(static_cast<double>(in_dim));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    net.W1.resize(hidden_dim, in_dim);
    for (Eigen::Index i = 0; i < net.W1.rows(); ++i)
      for (Eigen::Index j = 0; j < net.W1.cols(); ++j) net.W1(i, j) = rng.uniform(-s1, s1);
    net.b1 = Eigen::VectorXd::Zero(hidden_dim);
    net.W2.resize(out_dim, hidden_dim);
    for (Eigen::Index i = 0; i < net.W2.rows(); ++i)
      for (Eigen::Index j = 0; j < net.W2.cols(); ++j) net.W2(i, j) = rng.uniform(-s2, s2);
    net.b2 = Eigen::VectorXd::Zero(out_dim);
    return net;
  }

  Eigen::VectorXd forward(Eigen::Ref<const Eigen::VectorXd> y) const {
    if (y.size() != W1.cols()) throw Error("amortizer forward: input dimension mismatch");
    const Eigen::VectorXd a1 = ((W1 * y + b1).array().tanh()).matrix();
    Eigen::VectorXd z2 = W2 * a1 + b2;
    return (1.0 / (1.0 + (-z2.array()).exp())).matrix();
  }
};

struct AmortizerTrainOpts {
  int epochs = 3;
  int batch = 100;
  double step = 0.1;
};

namespace detail {

// Mean total cross-entropy per datapoint, computed from pre-activations so it
// stays finite even when the logistic output saturates:
//   CE(t, a) = t * softplus(-a) + (1 - t) * softplus(a)
inline double ce_from_preact(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& T) {
  const auto sp = [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); };
  double total = 0.0;
  for (Eigen::Index i = 0; i < Z.rows(); ++i)
    for (Eigen::Index j = 0; j < Z.cols(); ++j)
      total += T(i, j) * sp(-Z(i, j)) + (1.0 - T(i, j)) * sp(Z(i, j));
  return total / static_cast<double>(Z.cols());
}

}  // namespace detail

// Full-set mean cross-entropy. Y: N x D, targets: N x H (values in [0,1]).
inline double amortizer_loss(const AmortizerNet& net, const MatrixRM& Y, const MatrixRM& targets) {
  const Eigen::MatrixXd X = Y.transpose();
  const Eigen::MatrixXd A1 = ((net.W1 * X).colwise() + net.b1).array().tanh();
  const Eigen::MatrixXd Z2 = (net.W2 * A1).colwise() + net.b2;
  return detail::ce_from_preact(Z2, targets.transpose());
}

struct AmortizerTrainReport {
  // Full-set loss before training and after each epoch (epochs + 1 entries).
  std::vector<double> epoch_loss;
};

// Minibatch gradient descent on the mean cross-entropy against soft targets.
inline AmortizerTrainReport amortizer_train(AmortizerNet& net, const MatrixRM& Y,
                                            const MatrixRM& targets, const AmortizerTrainOpts& opts,
                                            Rng& rng) {
  const int N = static_cast<int>(Y.rows());
  if (targets.rows() != Y.rows() || targets.cols() != net.out_dim())
    throw Error("amortizer_train: target shape mismatch");
  AmortizerTrainReport report;
  report.epoch_loss.push_back(amortizer_loss(net, Y, targets));
  std::vector<int> order(N);
  for (int i = 0; i < N; ++i) order[i] = i;
  const int batch = std::max(1, opts.batch);
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    // Fisher-Yates shuffle from the caller's stream.
    for (int i = N - 1; i > 0; --i) {
      const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
      std::swap(order[i], order[j]);
    }
    for (int start = 0; start < N; start += batch) {
      const int b = std::min(batch, N - start);
      Eigen::MatrixXd X(Y.cols(), b);
      Eigen::MatrixXd T(net.out_dim(), b);
      for (int k = 0; k < b; ++k) {
        X.col(k) = Y.row(order[start + k]).transpose();
        T.col(k) = targets.row(order[start + k]).transpose();
      }
      const Eigen::MatrixXd A1 = ((net.W1 * X).colwise() + net.b1).array().tanh();
      const Eigen::MatrixXd Z2 = (net.W2 * A1).colwise() + net.b2;
      const Eigen::MatrixXd P = 1.0 / (1.0 + (-Z2.array()).exp());
      const Eigen::MatrixXd dZ2 = (P - T) / static_cast<double>(b);
      const Eigen::MatrixXd dA1 = net.W2.transpose() * dZ2;
      const Eigen::MatrixXd dZ1 = dA1.array() * (1.0 - A1.array().square());
      net.W2.noalias() -= opts.step * (dZ2 * A1.transpose());
      net.b2 -= opts.step * dZ2.rowwise().sum();
      net.W1.noalias() -= opts.step * (dZ1 * X.transpose());
      net.b1 -= opts.step * dZ1.rowwise().sum();
    }
    const double loss = amortizer_loss(net, Y, targets);
    if (!std::isfinite(loss))
      throw DivergenceError("amortizer training diverged at epoch " + std::to_string(epoch + 1));
    report.epoch_loss.push_back(loss);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Net checkpoint (magic AMLP): u32 version, dims, then row-major f64 blocks.

constexpr std::uint32_t kAmortizerVersion = 1;

inline void save_amortizer(const AmortizerNet& net, BinWriter& w) {
  w.magic("AMLP");
  w.u32(kAmortizerVersion);
  w.u32(static_cast<std::uint32_t>(net.in_dim()));
  w.u32(static_cast<std::uint32_t>(net.hidden_dim()));
  w.u32(static_cast<std::uint32_t>(net.out_dim()));
  w.matrix_f64(net.W1);
  w.vector_f64(net.b1);
  w.matrix_f64(net.W2);
  w.vector_f64(net.b2);
}

inline void save_amortizer(const AmortizerNet& net, const std::string& path) {
  BinWriter w(path);
  save_amortizer(net, w);
  w.close();
}

inline AmortizerNet load_amortizer(BinReader& r) {
  r.expect_magic("AMLP");
  if (r.u32() != kAmortizerVersion) throw IoError("unsupported amortizer checkpoint version");
  const auto D = static_cast<Eigen::Index>(r.u32());
  const auto hidden = static_cast<Eigen::Index>(r.u32());
  const auto H = static_cast<Eigen::Index>(r.u32());
  AmortizerNet net;
  net.W1.resize(hidden, D);
  r.matrix_f64(net.W1);
  net.b1.resize(hidden);
  r.vector_f64(net.b1);
  net.W2.resize(H, hidden);
  r.matrix_f64(net.W2);
  net.b2.resize(H);
  r.vector_f64(net.b2);
  return net;
}

inline AmortizerNet load_amortizer(const std::string& path) {
  BinReader r(path);
  return load_amortizer(r);
}

}  // namespace tvs
