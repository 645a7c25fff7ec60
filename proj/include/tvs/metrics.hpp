#pragma once

#include <Eigen/Core>
#include <limits>
#include <vector>

#include "tvs/errors.hpp"

namespace tvs {

// Minimum-cost perfect matching on a square cost matrix (shortest augmenting
// path, O(n^3)). Returns row -> column.
inline std::vector<int> hungarian_min(const Eigen::MatrixXd& cost) {
  if (cost.rows() != cost.cols()) throw Error("hungarian_min: cost matrix must be square");
  const int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

// Cosine similarities between columns of A and columns of B.
inline Eigen::MatrixXd column_cosine_similarity(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  Eigen::MatrixXd sim(A.cols(), B.cols());
  for (Eigen::Index i = 0; i < A.cols(); ++i) {
    const double na = A.col(i).norm();
    for (Eigen::Index j = 0; j < B.cols(); ++j) {
      const double nb = B.col(j).norm();
      sim(i, j) = (na == 0.0 || nb == 0.0) ? 0.0 : A.col(i).dot(B.col(j)) / (na * nb);
    }
  }
  return sim;
}

// Flip each column so its largest-magnitude entry is positive.
inline Eigen::MatrixXd sign_normalize_columns(Eigen::MatrixXd W) {
  for (Eigen::Index j = 0; j < W.cols(); ++j) {
    Eigen::Index arg = 0;
    W.col(j).cwiseAbs().maxCoeff(&arg);
    if (W(arg, j) < 0.0) W.col(j) = -W.col(j);
  }
  return W;
}

// Mean matched cosine similarity under the optimal column assignment.
inline double dictionary_recovery_score(const Eigen::MatrixXd& learned, const Eigen::MatrixXd& truth,
                                        bool sign_normalize = false) {
  if (learned.cols() != truth.cols() || learned.rows() != truth.rows())
    throw Error("dictionary_recovery_score: shape mismatch");
  const Eigen::MatrixXd L = sign_normalize ? sign_normalize_columns(learned) : learned;
  const Eigen::MatrixXd sim = column_cosine_similarity(L, truth);
  const std::vector<int> match = hungarian_min(-sim);
  double total = 0.0;
  for (int i = 0; i < static_cast<int>(match.size()); ++i) total += sim(i, match[i]);
  return match.empty() ? 0.0 : total / static_cast<double>(match.size());
}

}  // namespace tvs
