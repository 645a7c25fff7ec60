#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tvs/errors.hpp"
#include "tvs/io.hpp"

namespace tvs {

enum class DataKind : std::uint32_t { continuous = 0, binary = 1 };
enum class ModelKind : std::uint32_t { bsc = 0, sbn = 1 };

inline const char* model_kind_name(ModelKind k) { return k == ModelKind::bsc ? "bsc" : "sbn"; }

// Generating parameters and states carried alongside a synthetic dataset.
struct GroundTruth {
  ModelKind model = ModelKind::bsc;
  Eigen::MatrixXd W;       // D x H
  Eigen::VectorXd pi;      // size 1 (shared prior) or H (per-latent)
  Eigen::VectorXd b;       // empty unless the model has observation biases
  double sigma2 = 0.0;     // only meaningful for the Gaussian-noise model
  MatrixU8 states;         // N x H
};

struct Dataset {
  MatrixRM Y;  // N x D, one datapoint per row
  DataKind kind = DataKind::continuous;
  std::optional<GroundTruth> ground_truth;

  int n() const { return static_cast<int>(Y.rows()); }
  int d() const { return static_cast<int>(Y.cols()); }
};

// ---------------------------------------------------------------------------
// Bars dictionaries

struct BarsSpec {
  int grid = 5;             // R; D = R*R, H = 2R
  double bar_value = 10.0;
  double pi = 0.2;
  double sigma = 2.0;       // observation noise std (continuous variant)
  double bias = -5.0;       // observation bias (binary variant)
  int n = 10000;
};

// Columns 0..R-1 are horizontal bars, R..2R-1 vertical. Pixel (i, j) of the
// R x R grid maps to dimension i*R + j.
inline Eigen::MatrixXd make_bars_dictionary(int grid, double bar_value) {
  if (grid < 1) throw ConfigError("bars grid must be >= 1");
  const int R = grid;
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(R * R, 2 * R);
  for (int r = 0; r < R; ++r)
    for (int j = 0; j < R; ++j) W(r * R + j, r) = bar_value;
  for (int c = 0; c < R; ++c)
    for (int i = 0; i < R; ++i) W(i * R + c, R + c) = bar_value;
  return W;
}

// ---------------------------------------------------------------------------
// Dataset container (magic TVSD)
//
//   "TVSD" | u32 version | u32 kind | u32 N | u32 D | u32 gt_flag
//   payload: N*D f64 (continuous) or N*D u8 (binary), row-major
//   ground truth (when gt_flag == 1):
//     u32 model_kind | u32 gtH
//     bsc: f64 pi, f64 sigma2           sbn: gtH f64 pi, D f64 b
//     D*gtH f64 W (row-major) | N*gtH u8 states

constexpr std::uint32_t kDatasetVersion = 1;

inline void save_dataset(const Dataset& ds, const std::string& path) {
  BinWriter w(path);
  w.magic("TVSD");
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(ds.kind));
  w.u32(static_cast<std::uint32_t>(ds.n()));
  w.u32(static_cast<std::uint32_t>(ds.d()));
  w.u32(ds.ground_truth ? 1 : 0);
  if (ds.kind == DataKind::continuous) {
    w.bytes(ds.Y.data(), sizeof(double) * ds.Y.size());
  } else {
    for (Eigen::Index i = 0; i < ds.Y.rows(); ++i)
      for (Eigen::Index j = 0; j < ds.Y.cols(); ++j) {
        const std::uint8_t b = ds.Y(i, j) != 0.0 ? 1 : 0;
        w.bytes(&b, 1);
      }
  }
  if (ds.ground_truth) {
    const GroundTruth& gt = *ds.ground_truth;
    const int gtH = static_cast<int>(gt.W.cols());
    w.u32(static_cast<std::uint32_t>(gt.model));
    w.u32(static_cast<std::uint32_t>(gtH));
    if (gt.model == ModelKind::bsc) {
      w.f64(gt.pi(0));
      w.f64(gt.sigma2);
    } else {
      w.vector_f64(gt.pi);
      w.vector_f64(gt.b);
    }
    w.matrix_f64(gt.W);
    w.bytes(gt.states.data(), gt.states.size());
  }
  w.close();
}

inline Dataset load_dataset(const std::string& path) {
  BinReader r(path);
  r.expect_magic("TVSD");
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion) throw IoError("unsupported dataset version in " + path);
  const std::uint32_t kind = r.u32();
  if (kind > 1) throw IoError("bad dataset kind in " + path);
  const auto N = static_cast<Eigen::Index>(r.u32());
  const auto D = static_cast<Eigen::Index>(r.u32());
  const std::uint32_t gt_flag = r.u32();
  Dataset ds;
  ds.kind = static_cast<DataKind>(kind);
  ds.Y.resize(N, D);
  if (ds.kind == DataKind::continuous) {
    r.bytes(ds.Y.data(), sizeof(double) * ds.Y.size());
  } else {
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(N) * D);
    r.bytes(buf.data(), buf.size());
    for (Eigen::Index i = 0; i < N; ++i)
      for (Eigen::Index j = 0; j < D; ++j) ds.Y(i, j) = buf[i * D + j];
  }
  if (gt_flag == 1) {
    GroundTruth gt;
    gt.model = static_cast<ModelKind>(r.u32());
    const auto gtH = static_cast<Eigen::Index>(r.u32());
    if (gt.model == ModelKind::bsc) {
      gt.pi.resize(1);
      gt.pi(0) = r.f64();
      gt.sigma2 = r.f64();
    } else {
      gt.pi.resize(gtH);
      r.vector_f64(gt.pi);
      gt.b.resize(D);
      r.vector_f64(gt.b);
    }
    gt.W.resize(D, gtH);
    r.matrix_f64(gt.W);
    gt.states.resize(N, gtH);
    r.bytes(gt.states.data(), gt.states.size());
    ds.ground_truth = std::move(gt);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Plain-text readers

// Whitespace-separated matrix, one row per line. Blank lines are skipped.
inline MatrixRM load_matrix_txt(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::vector<double> row;
    double v;
    while (ls >> v) row.push_back(v);
    if (!ls.eof()) throw IoError(path + ": parse error at line " + std::to_string(line_no));
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows.front().size())
      throw IoError(path + ": inconsistent row width at line " + std::to_string(line_no));
    rows.push_back(std::move(row));
  }
  MatrixRM m(static_cast<Eigen::Index>(rows.size()),
             rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

constexpr int kMnistDim = 784;

// Binarized MNIST digits: one image per line, 784 space-separated {0,1}.
inline Dataset load_binarized_mnist(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::vector<double> row;
    row.reserve(kMnistDim);
    double v;
    while (ls >> v) {
      if (v != 0.0 && v != 1.0)
        throw IoError(path + ": non-binary value at line " + std::to_string(line_no));
      row.push_back(v);
    }
    if (!ls.eof()) throw IoError(path + ": parse error at line " + std::to_string(line_no));
    if (row.empty()) continue;
    if (row.size() != kMnistDim)
      throw IoError(path + ": expected " + std::to_string(kMnistDim) + " values at line " +
                    std::to_string(line_no) + ", got " + std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  Dataset ds;
  ds.kind = DataKind::binary;
  ds.Y.resize(static_cast<Eigen::Index>(rows.size()), kMnistDim);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int j = 0; j < kMnistDim; ++j) ds.Y(static_cast<Eigen::Index>(i), j) = rows[i][j];
  return ds;
}

}  // namespace tvs
