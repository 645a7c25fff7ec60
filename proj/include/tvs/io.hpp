#pragma once

#include <Eigen/Core>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tvs/errors.hpp"

namespace tvs {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are not supported");

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixU8 = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class BinWriter {
 public:
  explicit BinWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open for writing: " + path);
  }
  void magic(const char m[4]) { bytes(m, 4); }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out_) throw IoError("write failed: " + path_);
  }
  // Row-major f64 payload regardless of the matrix's storage order.
  template <typename Derived>
  void matrix_f64(const Eigen::MatrixBase<Derived>& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) f64(m(i, j));
  }
  void vector_f64(const Eigen::VectorXd& v) { bytes(v.data(), sizeof(double) * v.size()); }
  void close() {
    out_.close();
    if (!out_) throw IoError("close failed: " + path_);
  }

 private:
  std::string path_;
  std::ofstream out_;
};

class BinReader {
 public:
  explicit BinReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open for reading: " + path);
  }
  void expect_magic(const char m[4]) {
    char got[4];
    bytes(got, 4);
    if (std::memcmp(got, m, 4) != 0) throw IoError("bad magic in " + path_);
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, sizeof v);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, sizeof v);
    return v;
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw IoError("truncated file: " + path_);
  }
  template <typename M>
  void matrix_f64(M& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = f64();
  }
  void vector_f64(Eigen::VectorXd& v) { bytes(v.data(), sizeof(double) * v.size()); }
  bool at_eof() {
    in_.peek();
    return in_.eof();
  }

 private:
  std::string path_;
  std::ifstream in_;
};

// 8-bit binary PGM (P5). `image` holds values already scaled to [0, 255].
inline void write_pgm(const std::string& path, const MatrixRM& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "P5\n" << image.cols() << " " << image.rows() << "\n255\n";
  for (Eigen::Index i = 0; i < image.rows(); ++i) {
    for (Eigen::Index j = 0; j < image.cols(); ++j) {
      const int v = std::max(0, std::min(255, static_cast<int>(image(i, j) + 0.5)));
      out.put(static_cast<char>(v));
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

// Shortest-round-trip decimal formatting, identical across runs.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << content;
  if (!out) throw IoError("write failed: " + path);
}

// Matrix as CSV, one row per line, full double precision.
inline void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ",";
      out << format_double(m(i, j));
    }
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace tvs
