#pragma once

// File formats shared by the modules:
//  - dense matrices: 8-byte header (uint32 rows, uint32 cols, little endian)
//    followed by the row-major float64 payload;
//  - CSV written with round-trip-exact float formatting so reruns with the
//    same config are bitwise identical;
//  - JSON sidecars/manifests via the vendored single-header library.
// All writes go through a temp file + rename so readers never see a torn file.

#include <Eigen/Dense>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace cfml {

inline void atomic_write_bytes(const std::string& path,
                               const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for write: " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

// ---- binary matrix ---------------------------------------------------------

inline void write_matrix(const std::string& path, const Eigen::MatrixXd& m) {
  if (m.rows() > 0xffffffffll || m.cols() > 0xffffffffll)
    throw std::runtime_error("matrix too large for format: " + path);
  const std::uint32_t rows = static_cast<std::uint32_t>(m.rows());
  const std::uint32_t cols = static_cast<std::uint32_t>(m.cols());
  std::string bytes;
  bytes.reserve(8 + sizeof(double) * rows * cols);
  auto put_u32 = [&bytes](std::uint32_t v) {
    for (int k = 0; k < 4; ++k) bytes.push_back(char((v >> (8 * k)) & 0xff));
  };
  put_u32(rows);
  put_u32(cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) {
      double v = m(r, c);
      char buf[sizeof(double)];
      std::memcpy(buf, &v, sizeof(double));
      bytes.append(buf, sizeof(double));
    }
  atomic_write_bytes(path, bytes);
}

inline Eigen::MatrixXd read_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  unsigned char hdr[8];
  in.read(reinterpret_cast<char*>(hdr), 8);
  if (!in) throw std::runtime_error("truncated header: " + path);
  auto get_u32 = [&hdr](int off) {
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= std::uint32_t(hdr[off + k]) << (8 * k);
    return v;
  };
  const std::uint64_t rows = get_u32(0);
  const std::uint64_t cols = get_u32(4);
  if (rows * cols > (std::uint64_t(1) << 32))
    throw std::runtime_error("dimension header overflows sanity cap: " + path);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows),
                    static_cast<Eigen::Index>(cols));
  std::vector<char> payload(sizeof(double) * rows * cols);
  in.read(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!in) throw std::runtime_error("truncated payload: " + path);
  char extra;
  if (in.read(&extra, 1))
    throw std::runtime_error("trailing bytes after payload: " + path);
  const char* p = payload.data();
  for (std::uint64_t r = 0; r < rows; ++r)
    for (std::uint64_t c = 0; c < cols; ++c) {
      double v;
      std::memcpy(&v, p, sizeof(double));
      p += sizeof(double);
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
  return m;
}

// ---- CSV -------------------------------------------------------------------

// %.17g round-trips doubles exactly and is deterministic for a given value,
// which is what the rerun-reproducibility guarantee rests on.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header)
      : ncols_(header.size()) {
    append_row(header);
  }

  void append_row(const std::vector<std::string>& cells) {
    if (cells.size() != ncols_)
      throw std::runtime_error("csv row width mismatch");
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (k) body_ << ',';
      body_ << cells[k];
    }
    body_ << '\n';
  }

  void append_numeric_row(const std::vector<double>& cells) {
    std::vector<std::string> s;
    s.reserve(cells.size());
    for (double v : cells) s.push_back(format_double(v));
    append_row(s);
  }

  void save(const std::string& path) const {
    atomic_write_bytes(path, body_.str());
  }

  std::string str() const { return body_.str(); }

 private:
  std::size_t ncols_;
  std::ostringstream body_;
};

// ---- JSON ------------------------------------------------------------------

inline void write_json(const std::string& path, const nlohmann::json& j) {
  atomic_write_bytes(path, j.dump(2) + "\n");
}

inline nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  nlohmann::json j;
  in >> j;
  return j;
}

// Stable 64-bit content hash (FNV-1a) for config fingerprints in manifests.
inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace cfml
