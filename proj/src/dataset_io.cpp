#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "binio.hpp"
#include "hqnn/beamforming.hpp"

namespace hqnn::bf {

namespace {

constexpr char kMagic[] = "BFQ1";
constexpr std::uint16_t kVersion = 1;

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  return os;
}

void check_uniform(const std::vector<ChannelSample>& samples) {
  if (samples.empty()) throw std::invalid_argument("cannot write an empty dataset");
  const auto K = samples.front().H.rows();
  const auto N = samples.front().H.cols();
  if (K > 0xFFFF || N > 0xFFFF) throw std::invalid_argument("dataset dimensions exceed u16");
  for (const auto& s : samples) {
    if (s.H.rows() != K || s.H.cols() != N || s.distances.size() != static_cast<std::size_t>(K)) {
      throw std::invalid_argument("dataset samples have inconsistent dimensions");
    }
  }
}

DatasetHeader read_header(std::istream& is) {
  binio::expect_magic(is, kMagic);
  DatasetHeader h;
  h.version = binio::get_le<std::uint16_t>(is);
  if (h.version != kVersion) {
    throw binio::FormatError("unsupported dataset version " + std::to_string(h.version));
  }
  h.K = binio::get_le<std::uint16_t>(is);
  h.Nt = binio::get_le<std::uint16_t>(is);
  h.n_samples = binio::get_le<std::uint32_t>(is);
  if (h.K < 1 || h.Nt < 1) throw binio::FormatError("dataset header has zero dimensions");
  return h;
}

}  // namespace

void write_dataset(const std::filesystem::path& path, const std::vector<ChannelSample>& samples) {
  check_uniform(samples);
  std::ofstream os = open_out(path);
  os.write(kMagic, 4);
  binio::put_le<std::uint16_t>(os, kVersion);
  binio::put_le<std::uint16_t>(os, static_cast<std::uint16_t>(samples.front().H.rows()));
  binio::put_le<std::uint16_t>(os, static_cast<std::uint16_t>(samples.front().H.cols()));
  binio::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(samples.size()));
  for (const auto& s : samples) {
    for (Eigen::Index k = 0; k < s.H.rows(); ++k) {
      for (Eigen::Index i = 0; i < s.H.cols(); ++i) {
        binio::put_f64(os, s.H(k, i).real());
        binio::put_f64(os, s.H(k, i).imag());
      }
    }
    for (double d : s.distances) binio::put_f64(os, d);
  }
  if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
}

DatasetHeader read_dataset_header(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open dataset '" + path.string() + "'");
  return read_header(is);
}

std::vector<ChannelSample> read_dataset(const std::filesystem::path& path, const SystemParams& params,
                                        DatasetHeader* header) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open dataset '" + path.string() + "'");
  const DatasetHeader h = read_header(is);
  if (header) *header = h;
  const double sigma = std::sqrt(params.sigma2_w());
  std::vector<ChannelSample> out(h.n_samples);
  for (auto& s : out) {
    s.H.resize(h.K, h.Nt);
    for (int k = 0; k < h.K; ++k) {
      for (int i = 0; i < h.Nt; ++i) {
        const double re = binio::get_f64(is);
        const double im = binio::get_f64(is);
        s.H(k, i) = cplx(re, im);
      }
    }
    s.distances.resize(static_cast<std::size_t>(h.K));
    for (auto& d : s.distances) d = binio::get_f64(is);
    s.raw_H = s.H * sigma;
  }
  if (is.peek() != std::char_traits<char>::eof()) throw binio::FormatError("trailing bytes in dataset file");
  return out;
}

void write_dataset_csv(const std::filesystem::path& path, const std::vector<ChannelSample>& samples) {
  check_uniform(samples);
  std::ofstream os = open_out(path);
  const auto K = samples.front().H.rows();
  const auto N = samples.front().H.cols();
  os << std::setprecision(17);
  for (Eigen::Index k = 0; k < K; ++k)
    for (Eigen::Index i = 0; i < N; ++i) os << "h" << k << "_" << i << "_re,h" << k << "_" << i << "_im,";
  for (Eigen::Index k = 0; k < K; ++k) os << "d" << k << (k + 1 < K ? "," : "\n");
  for (const auto& s : samples) {
    for (Eigen::Index k = 0; k < K; ++k)
      for (Eigen::Index i = 0; i < N; ++i) os << s.H(k, i).real() << ',' << s.H(k, i).imag() << ',';
    for (std::size_t k = 0; k < s.distances.size(); ++k) {
      os << s.distances[k] << (k + 1 < s.distances.size() ? "," : "\n");
    }
  }
}

std::string file_checksum(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path.string() + "'");
  uLong crc = crc32(0L, Z_NULL, 0);
  std::vector<char> buf(1 << 16);
  while (is) {
    is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto n = is.gcount();
    if (n > 0) crc = crc32(crc, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(n));
  }
  char hex[16];
  std::snprintf(hex, sizeof hex, "%08lx", static_cast<unsigned long>(crc));
  return hex;
}

}  // namespace hqnn::bf
