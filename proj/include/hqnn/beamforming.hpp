#pragma once

// Multiuser MISO downlink mathematics: channel generation, SINR and sum rate,
// the power-vector parameterization of the beamformers and its gradient,
// the WMMSE baseline and imperfect-CSI perturbation.
//
// All learning-side math runs on noise-normalized channels (H / sigma), so the
// receiver noise power is 1 in every formula below unless stated otherwise.

#include <complex>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hqnn/parallel.hpp"

namespace hqnn::bf {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

struct SystemParams {
  int K = 4;
  int Nt = 4;
  double tx_power_dbm = 30.0;
  double bandwidth_hz = 20e6;
  double noise_psd_dbm_per_hz = -174.0;

  /// Total transmit power P in watts.
  double power_w() const;
  /// Receiver noise power sigma^2 in watts over the bandwidth.
  double sigma2_w() const;
  void validate() const;
};

inline constexpr double kMinDistanceM = 100.0;
inline constexpr double kMaxDistanceM = 500.0;

/// 128.1 + 37.6 log10(d / 1 km), in dB.
double path_loss_db(double distance_m);

struct ChannelSample {
  CMatrix H;                      // K x Nt, normalized by sigma; row k = h_k^H
  std::vector<double> distances;  // meters
  CMatrix raw_H;                  // K x Nt in linear amplitude units (watts^1/2)
};

/// Area-uniform draw on the [100, 500] m annulus.
double draw_distance(std::mt19937_64& rng);

/// One user's raw channel row at distance d: 10^(-PL/20) * CN(0, I).
Eigen::RowVectorXcd draw_user_channel(double distance_m, int Nt, std::mt19937_64& rng);

/// Sample `index` of stream `stream` for base `seed`; independent of thread count.
ChannelSample generate_sample(const SystemParams& params, std::uint64_t seed, std::uint64_t stream,
                              std::uint64_t index);

std::vector<ChannelSample> generate_dataset(int n_samples, const SystemParams& params, std::uint64_t seed,
                                            std::uint64_t stream = 0, Exec exec = Exec::parallel);

// ---------------------------------------------------------------- rate

/// gamma_k = |h_k^H w_k|^2 / (sum_{j != k} |h_k^H w_j|^2 + noise).
std::vector<double> sinr(const CMatrix& H, const CMatrix& W, double noise = 1.0);

/// sum_k log2(1 + gamma_k), bits/s/Hz.
double sum_rate(const CMatrix& H, const CMatrix& W, double noise = 1.0);

struct PowerVectors {
  std::vector<double> p;  // downlink powers
  std::vector<double> q;  // virtual uplink powers
};

/// Scales each half of a 2K sigmoid vector to sum to P. An all-zero half falls
/// back to the uniform split.
PowerVectors normalize_power(std::span<const double> raw, double P);

struct BeamMatrix {
  CMatrix W;                           // Nt x K, column k = w_k
  std::vector<int> degenerate_users;   // users with h_k = 0 (zero beam)
};

/// w_k = sqrt(p_k) (I + sum_j q_j/noise h_j h_j^H)^{-1} h_k / ||...||.
BeamMatrix recover_beamforming(const CMatrix& H, const PowerVectors& pv, double noise = 1.0);

/// Sum rate of the beams recovered from (p, q) and its gradient with respect
/// to p and q (noise = 1), derived in closed form through the matrix inverse
/// and the direction normalization.
struct RateGradient {
  double rate = 0.0;
  std::vector<double> d_p;
  std::vector<double> d_q;
};
RateGradient rate_and_gradient(const CMatrix& H, const PowerVectors& pv);

/// Gradient of the rate with respect to the raw (pre-normalization) 2K vector.
std::vector<double> chain_normalization(std::span<const double> raw, double P, const RateGradient& g);

// ---------------------------------------------------------------- WMMSE

struct WmmseOptions {
  int max_iter = 200;
  double tol = 1e-5;
  double bisection_tol = 1e-8;
  // Also run one start per user with that user holding most of the power and
  // keep the best final rate. Plain matched-filter starts stall in poor local
  // optima on strongly unbalanced channels.
  bool favored_user_starts = true;
};

struct WmmseResult {
  BeamMatrix beams;
  std::vector<double> rate_history;  // rate of the initial point, then after every iteration
  int iterations = 0;
  bool converged = false;
  int start = 0;  // 0 = equal-power start, k + 1 = start favoring user k
};

/// Weighted-MMSE alternating optimization under sum power P (noise = 1),
/// initialized with matched-filter beams at equal power (plus the favored-user
/// starts when enabled). The history is that of the returned run.
WmmseResult wmmse(const CMatrix& H, double P, const WmmseOptions& opts = {});

/// WMMSE rate for each sample.
std::vector<double> wmmse_rates(const std::vector<ChannelSample>& samples, double P,
                                const WmmseOptions& opts = {}, Exec exec = Exec::parallel);

// ---------------------------------------------------------------- imperfect CSI

/// True channel = estimate + sqrt(sigma_e2) * CN(0, I) on the noise-normalized
/// channel, so sigma_e2 is measured in units of the noise power. The
/// unit-variance draw depends only on `seed`, so increasing sigma_e2 scales the
/// same error realization.
ChannelSample add_channel_error(const ChannelSample& estimate, double sigma_e2, std::uint64_t seed);

// ---------------------------------------------------------------- dataset files

struct DatasetHeader {
  int K = 0;
  int Nt = 0;
  std::uint32_t n_samples = 0;
  std::uint16_t version = 1;
};

/// Binary layout: "BFQ1", u16 version, u16 K, u16 Nt, u32 n_samples, then per
/// sample K*Nt (re, im) f64 pairs of the normalized H (row-major) followed by K
/// f64 distances. All little-endian.
void write_dataset(const std::filesystem::path& path, const std::vector<ChannelSample>& samples);
std::vector<ChannelSample> read_dataset(const std::filesystem::path& path, const SystemParams& params,
                                        DatasetHeader* header = nullptr);
DatasetHeader read_dataset_header(const std::filesystem::path& path);

/// CSV mirror: one row per sample, re/im pairs in the same order then distances,
/// 17 significant digits.
void write_dataset_csv(const std::filesystem::path& path, const std::vector<ChannelSample>& samples);

/// CRC-32 of a file's bytes, hex-formatted.
std::string file_checksum(const std::filesystem::path& path);

}  // namespace hqnn::bf
