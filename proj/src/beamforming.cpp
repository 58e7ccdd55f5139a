#include "hqnn/beamforming.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace hqnn::bf {

namespace {

double dbm_to_w(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

CVector user_channel(const CMatrix& H, Eigen::Index k) { return H.row(k).adjoint(); }

}  // namespace

double SystemParams::power_w() const { return dbm_to_w(tx_power_dbm); }

double SystemParams::sigma2_w() const {
  return dbm_to_w(noise_psd_dbm_per_hz + 10.0 * std::log10(bandwidth_hz));
}

void SystemParams::validate() const {
  if (K < 1 || Nt < 1) throw std::invalid_argument("K and Nt must be >= 1");
  if (!(bandwidth_hz > 0.0)) throw std::invalid_argument("bandwidth must be positive");
  if (!std::isfinite(tx_power_dbm) || !std::isfinite(noise_psd_dbm_per_hz)) {
    throw std::invalid_argument("power levels must be finite");
  }
}

double path_loss_db(double distance_m) { return 128.1 + 37.6 * std::log10(distance_m / 1000.0); }

double draw_distance(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double a = kMinDistanceM * kMinDistanceM;
  const double b = kMaxDistanceM * kMaxDistanceM;
  return std::sqrt(u(rng) * (b - a) + a);
}

Eigen::RowVectorXcd draw_user_channel(double distance_m, int Nt, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, std::sqrt(0.5));
  const double gain = std::pow(10.0, -path_loss_db(distance_m) / 20.0);
  Eigen::RowVectorXcd row(Nt);
  for (int i = 0; i < Nt; ++i) {
    const double re = n(rng);
    const double im = n(rng);
    row(i) = gain * cplx(re, im);
  }
  return row;
}

ChannelSample generate_sample(const SystemParams& params, std::uint64_t seed, std::uint64_t stream,
                              std::uint64_t index) {
  std::mt19937_64 rng(derive_seed(seed, stream, index));
  ChannelSample s;
  s.raw_H.resize(params.K, params.Nt);
  s.distances.resize(static_cast<std::size_t>(params.K));
  for (int k = 0; k < params.K; ++k) {
    const double d = draw_distance(rng);
    s.distances[static_cast<std::size_t>(k)] = d;
    s.raw_H.row(k) = draw_user_channel(d, params.Nt, rng);
  }
  s.H = s.raw_H / std::sqrt(params.sigma2_w());
  return s;
}

std::vector<ChannelSample> generate_dataset(int n_samples, const SystemParams& params, std::uint64_t seed,
                                            std::uint64_t stream, Exec exec) {
  params.validate();
  if (n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
  std::vector<ChannelSample> out(static_cast<std::size_t>(n_samples));
  for_each_index(exec, out.size(), [&](std::size_t i) { out[i] = generate_sample(params, seed, stream, i); });
  return out;
}

// ---------------------------------------------------------------- rate

std::vector<double> sinr(const CMatrix& H, const CMatrix& W, double noise) {
  if (H.cols() != W.rows() || H.rows() != W.cols()) {
    throw std::invalid_argument("sinr: H is K x Nt and W must be Nt x K");
  }
  const CMatrix G = H * W;  // G(k, j) = h_k^H w_j
  std::vector<double> gamma(static_cast<std::size_t>(H.rows()));
  for (Eigen::Index k = 0; k < H.rows(); ++k) {
    double interference = noise;
    for (Eigen::Index j = 0; j < W.cols(); ++j) {
      if (j != k) interference += std::norm(G(k, j));
    }
    gamma[static_cast<std::size_t>(k)] = std::norm(G(k, k)) / interference;
  }
  return gamma;
}

double sum_rate(const CMatrix& H, const CMatrix& W, double noise) {
  double r = 0.0;
  for (double g : sinr(H, W, noise)) r += std::log2(1.0 + g);
  return r;
}

PowerVectors normalize_power(std::span<const double> raw, double P) {
  if (raw.size() % 2 != 0 || raw.empty()) throw std::invalid_argument("raw power vector must have even length 2K");
  const std::size_t K = raw.size() / 2;
  auto scale_half = [&](std::size_t offset) {
    std::vector<double> v(raw.begin() + static_cast<long>(offset), raw.begin() + static_cast<long>(offset + K));
    double s = 0.0;
    for (double x : v) s += x;
    if (!(s > 0.0)) {
      std::fill(v.begin(), v.end(), P / static_cast<double>(K));
      return v;
    }
    for (double& x : v) x *= P / s;
    return v;
  };
  return {scale_half(0), scale_half(K)};
}

namespace {

// Columns u_k = (I + sum_j q_j / noise h_j h_j^H)^{-1} h_k.
CMatrix unnormalized_directions(const CMatrix& H, const std::vector<double>& q, double noise) {
  const Eigen::Index K = H.rows();
  const Eigen::Index N = H.cols();
  const CMatrix Hc = H.adjoint();  // N x K, column k = h_k
  CMatrix A = CMatrix::Identity(N, N);
  for (Eigen::Index j = 0; j < K; ++j) {
    A.noalias() += (q[static_cast<std::size_t>(j)] / noise) * Hc.col(j) * Hc.col(j).adjoint();
  }
  return A.llt().solve(Hc);
}

}  // namespace

BeamMatrix recover_beamforming(const CMatrix& H, const PowerVectors& pv, double noise) {
  const auto K = static_cast<std::size_t>(H.rows());
  if (pv.p.size() != K || pv.q.size() != K) throw std::invalid_argument("power vectors must have length K");
  const CMatrix U = unnormalized_directions(H, pv.q, noise);
  BeamMatrix out;
  out.W = CMatrix::Zero(H.cols(), H.rows());
  for (Eigen::Index k = 0; k < H.rows(); ++k) {
    const double n = U.col(k).norm();
    if (n == 0.0) {
      out.degenerate_users.push_back(static_cast<int>(k));
      continue;
    }
    out.W.col(k) = std::sqrt(std::max(pv.p[static_cast<std::size_t>(k)], 0.0)) * U.col(k) / n;
  }
  return out;
}

RateGradient rate_and_gradient(const CMatrix& H, const PowerVectors& pv) {
  const Eigen::Index K = H.rows();
  const auto Ks = static_cast<std::size_t>(K);
  if (pv.p.size() != Ks || pv.q.size() != Ks) throw std::invalid_argument("power vectors must have length K");
  const CMatrix Hc = H.adjoint();  // column k = h_k
  const CMatrix U = unnormalized_directions(H, pv.q, 1.0);

  std::vector<double> norms(Ks);
  CMatrix D = CMatrix::Zero(U.rows(), K);
  for (Eigen::Index k = 0; k < K; ++k) {
    norms[static_cast<std::size_t>(k)] = U.col(k).norm();
    if (norms[static_cast<std::size_t>(k)] > 0.0) D.col(k) = U.col(k) / norms[static_cast<std::size_t>(k)];
  }
  const CMatrix Amp = H * D;  // Amp(k, j) = h_k^H d_j
  Eigen::MatrixXd G = Amp.cwiseAbs2();

  const auto& p = pv.p;
  std::vector<double> total(Ks), interf(Ks);
  RateGradient out;
  for (Eigen::Index k = 0; k < K; ++k) {
    double s = 1.0;
    for (Eigen::Index j = 0; j < K; ++j) s += p[static_cast<std::size_t>(j)] * G(k, j);
    const auto ks = static_cast<std::size_t>(k);
    total[ks] = s;
    interf[ks] = s - p[ks] * G(k, k);
    out.rate += std::log2(total[ks]) - std::log2(interf[ks]);
  }

  const double inv_ln2 = 1.0 / std::numbers::ln2;
  out.d_p.assign(Ks, 0.0);
  Eigen::MatrixXd dG(K, K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    for (Eigen::Index j = 0; j < K; ++j) {
      const auto js = static_cast<std::size_t>(j);
      const double cross = (j != k) ? 1.0 / interf[ks] : 0.0;
      out.d_p[js] += inv_ln2 * G(k, j) * (1.0 / total[ks] - cross);
      dG(k, j) = inv_ln2 * p[js] * (1.0 / total[ks] - cross);
    }
  }

  // Reverse through d_j = u_j / |u_j| and u_j = A^{-1} h_j; for real f of complex z
  // the gradient g satisfies df = Re(g^H dz).
  CMatrix gU = CMatrix::Zero(U.rows(), K);
  for (Eigen::Index j = 0; j < K; ++j) {
    const double n = norms[static_cast<std::size_t>(j)];
    if (n == 0.0) continue;
    CVector gd = CVector::Zero(U.rows());
    for (Eigen::Index k = 0; k < K; ++k) gd += 2.0 * dG(k, j) * Amp(k, j) * Hc.col(k);
    const double c = (U.col(j).adjoint() * gd)(0).real();
    gU.col(j) = gd / n - (c / (n * n * n)) * U.col(j);
  }
  // du_j / dq_i = -u_i (h_i^H u_j).
  const CMatrix HU = H * U;  // HU(i, j) = h_i^H u_j
  const CMatrix gUhU = gU.adjoint() * U;  // (j, i) = g_uj^H u_i
  out.d_q.assign(Ks, 0.0);
  for (Eigen::Index i = 0; i < K; ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < K; ++j) acc -= (gUhU(j, i) * HU(i, j)).real();
    out.d_q[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

std::vector<double> chain_normalization(std::span<const double> raw, double P, const RateGradient& g) {
  const std::size_t K = raw.size() / 2;
  std::vector<double> out(raw.size(), 0.0);
  auto half = [&](std::size_t offset, const std::vector<double>& grad) {
    double s = 0.0;
    for (std::size_t i = 0; i < K; ++i) s += raw[offset + i];
    if (!(s > 0.0)) return;  // uniform fallback is constant
    double dot = 0.0;
    for (std::size_t i = 0; i < K; ++i) dot += grad[i] * raw[offset + i];
    for (std::size_t i = 0; i < K; ++i) out[offset + i] = (P / s) * (grad[i] - dot / s);
  };
  half(0, g.d_p);
  half(K, g.d_q);
  return out;
}

// ---------------------------------------------------------------- WMMSE

namespace {

// Matched-filter directions with per-user powers; `favored` >= 0 gets
// kFavoredShare of P and the others split the rest.
constexpr double kFavoredShare = 0.9;

CMatrix matched_filter_beams(const CMatrix& H, double P, Eigen::Index favored = -1) {
  const Eigen::Index K = H.rows();
  CMatrix W = CMatrix::Zero(H.cols(), K);
  for (Eigen::Index k = 0; k < K; ++k) {
    double pk = P / static_cast<double>(K);
    if (favored >= 0) pk = k == favored ? kFavoredShare * P : (1.0 - kFavoredShare) * P / static_cast<double>(K - 1);
    const CVector h = user_channel(H, k);
    const double n = h.norm();
    if (n > 0.0) W.col(k) = std::sqrt(pk) * h / n;
  }
  return W;
}

// Solves W = (A + mu I)^{-1} B with the smallest mu >= 0 meeting ||W||_F^2 <= P.
CMatrix power_constrained_solve(const CMatrix& A, const CMatrix& B, double P, double tol) {
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(A);
  const Eigen::VectorXd lambda = eig.eigenvalues().cwiseMax(0.0);
  const CMatrix UB = eig.eigenvectors().adjoint() * B;
  const Eigen::VectorXd phi = UB.cwiseAbs2().rowwise().sum();
  const double lmax = std::max(lambda.maxCoeff(), 1.0);

  auto power = [&](double mu) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < lambda.size(); ++i) {
      const double den = lambda(i) + mu;
      if (den <= 1e-14 * lmax) {
        if (phi(i) > 0.0) return std::numeric_limits<double>::infinity();
        continue;
      }
      s += phi(i) / (den * den);
    }
    return s;
  };

  double mu = 0.0;
  if (!(power(0.0) <= P)) {
    double lo = 0.0;
    double hi = std::sqrt(phi.sum() / P);
    while (power(hi) > P) hi *= 2.0;
    for (int it = 0; it < 400 && hi - lo > tol * std::max(hi, 1e-300); ++it) {
      const double mid = 0.5 * (lo + hi);
      if (power(mid) > P) lo = mid; else hi = mid;
    }
    mu = hi;
  }
  Eigen::VectorXd inv(lambda.size());
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    const double den = lambda(i) + mu;
    inv(i) = den > 1e-14 * lmax ? 1.0 / den : 0.0;
  }
  return eig.eigenvectors() * (inv.asDiagonal() * UB);
}


WmmseResult wmmse_from(const CMatrix& H, CMatrix W, double P, const WmmseOptions& opts) {
  const Eigen::Index K = H.rows();
  const Eigen::Index N = H.cols();
  const CMatrix Hc = H.adjoint();
  WmmseResult res;
  double rate = sum_rate(H, W);
  res.rate_history.push_back(rate);

  for (int it = 0; it < opts.max_iter; ++it) {
    const CMatrix G = H * W;
    CMatrix A = CMatrix::Zero(N, N);
    CMatrix B = CMatrix::Zero(N, K);
    for (Eigen::Index k = 0; k < K; ++k) {
      double t = 1.0;
      for (Eigen::Index j = 0; j < K; ++j) t += std::norm(G(k, j));
      const cplx u = G(k, k) / t;
      const double e = 1.0 - std::norm(G(k, k)) / t;
      const double w = 1.0 / std::max(e, 1e-300);
      A.noalias() += (w * std::norm(u)) * Hc.col(k) * Hc.col(k).adjoint();
      B.col(k) = (w * u) * Hc.col(k);
    }
    W = power_constrained_solve(A, B, P, opts.bisection_tol);
    const double next = sum_rate(H, W);
    res.rate_history.push_back(next);
    res.iterations = it + 1;
    const bool done = std::abs(next - rate) < opts.tol;
    rate = next;
    if (done) {
      res.converged = true;
      break;
    }
  }
  res.beams.W = W;
  return res;
}

}  // namespace

WmmseResult wmmse(const CMatrix& H, double P, const WmmseOptions& opts) {
  WmmseResult best = wmmse_from(H, matched_filter_beams(H, P), P, opts);
  if (!opts.favored_user_starts || H.rows() < 2) return best;
  for (Eigen::Index k = 0; k < H.rows(); ++k) {
    auto r = wmmse_from(H, matched_filter_beams(H, P, k), P, opts);
    if (r.rate_history.back() > best.rate_history.back()) {
      r.start = static_cast<int>(k) + 1;
      best = std::move(r);
    }
  }
  return best;
}

std::vector<double> wmmse_rates(const std::vector<ChannelSample>& samples, double P, const WmmseOptions& opts,
                                Exec exec) {
  std::vector<double> out(samples.size());
  for_each_index(exec, samples.size(), [&](std::size_t i) {
    const auto r = wmmse(samples[i].H, P, opts);
    out[i] = r.rate_history.back();
  });
  return out;
}

// ---------------------------------------------------------------- imperfect CSI

ChannelSample add_channel_error(const ChannelSample& estimate, double sigma_e2, std::uint64_t seed) {
  if (!(sigma_e2 >= 0.0)) throw std::invalid_argument("channel error variance must be >= 0");
  ChannelSample truth = estimate;
  if (sigma_e2 == 0.0) return truth;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, std::sqrt(0.5));
  const double s = std::sqrt(sigma_e2);
  for (Eigen::Index k = 0; k < truth.H.rows(); ++k) {
    for (Eigen::Index i = 0; i < truth.H.cols(); ++i) {
      const double re = n(rng);
      const double im = n(rng);
      truth.H(k, i) += s * cplx(re, im);
    }
  }
  const double hn = estimate.H.norm();
  if (estimate.raw_H.size() == estimate.H.size() && hn > 0.0) {
    truth.raw_H = truth.H * (estimate.raw_H.norm() / hn);
  }
  return truth;
}

}  // namespace hqnn::bf
