#include "mmimo/sysmodel.hpp"

#include <cmath>
#include <string>

namespace mmimo {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ParameterError(what);
}

template <typename Matrix>
Matrix hermitian_sqrt(const Matrix& theta) {
  if (theta.rows() != theta.cols()) throw StructuralError("matrix_sqrt: matrix is not square");
  if (theta.size() == 0) return theta;
  const Matrix sym = (theta + theta.adjoint()) / 2.0;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  if (eig.info() != Eigen::Success) throw NumericalError("matrix_sqrt: eigendecomposition failed");
  const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  RVector roots(eig.eigenvalues().size());
  for (Eigen::Index i = 0; i < roots.size(); ++i) {
    const double l = eig.eigenvalues()(i);
    if (l < -1e-10 * scale)
      throw NumericalError("matrix_sqrt: matrix is not positive semidefinite (eigenvalue " +
                           std::to_string(l) + ")");
    roots(i) = std::sqrt(std::max(l, 0.0));
  }
  const auto& u = eig.eigenvectors();
  return u * roots.asDiagonal() * u.adjoint();
}

std::vector<double> distance_grid(const SystemConfig& cfg) {
  std::vector<double> grid;
  const auto steps = static_cast<std::size_t>(
      std::floor((cfg.distance.hi - cfg.distance.lo) / cfg.distance_step + 1e-9));
  for (std::size_t m = 0; m <= steps; ++m) grid.push_back(cfg.distance.lo + m * cfg.distance_step);
  return grid;
}

}  // namespace

void SystemConfig::validate() const {
  require(n_bs >= 1, "n_bs must be at least 1");
  require(n_heads == 0 || antennas_per_head >= 1, "antennas_per_head must be at least 1");
  require(n_users >= 1 && antennas_per_user >= 1, "need at least one user antenna");
  require(n_rx_total() >= n_streams(),
          "receive antennas (" + std::to_string(n_rx_total()) +
              ") must be at least the number of user streams (" + std::to_string(n_streams()) + ")");
  require(rho >= 0.0 && rho <= 1.0, "rho must lie in [0, 1]");
  require(path_loss_exp >= 2.0 && path_loss_exp <= 4.0, "path_loss_exp must lie in [2, 4]");
  require(shadow_spread_db >= 0.0, "shadow_spread_db must be non-negative");
  require(path_gain.lo > 0.0 && path_gain.lo <= path_gain.hi, "path_gain range must be positive");
  require(distance.lo > 0.0 && distance.lo <= distance.hi && distance.hi <= 1.0,
          "distance range must lie within (0, 1]");
  require(distance_step >= 0.0, "distance_step must be non-negative");
  require(symbol_power > 0.0, "symbol_power must be positive");
}

SystemConfig SystemConfig::centralized(std::size_t n_rx, std::size_t users, std::size_t per_user) {
  SystemConfig cfg;
  cfg.n_bs = n_rx;
  cfg.n_heads = 0;
  cfg.n_users = users;
  cfg.antennas_per_user = per_user;
  cfg.path_gain = {0.7, 0.7};
  cfg.distance = {0.1, 0.95};
  return cfg;
}

SystemConfig SystemConfig::distributed(std::size_t n_bs, std::size_t heads, std::size_t per_head,
                                       std::size_t users, std::size_t per_user) {
  SystemConfig cfg;
  cfg.n_bs = n_bs;
  cfg.n_heads = heads;
  cfg.antennas_per_head = per_head;
  cfg.n_users = users;
  cfg.antennas_per_user = per_user;
  cfg.path_gain = {0.7, 1.0};
  cfg.distance = {0.1, 0.5};
  return cfg;
}

LinkGain make_link_gain(double path_gain, double distance, double path_loss_exp,
                        double shadow_spread_db, double shadow_v) {
  if (!(distance > 0.0)) throw ParameterError("link distance must be positive");
  LinkGain g;
  g.distance = distance;
  g.path_gain = path_gain;
  g.shadow_v = shadow_v;
  g.alpha = std::sqrt(path_gain / std::pow(distance, path_loss_exp));
  g.beta = std::pow(10.0, shadow_spread_db * shadow_v / 10.0);
  g.gamma = g.alpha * g.beta;
  return g;
}

RVector LargeScaleDraw::gain_diagonal(const SystemConfig& cfg, std::size_t user) const {
  const auto& row = links.at(user);
  if (row.size() != cfg.n_sites()) throw StructuralError("large-scale draw does not match config");
  RVector d(cfg.n_rx_total());
  d.head(cfg.n_bs).setConstant(row[0].gamma);
  for (std::size_t j = 0; j < cfg.n_heads; ++j)
    d.segment(cfg.n_bs + j * cfg.antennas_per_head, cfg.antennas_per_head)
        .setConstant(row[j + 1].gamma);
  return d;
}

RMatrix build_correlation_matrix(std::size_t n, double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw ParameterError("rho must lie in [0, 1]");
  if (n == 0) throw ParameterError("correlation matrix needs n >= 1");
  RMatrix theta(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double d = static_cast<double>(i) - static_cast<double>(j);
      theta(i, j) = std::pow(rho, d * d);
    }
  return theta;
}

RMatrix matrix_sqrt(const RMatrix& theta) { return hermitian_sqrt(theta); }
CMatrix matrix_sqrt(const CMatrix& theta) { return hermitian_sqrt(theta); }

KroneckerSampler::KroneckerSampler(const SystemConfig& cfg)
    : n_rx_(cfg.n_rx_total()), n_tx_(cfg.antennas_per_user) {
  cfg.validate();
  rx_sqrt_ = RMatrix::Zero(n_rx_, n_rx_);
  rx_sqrt_.topLeftCorner(cfg.n_bs, cfg.n_bs) =
      matrix_sqrt(build_correlation_matrix(cfg.n_bs, cfg.rho));
  if (cfg.n_heads > 0) {
    const RMatrix head = matrix_sqrt(build_correlation_matrix(cfg.antennas_per_head, cfg.rho));
    for (std::size_t j = 0; j < cfg.n_heads; ++j) {
      const auto off = static_cast<Eigen::Index>(cfg.n_bs + j * cfg.antennas_per_head);
      rx_sqrt_.block(off, off, head.rows(), head.cols()) = head;
    }
  }
  tx_sqrt_ = matrix_sqrt(build_correlation_matrix(n_tx_, cfg.rho));
}

CMatrix KroneckerSampler::draw(Rng& rng) const {
  CMatrix white(n_rx_, n_tx_);
  for (Eigen::Index c = 0; c < white.cols(); ++c)
    for (Eigen::Index r = 0; r < white.rows(); ++r) white(r, c) = rng.complex_normal();
  return rx_sqrt_.cast<cdouble>() * white * tx_sqrt_.cast<cdouble>();
}

CMatrix draw_small_scale(const SystemConfig& cfg, Rng& rng) { return KroneckerSampler(cfg).draw(rng); }

LargeScaleDraw draw_large_scale(const SystemConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto grid = cfg.distance_step > 0.0 ? distance_grid(cfg) : std::vector<double>{};
  LargeScaleDraw draw;
  draw.links.resize(cfg.n_users);
  for (auto& row : draw.links) {
    row.reserve(cfg.n_sites());
    for (std::size_t j = 0; j < cfg.n_sites(); ++j) {
      const double d = grid.empty() ? rng.uniform(cfg.distance.lo, cfg.distance.hi)
                                    : grid[rng.uniform_index(grid.size())];
      const double l = cfg.path_gain.degenerate() ? cfg.path_gain.lo
                                                  : rng.uniform(cfg.path_gain.lo, cfg.path_gain.hi);
      const double v = rng.normal();
      row.push_back(make_link_gain(l, d, cfg.path_loss_exp, cfg.shadow_spread_db, v));
    }
  }
  return draw;
}

ChannelRealization compose_channel(const SystemConfig& cfg, std::vector<CMatrix> small,
                                   LargeScaleDraw large) {
  const auto n_rx = static_cast<Eigen::Index>(cfg.n_rx_total());
  const auto n_u = static_cast<Eigen::Index>(cfg.antennas_per_user);
  if (small.size() != cfg.n_users || large.links.size() != cfg.n_users)
    throw StructuralError("compose_channel: expected one small-scale matrix and gain set per user");
  ChannelRealization ch;
  ch.stacked.resize(n_rx, n_u * static_cast<Eigen::Index>(cfg.n_users));
  for (std::size_t k = 0; k < cfg.n_users; ++k) {
    if (small[k].rows() != n_rx || small[k].cols() != n_u)
      throw StructuralError("compose_channel: H_" + std::to_string(k) + " has wrong dimensions");
    CMatrix g = large.gain_diagonal(cfg, k).asDiagonal() * small[k];
    ch.stacked.middleCols(static_cast<Eigen::Index>(k) * n_u, n_u) = g;
    ch.composite.push_back(std::move(g));
  }
  ch.small_scale = std::move(small);
  ch.large_scale = std::move(large);
  return ch;
}

double snr_to_noise_variance(double snr_db, const SystemConfig& cfg, double mean_gamma_sq,
                             double code_rate, unsigned bits_per_symbol) {
  if (!std::isfinite(snr_db)) throw ParameterError("snr_db must be finite");
  if (!(code_rate > 0.0 && code_rate <= 1.0)) throw ParameterError("code rate must lie in (0, 1]");
  if (bits_per_symbol < 1) throw ParameterError("bits_per_symbol must be at least 1");
  if (!(mean_gamma_sq > 0.0)) throw ParameterError("mean_gamma_sq must be positive");
  if (!(cfg.symbol_power > 0.0)) throw ParameterError("symbol_power must be positive");
  const double received_power = cfg.symbol_power * mean_gamma_sq;
  return static_cast<double>(cfg.n_streams()) * received_power /
         (code_rate * bits_per_symbol * std::pow(10.0, snr_db / 10.0));
}

MeanEstimate estimate_mean_gamma_sq(const SystemConfig& cfg, std::size_t n_draws, Rng& rng) {
  if (n_draws < 1000) throw ParameterError("estimate_mean_gamma_sq needs at least 1000 draws");
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < n_draws; ++t) {
    const auto draw = draw_large_scale(cfg, rng);
    for (const auto& row : draw.links)
      for (const auto& link : row) {
        const double g2 = link.gamma * link.gamma;
        sum += g2;
        sum_sq += g2 * g2;
        ++n;
      }
  }
  MeanEstimate est;
  est.mean = sum / n;
  const double var = std::max(0.0, sum_sq / n - est.mean * est.mean);
  est.std_error = std::sqrt(var / n);
  return est;
}

}  // namespace mmimo
