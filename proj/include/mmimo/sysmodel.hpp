#pragma once

// Channel synthesis for the multiuser uplink: Kronecker-correlated
// small-scale fading composed with per-link path loss and log-normal
// shadowing, for both co-located (CAS) and distributed (DAS) receive arrays.

#include <cstddef>
#include <vector>

#include "mmimo/common.hpp"
#include "mmimo/random.hpp"

namespace mmimo {

struct Range {
  double lo = 0.0;
  double hi = 0.0;

  bool degenerate() const noexcept { return lo == hi; }
};

enum class Architecture { Cas, Das };

// Scenario geometry and large-scale parameters.
//
// The receive array has n_bs antennas at the base station plus n_heads
// remote radio heads with antennas_per_head antennas each. With n_heads == 0
// the system is a centralized array (CAS); otherwise it is distributed (DAS).
struct SystemConfig {
  std::size_t n_bs = 16;
  std::size_t n_heads = 0;
  std::size_t antennas_per_head = 1;
  std::size_t n_users = 8;
  std::size_t antennas_per_user = 1;
  double rho = 0.2;
  double path_loss_exp = 2.0;
  double shadow_spread_db = 3.0;
  Range path_gain{0.7, 0.7};
  Range distance{0.1, 0.95};
  // Grid spacing of the discrete distance draw; 0 draws continuously.
  double distance_step = 0.05;
  double symbol_power = 1.0;

  std::size_t n_rx_total() const noexcept { return n_bs + n_heads * antennas_per_head; }
  std::size_t n_streams() const noexcept { return n_users * antennas_per_user; }
  std::size_t n_sites() const noexcept { return n_heads + 1; }
  Architecture architecture() const noexcept {
    return n_heads == 0 ? Architecture::Cas : Architecture::Das;
  }

  // Throws ParameterError naming the first violated constraint.
  void validate() const;

  // Defaults of the centralized and distributed simulation setups.
  static SystemConfig centralized(std::size_t n_rx, std::size_t users, std::size_t per_user);
  static SystemConfig distributed(std::size_t n_bs, std::size_t heads, std::size_t per_head,
                                  std::size_t users, std::size_t per_user);
};

// Large-scale gain of one user-to-site link.
struct LinkGain {
  double distance = 1.0;
  double path_gain = 1.0;
  double shadow_v = 0.0;
  double alpha = 1.0;  // path loss amplitude sqrt(L / d^tau)
  double beta = 1.0;   // shadowing 10^(sigma v / 10)
  double gamma = 1.0;  // alpha * beta
};

LinkGain make_link_gain(double path_gain, double distance, double path_loss_exp,
                        double shadow_spread_db, double shadow_v);

struct LargeScaleDraw {
  // links[user][site]; site 0 is the base station, sites 1..n_heads the heads.
  std::vector<std::vector<LinkGain>> links;

  // Per-antenna amplitude of `user`: the base-station gain repeated n_bs
  // times followed by each head's gain repeated antennas_per_head times.
  RVector gain_diagonal(const SystemConfig& cfg, std::size_t user) const;
};

struct ChannelRealization {
  std::vector<CMatrix> small_scale;  // H_k, n_rx x antennas_per_user
  LargeScaleDraw large_scale;
  std::vector<CMatrix> composite;    // G_k
  CMatrix stacked;                   // [G_1 ... G_K], n_rx x n_streams
};

// Correlation matrix with entries rho^((i-j)^2).
RMatrix build_correlation_matrix(std::size_t n, double rho);

// Hermitian square root S = U diag(sqrt(max(l, 0))) U^H, so S S^H = theta.
// Eigenvalues below -1e-10 * ||theta|| raise NumericalError.
RMatrix matrix_sqrt(const RMatrix& theta);
CMatrix matrix_sqrt(const CMatrix& theta);

// Draws Kronecker-correlated small-scale matrices for a fixed configuration.
// The receive-side square root is block diagonal over co-located groups.
class KroneckerSampler {
 public:
  explicit KroneckerSampler(const SystemConfig& cfg);

  CMatrix draw(Rng& rng) const;

  const RMatrix& rx_sqrt() const noexcept { return rx_sqrt_; }
  const RMatrix& tx_sqrt() const noexcept { return tx_sqrt_; }

 private:
  std::size_t n_rx_;
  std::size_t n_tx_;
  RMatrix rx_sqrt_;
  RMatrix tx_sqrt_;
};

CMatrix draw_small_scale(const SystemConfig& cfg, Rng& rng);

LargeScaleDraw draw_large_scale(const SystemConfig& cfg, Rng& rng);

ChannelRealization compose_channel(const SystemConfig& cfg, std::vector<CMatrix> small,
                                   LargeScaleDraw large);

// Noise variance giving the requested per-antenna SNR:
//   sigma_n^2 = K N_U sigma_s^2 E|gamma|^2 / (R C 10^(snr/10)).
double snr_to_noise_variance(double snr_db, const SystemConfig& cfg, double mean_gamma_sq,
                             double code_rate = 1.0, unsigned bits_per_symbol = 2);

struct MeanEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

// Sample mean of |gamma|^2 over all links of n_draws large-scale draws.
MeanEstimate estimate_mean_gamma_sq(const SystemConfig& cfg, std::size_t n_draws, Rng& rng);

}  // namespace mmimo
