#pragma once

// Transmit chain: convolutional encoding, per-stream interleaving, Gray QPSK
// mapping, pilot insertion and the flat-fading channel with AWGN.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "mmimo/common.hpp"
#include "mmimo/random.hpp"

namespace mmimo {

// Feedforward rate-1/2 convolutional code. Defaults to the (7,5) octal code
// with constraint length 3.
struct TrellisSpec {
  unsigned constraint_length = 3;
  unsigned g0 = 07;
  unsigned g1 = 05;

  unsigned memory() const noexcept { return constraint_length - 1; }
  unsigned states() const noexcept { return 1u << memory(); }
  // Output bit pair for input `bit` leaving `state` (most recent input in the MSB).
  std::array<std::uint8_t, 2> output(unsigned state, std::uint8_t bit) const noexcept;
  unsigned next_state(unsigned state, std::uint8_t bit) const noexcept;
};

// Encodes from the all-zero state and appends memory() zero tail bits, so the
// output has 2 * (info.size() + memory()) bits.
Bits conv_encode(std::span<const std::uint8_t> info, const TrellisSpec& trellis = {});

// out[i] = in[perm[i]].
template <typename T>
std::vector<T> interleave(std::span<const T> in, const Permutation& perm) {
  if (in.size() != perm.size()) throw StructuralError("interleave: length mismatch");
  std::vector<T> out(in.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out[i] = in[perm[i]];
  return out;
}

// Inverse of interleave: out[perm[i]] = in[i].
template <typename T>
std::vector<T> deinterleave(std::span<const T> in, const Permutation& perm) {
  if (in.size() != perm.size()) throw StructuralError("deinterleave: length mismatch");
  std::vector<T> out(in.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out[perm[i]] = in[i];
  return out;
}

Permutation random_permutation(std::size_t n, Rng& rng);

// Gray-labelled QPSK with energy symbol_power per symbol. Bit 0 selects the
// sign of the real part and bit 1 the sign of the imaginary part; a zero bit
// maps to the positive side.
class QpskModem {
 public:
  static constexpr unsigned kBitsPerSymbol = 2;

  explicit QpskModem(double symbol_power = 1.0);

  double symbol_power() const noexcept { return power_; }
  double amplitude() const noexcept { return amp_; }

  cdouble map(std::uint8_t b0, std::uint8_t b1) const noexcept;
  // Nearest constellation point; a zero component resolves to bit 0.
  std::array<std::uint8_t, 2> slice_bits(cdouble y) const noexcept;
  cdouble slice(cdouble y) const noexcept;

  // Points indexed by 2 * b0 + b1.
  const std::array<cdouble, 4>& points() const noexcept { return points_; }

 private:
  double power_;
  double amp_;
  std::array<cdouble, 4> points_;
};

struct FrameLayout {
  std::size_t data_symbols = 1500;
  std::size_t pilot_symbols = 0;
  bool coded = false;
  TrellisSpec trellis{};

  // Payload carried by one stream of one packet.
  std::size_t info_bits_per_stream() const noexcept;
  std::size_t coded_bits_per_stream() const noexcept { return 2 * data_symbols; }
  std::size_t length() const noexcept { return pilot_symbols + data_symbols; }
};

// One packet for every stream. Symbol matrices have one row per stream and
// one column per time instant.
struct SymbolFrame {
  std::vector<Bits> info;
  std::vector<Bits> coded;
  std::vector<Bits> interleaved;
  std::vector<Permutation> interleavers;
  CMatrix pilots;
  CMatrix data;

  std::size_t streams() const noexcept { return info.size(); }
  // Pilots followed by data.
  CMatrix symbols() const;
};

// Pseudo-random QPSK pilots; the receiver regenerates them from the same seed.
CMatrix generate_pilots(std::size_t streams, std::size_t length, const QpskModem& modem,
                        std::uint64_t seed);

std::uint64_t pilot_seed(std::uint64_t frame_seed);

Bits random_bits(std::size_t n, Rng& rng);

// Builds a packet from per-stream payload bits. Pilots and interleavers are
// derived from frame_seed. Uncoded frames use the identity interleaver.
SymbolFrame assemble_frame(const FrameLayout& layout, std::vector<Bits> payload,
                           const QpskModem& modem, std::uint64_t frame_seed);

// r = G s + n with n ~ CN(0, noise_var I).
CVector channel_transmit(const CMatrix& G, const CVector& s, double noise_var, Rng& rng);

// Column-wise channel_transmit over a block of symbol vectors.
CMatrix transmit_block(const CMatrix& G, const CMatrix& symbols, double noise_var, Rng& rng);

}  // namespace mmimo
