#include "mmimo/txchain.hpp"

#include <bit>
#include <cmath>
#include <numeric>

namespace mmimo {

std::array<std::uint8_t, 2> TrellisSpec::output(unsigned state, std::uint8_t bit) const noexcept {
  const unsigned reg = (static_cast<unsigned>(bit) << memory()) | state;
  return {static_cast<std::uint8_t>(std::popcount(reg & g0) & 1u),
          static_cast<std::uint8_t>(std::popcount(reg & g1) & 1u)};
}

unsigned TrellisSpec::next_state(unsigned state, std::uint8_t bit) const noexcept {
  return ((static_cast<unsigned>(bit) << memory()) | state) >> 1;
}

Bits conv_encode(std::span<const std::uint8_t> info, const TrellisSpec& trellis) {
  Bits out;
  out.reserve(2 * (info.size() + trellis.memory()));
  unsigned state = 0;
  auto push = [&](std::uint8_t b) {
    const auto pair = trellis.output(state, b);
    out.push_back(pair[0]);
    out.push_back(pair[1]);
    state = trellis.next_state(state, b);
  };
  for (auto b : info) push(b & 1u);
  for (unsigned t = 0; t < trellis.memory(); ++t) push(0);
  return out;
}

Permutation random_permutation(std::size_t n, Rng& rng) {
  Permutation perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_index(i)]);
  return perm;
}

QpskModem::QpskModem(double symbol_power) : power_(symbol_power) {
  if (!(symbol_power > 0.0)) throw ParameterError("symbol power must be positive");
  amp_ = std::sqrt(symbol_power / 2.0);
  for (std::uint8_t b0 = 0; b0 < 2; ++b0)
    for (std::uint8_t b1 = 0; b1 < 2; ++b1) points_[2 * b0 + b1] = map(b0, b1);
}

cdouble QpskModem::map(std::uint8_t b0, std::uint8_t b1) const noexcept {
  return {b0 ? -amp_ : amp_, b1 ? -amp_ : amp_};
}

std::array<std::uint8_t, 2> QpskModem::slice_bits(cdouble y) const noexcept {
  return {static_cast<std::uint8_t>(y.real() < 0.0), static_cast<std::uint8_t>(y.imag() < 0.0)};
}

cdouble QpskModem::slice(cdouble y) const noexcept {
  const auto b = slice_bits(y);
  return map(b[0], b[1]);
}

std::size_t FrameLayout::info_bits_per_stream() const noexcept {
  if (!coded) return 2 * data_symbols;
  const std::size_t tail = trellis.memory();
  return data_symbols > tail ? data_symbols - tail : 0;
}

CMatrix SymbolFrame::symbols() const {
  CMatrix all(data.rows(), pilots.cols() + data.cols());
  all.leftCols(pilots.cols()) = pilots;
  all.rightCols(data.cols()) = data;
  return all;
}

std::uint64_t pilot_seed(std::uint64_t frame_seed) { return derive_seed(frame_seed, {1}); }

CMatrix generate_pilots(std::size_t streams, std::size_t length, const QpskModem& modem,
                        std::uint64_t seed) {
  Rng rng(seed);
  CMatrix p(streams, length);
  for (std::size_t i = 0; i < length; ++i)
    for (std::size_t j = 0; j < streams; ++j) {
      const auto b0 = rng.bit();
      const auto b1 = rng.bit();
      p(j, i) = modem.map(b0, b1);
    }
  return p;
}

Bits random_bits(std::size_t n, Rng& rng) {
  Bits b(n);
  for (auto& x : b) x = rng.bit();
  return b;
}

SymbolFrame assemble_frame(const FrameLayout& layout, std::vector<Bits> payload,
                           const QpskModem& modem, std::uint64_t frame_seed) {
  const std::size_t streams = payload.size();
  SymbolFrame f;
  f.pilots = generate_pilots(streams, layout.pilot_symbols, modem, pilot_seed(frame_seed));
  f.data.resize(streams, layout.data_symbols);
  Rng perm_rng(derive_seed(frame_seed, {2}));
  for (std::size_t j = 0; j < streams; ++j) {
    if (payload[j].size() != layout.info_bits_per_stream())
      throw StructuralError("assemble_frame: stream " + std::to_string(j) + " carries " +
                            std::to_string(payload[j].size()) + " bits, expected " +
                            std::to_string(layout.info_bits_per_stream()));
    Bits coded = layout.coded ? conv_encode(payload[j], layout.trellis) : payload[j];
    Permutation perm;
    if (layout.coded) {
      perm = random_permutation(coded.size(), perm_rng);
    } else {
      perm.resize(coded.size());
      std::iota(perm.begin(), perm.end(), std::size_t{0});
    }
    Bits inter = interleave<std::uint8_t>(coded, perm);
    for (std::size_t i = 0; i < layout.data_symbols; ++i)
      f.data(j, i) = modem.map(inter[2 * i], inter[2 * i + 1]);
    f.coded.push_back(std::move(coded));
    f.interleaved.push_back(std::move(inter));
    f.interleavers.push_back(std::move(perm));
  }
  f.info = std::move(payload);
  return f;
}

CVector channel_transmit(const CMatrix& G, const CVector& s, double noise_var, Rng& rng) {
  if (G.cols() != s.size()) throw StructuralError("channel_transmit: G and s do not conform");
  if (noise_var < 0.0) throw ParameterError("noise variance must be non-negative");
  CVector r = G * s;
  for (Eigen::Index i = 0; i < r.size(); ++i) r(i) += rng.complex_normal(noise_var);
  return r;
}

CMatrix transmit_block(const CMatrix& G, const CMatrix& symbols, double noise_var, Rng& rng) {
  if (G.cols() != symbols.rows()) throw StructuralError("transmit_block: G and symbols do not conform");
  if (noise_var < 0.0) throw ParameterError("noise variance must be non-negative");
  CMatrix r = G * symbols;
  for (Eigen::Index c = 0; c < r.cols(); ++c)
    for (Eigen::Index i = 0; i < r.rows(); ++i) r(i, c) += rng.complex_normal(noise_var);
  return r;
}

}  // namespace mmimo
