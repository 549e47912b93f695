#include "doctest.h"

#include <cmath>
#include <numeric>

#include "mmimo/txchain.hpp"

using namespace mmimo;

TEST_CASE("convolutional encoder") {
  const TrellisSpec t;
  CHECK(t.memory() == 2);
  CHECK(t.states() == 4);

  const Bits zeros(7, 0);
  const Bits out0 = conv_encode(zeros);
  CHECK(out0.size() == 2 * (7 + 2));
  CHECK(std::all_of(out0.begin(), out0.end(), [](auto b) { return b == 0; }));

  CHECK(conv_encode(Bits{1, 0, 0}) == Bits{1, 1, 1, 0, 1, 1, 0, 0, 0, 0});
  const Bits two = conv_encode(Bits{1, 1});
  CHECK(Bits(two.begin(), two.begin() + 4) == Bits{1, 1, 0, 1});
  CHECK(conv_encode(Bits{}).size() == 4);
}

TEST_CASE("encoder is linear over GF(2)") {
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    const Bits a = random_bits(40, rng);
    const Bits b = random_bits(40, rng);
    Bits x(40);
    for (int i = 0; i < 40; ++i) x[i] = a[i] ^ b[i];
    const Bits ca = conv_encode(a), cb = conv_encode(b), cx = conv_encode(x);
    for (std::size_t i = 0; i < cx.size(); ++i) CHECK(cx[i] == (ca[i] ^ cb[i]));
  }
}

TEST_CASE("interleaver") {
  const Bits x{5, 6, 7};
  Permutation id(3);
  std::iota(id.begin(), id.end(), 0);
  CHECK(interleave<std::uint8_t>(x, id) == x);
  const Permutation p{2, 0, 1};
  const Bits y = interleave<std::uint8_t>(x, p);
  CHECK(y == Bits{7, 5, 6});
  CHECK(deinterleave<std::uint8_t>(y, p) == x);

  Rng rng(8);
  const Permutation big = random_permutation(3000, rng);
  CHECK(is_permutation_of(big, 3000));
  const Bits data = random_bits(3000, rng);
  CHECK(deinterleave<std::uint8_t>(interleave<std::uint8_t>(data, big), big) == data);
  for (std::size_t n : {1u, 2u, 17u, 64u, 1001u}) {
    const Permutation q = random_permutation(n, rng);
    const std::vector<double> v(n, 1.5);
    CHECK(deinterleave<double>(interleave<double>(v, q), q) == v);
  }
  CHECK_THROWS_AS(interleave<std::uint8_t>(x, Permutation{0, 1}), StructuralError);
  CHECK_THROWS_AS(deinterleave<std::uint8_t>(x, Permutation{0, 1}), StructuralError);
}

TEST_CASE("Gray QPSK mapping") {
  const QpskModem m;
  const double h = std::sqrt(0.5);
  CHECK(std::abs(m.map(0, 0) - cdouble(h, h)) < 1e-15);
  CHECK(std::abs(m.map(0, 1) - cdouble(h, -h)) < 1e-15);
  CHECK(std::abs(m.map(1, 0) - cdouble(-h, h)) < 1e-15);
  CHECK(std::abs(m.map(1, 1) - cdouble(-h, -h)) < 1e-15);
  for (auto p : m.points()) CHECK(std::norm(p) == doctest::Approx(1.0));
  CHECK(m.slice_bits({0.9, 0.1}) == std::array<std::uint8_t, 2>{0, 0});
  CHECK(m.slice_bits({0.0, 0.0}) == std::array<std::uint8_t, 2>{0, 0});
  CHECK(m.slice_bits({-0.0, -1e-300}) == std::array<std::uint8_t, 2>{0, 1});
  for (std::uint8_t b0 = 0; b0 < 2; ++b0)
    for (std::uint8_t b1 = 0; b1 < 2; ++b1) {
      CHECK(m.slice_bits(m.map(b0, b1)) == std::array<std::uint8_t, 2>{b0, b1});
      CHECK(m.points()[2 * b0 + b1] == m.map(b0, b1));
    }

  const QpskModem m4(4.0);
  for (auto p : m4.points()) CHECK(std::norm(p) == doctest::Approx(4.0));
  CHECK(m4.slice(cdouble(0.3, -5)) == m4.map(0, 1));
}

TEST_CASE("frame assembly") {
  const QpskModem m;
  Rng rng(12);
  FrameLayout layout;
  layout.data_symbols = 1500;
  std::vector<Bits> payload{random_bits(layout.info_bits_per_stream(), rng),
                            random_bits(layout.info_bits_per_stream(), rng)};

  SUBCASE("uncoded, no pilots") {
    const auto f = assemble_frame(layout, payload, m, 99);
    CHECK(f.pilots.cols() == 0);
    CHECK(f.symbols().cols() == 1500);
    CHECK(f.symbols() == f.data);
    CHECK(f.interleaved == payload);
    for (Eigen::Index i = 0; i < 1500; ++i)
      CHECK(m.slice_bits(f.data(1, i)) ==
            std::array<std::uint8_t, 2>{payload[1][2 * i], payload[1][2 * i + 1]});
  }
  SUBCASE("pilots precede data") {
    layout.pilot_symbols = 250;
    const auto f = assemble_frame(layout, payload, m, 99);
    CHECK(f.symbols().cols() == 1750);
    CHECK(f.symbols().leftCols(250) == f.pilots);
    CHECK(f.pilots == generate_pilots(2, 250, m, pilot_seed(99)));
    CHECK(assemble_frame(layout, payload, m, 99).pilots == f.pilots);
    CHECK(assemble_frame(layout, payload, m, 100).pilots != f.pilots);
  }
  SUBCASE("coded") {
    layout.coded = true;
    std::vector<Bits> info{random_bits(layout.info_bits_per_stream(), rng)};
    CHECK(info[0].size() == 1498);
    const auto f = assemble_frame(layout, info, m, 5);
    CHECK(f.coded[0].size() == 3000);
    CHECK(f.coded[0] == conv_encode(info[0]));
    CHECK(f.interleaved[0] == interleave<std::uint8_t>(f.coded[0], f.interleavers[0]));
    CHECK(is_permutation_of(f.interleavers[0], 3000));
  }
  SUBCASE("wrong payload size") {
    payload[0].pop_back();
    CHECK_THROWS_AS(assemble_frame(layout, payload, m, 1), StructuralError);
  }
}

TEST_CASE("symbol power") {
  const QpskModem m;
  const CMatrix p = generate_pilots(4, 5000, m, 3);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) sum += std::norm(p(i));
  CHECK(sum / p.size() == doctest::Approx(1.0));
  // Balanced symbols: the sample mean is near zero.
  CHECK(std::abs(p.mean()) < 3.0 / std::sqrt(double(p.size())));
}

TEST_CASE("channel transmission") {
  Rng rng(1);
  CVector s(3);
  s << cdouble(1, 2), cdouble(-1, 0), cdouble(0, 0.5);
  CHECK(channel_transmit(CMatrix::Identity(3, 3), s, 0.0, rng) == s);

  // Noise covariance 2 I.
  const int n = 10000;
  CMatrix cov = CMatrix::Zero(2, 2);
  for (int t = 0; t < n; ++t) {
    const CVector r = channel_transmit(CMatrix::Zero(2, 2), CVector::Zero(2), 2.0, rng);
    cov += r * r.adjoint();
  }
  cov /= n;
  const double se = 2.0 / std::sqrt(double(n));
  CHECK(std::abs(cov(0, 0).real() - 2.0) < 3 * se);
  CHECK(std::abs(cov(1, 1).real() - 2.0) < 3 * se);
  CHECK(std::abs(cov(0, 1)) < 3 * se);

  CHECK_THROWS_AS(channel_transmit(CMatrix::Identity(2, 3), s.head(2), 0.0, rng), StructuralError);
  CHECK_THROWS_AS(channel_transmit(CMatrix::Identity(3, 3), s, -1.0, rng), ParameterError);

  Rng a(5), b(5);
  const CMatrix G = CMatrix::Random(4, 2);
  const CMatrix S = CMatrix::Random(2, 6);
  CHECK(transmit_block(G, S, 0.3, a) == transmit_block(G, S, 0.3, b));
}
