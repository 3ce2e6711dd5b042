#ifndef PCAL_INSTANCE_HPP
#define PCAL_INSTANCE_HPP

#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "lifting.hpp"
#include "types.hpp"

namespace pcal {

/// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of substream `stream` under `seed`; distinct (seed, stream) pairs
/// give statistically independent generators.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix64(mix64(seed) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

enum class Substream : std::uint64_t { signal_values = 1, supports = 2, ensemble = 3, phases = 4 };

inline std::mt19937_64 substream(std::uint64_t seed, Substream s) {
  return std::mt19937_64(derive_seed(seed, static_cast<std::uint64_t>(s)));
}

struct Instance {
  Index N = 0;
  Index K = 0;
  Index L = 0;
  Index M = 0;
  std::uint64_t seed = 0;
  Field field = Field::complex;
  SignalSet signals;
  MeasurementEnsemble ensemble;
};

namespace detail {

inline Complex draw(std::mt19937_64& rng, std::normal_distribution<double>& n, Field f) {
  const double re = n(rng);
  return f == Field::real ? Complex(re, 0.0) : Complex(re, n(rng));
}

}  // namespace detail

/// Random instance: supports uniform without replacement per signal,
/// nonzero entries and measurement vectors i.i.d. standard normal per
/// component, phases uniform on [0, 2 pi).
inline Instance gen_instance(Index N, Index K, Index L, Index M, std::uint64_t seed, Field field = Field::complex) {
  if (N < 1 || K < 1 || K > N || L < 1 || M < 0) throw DimensionError("gen_instance: invalid dimensions");
  Instance inst;
  inst.N = N;
  inst.K = K;
  inst.L = L;
  inst.M = M;
  inst.seed = seed;
  inst.field = field;

  std::normal_distribution<double> normal(0.0, 1.0);
  auto values = substream(seed, Substream::signal_values);
  auto supports = substream(seed, Substream::supports);
  std::vector<CVector> xs;
  for (Index l = 0; l < L; ++l) {
    std::vector<Index> idx(static_cast<size_t>(N));
    for (Index i = 0; i < N; ++i) idx[static_cast<size_t>(i)] = i;
    for (Index i = 0; i < K; ++i) {
      std::uniform_int_distribution<Index> pick(i, N - 1);
      std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(pick(supports))]);
    }
    CVector x = CVector::Zero(N);
    for (Index i = 0; i < K; ++i) {
      Complex v = detail::draw(values, normal, field);
      while (v == Complex(0.0, 0.0)) v = detail::draw(values, normal, field);
      x(idx[static_cast<size_t>(i)]) = v;
    }
    xs.push_back(std::move(x));
  }
  inst.signals = SignalSet::from_signals(std::move(xs));

  auto ens = substream(seed, Substream::ensemble);
  auto ph = substream(seed, Substream::phases);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::vector<CVector> ms;
  std::vector<double> phases;
  for (Index i = 0; i < M; ++i) {
    CVector m(N);
    for (Index j = 0; j < N; ++j) m(j) = detail::draw(ens, normal, field);
    ms.push_back(std::move(m));
    phases.push_back(field == Field::real ? 0.0 : angle(ph));
  }
  inst.ensemble = MeasurementEnsemble::from_vectors(N, std::move(ms), std::move(phases));
  return inst;
}

}  // namespace pcal

#endif  // PCAL_INSTANCE_HPP
