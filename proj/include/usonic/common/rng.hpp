#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include <boost/random/normal_distribution.hpp>

namespace usonic {

using Engine = std::mt19937_64;

/// Independent engine for (seed, stream...). Every random consumer in the
/// library derives its own engine this way so results never depend on call
/// order between components.
Engine make_engine(std::uint64_t seed, std::initializer_list<std::uint64_t> stream = {});

/// Ziggurat normal sampler; the boost implementation is platform independent
/// and several times faster than std::normal_distribution.
using Normal = boost::random::normal_distribution<double>;

inline double uniform(Engine& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace usonic
