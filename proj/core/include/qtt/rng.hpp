#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace qtt {

using Engine = std::mt19937_64;

/// Master seed for a simulation. Every stochastic stage derives its own
/// engine from a seed plus a stage label so that stages never share draws.
struct RngSeed {
  std::uint64_t value = 0;

  friend bool operator==(RngSeed, RngSeed) = default;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Deterministic child seed keyed by a list of integers (cell, trial, ...).
RngSeed derive_seed(RngSeed parent, std::initializer_list<std::uint64_t> keys);

/// Child seed keyed by a stage name.
RngSeed derive_seed(RngSeed parent, std::string_view label);

Engine make_engine(RngSeed seed);

}  // namespace qtt
