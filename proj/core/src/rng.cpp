#include "qtt/rng.hpp"

namespace qtt {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RngSeed derive_seed(RngSeed parent, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = splitmix64(parent.value);
  for (auto k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return RngSeed{h};
}

RngSeed derive_seed(RngSeed parent, std::string_view label) {
  // FNV-1a over the label, then mixed like a numeric key.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return derive_seed(parent, {h});
}

Engine make_engine(RngSeed seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed.value),
                    static_cast<std::uint32_t>(seed.value >> 32)};
  return Engine(seq);
}

}  // namespace qtt
