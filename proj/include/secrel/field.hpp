/*
 * Copyright 2026 the secrel authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SECREL_FIELD_HPP_
#define SECREL_FIELD_HPP_

#include <cstdint>
#include <random>

namespace secrel::field {

// Shares live in the prime field mod 2^61 - 1. Signed 64-bit column values
// are embedded as x mod p and decoded back through the (-p/2, p/2) window,
// which leaves ample headroom for sums of ~2^30 values of magnitude ~2^30.
inline constexpr std::uint64_t kPrime = (std::uint64_t{1} << 61) - 1;

// Largest value that decodes to a non-negative integer; used as the +inf
// sentinel key when padding sort networks.
inline constexpr std::uint64_t kMaxPositive = (kPrime - 1) / 2;

inline std::uint64_t reduce(std::uint64_t x) {
  x = (x & kPrime) + (x >> 61);
  if (x >= kPrime) x -= kPrime;
  return x;
}

inline std::uint64_t add(std::uint64_t a, std::uint64_t b) {
  return reduce(a + b);
}

inline std::uint64_t sub(std::uint64_t a, std::uint64_t b) {
  return reduce(a + kPrime - b);
}

inline std::uint64_t neg(std::uint64_t a) { return a == 0 ? 0 : kPrime - a; }

inline std::uint64_t mul(std::uint64_t a, std::uint64_t b) {
  unsigned __int128 wide = static_cast<unsigned __int128>(a) * b;
  std::uint64_t lo = static_cast<std::uint64_t>(wide & kPrime);
  std::uint64_t hi = static_cast<std::uint64_t>(wide >> 61);
  return reduce(lo + hi);
}

inline std::uint64_t encode(std::int64_t v) {
  if (v >= 0) return reduce(static_cast<std::uint64_t>(v));
  // two's-complement negation on the unsigned value; -v would overflow at
  // the type's minimum
  const std::uint64_t magnitude = ~static_cast<std::uint64_t>(v) + 1;
  return reduce(kPrime - reduce(magnitude));
}

inline std::int64_t decode(std::uint64_t v) {
  v = reduce(v);
  if (v <= kMaxPositive) return static_cast<std::int64_t>(v);
  return -static_cast<std::int64_t>(kPrime - v);
}

inline std::uint64_t random_elem(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::uint64_t> dist(0, kPrime - 1);
  return dist(rng);
}

}  // namespace secrel::field

#endif  // SECREL_FIELD_HPP_
