#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace invmatch {

// Seedable, splittable 64-bit stream. Child streams are derived by mixing the
// parent seed with a key through SplitMix64, so adding datasets or
// environments never perturbs draws of existing streams.
class RngStream {
  public:
    explicit RngStream(std::uint64_t seed) : seed_(seed) {}

    RngStream child(std::uint64_t key) const;
    RngStream child(std::string_view tag) const;

    std::mt19937_64 engine() const { return std::mt19937_64(seed_); }
    std::uint64_t seed() const { return seed_; }

  private:
    std::uint64_t seed_;
};

namespace detail {
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a(std::string_view s);
}  // namespace detail

}  // namespace invmatch
