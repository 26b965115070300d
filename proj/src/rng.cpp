#include "lift3d/rng.hpp"

#include <bit>
#include <cmath>
#include <sstream>

#include "lift3d/errors.hpp"

namespace lift3d {

std::uint64_t Rng::uniform_below(std::uint64_t n) {
  if (n == 0) throw InvalidInputError("uniform_below: n must be positive");
  if ((n & (n - 1)) == 0) return engine_() & (n - 1);
  std::uint64_t mask = n - 1;
  mask |= mask >> 1;
  mask |= mask >> 2;
  mask |= mask >> 4;
  mask |= mask >> 8;
  mask |= mask >> 16;
  mask |= mask >> 32;
  for (;;) {
    const std::uint64_t candidate = engine_() & mask;
    if (candidate < n) return candidate;
  }
}

double Rng::uniform01() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  for (;;) {
    const double u = 2.0 * uniform01() - 1.0;
    const double v = 2.0 * uniform01() - 1.0;
    const double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) {
      const double factor = std::sqrt(-2.0 * std::log(s) / s);
      spare_ = v * factor;
      has_spare_ = true;
      return u * factor;
    }
  }
}

std::vector<std::size_t> Rng::sample_without_replacement(std::size_t n, std::size_t k) {
  if (k > n) throw InvalidInputError("sample_without_replacement: k > n");
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(uniform_below(n - i));
    std::swap(pool[i], pool[j]);
    out[i] = pool[i];
  }
  return out;
}

std::string Rng::serialize() const {
  std::ostringstream os;
  os << engine_ << " " << (has_spare_ ? 1 : 0) << " "
     << std::bit_cast<std::uint64_t>(spare_);
  return os.str();
}

Rng Rng::deserialize(const std::string& text) {
  Rng rng(0);
  std::istringstream is(text);
  is >> rng.engine_;
  int has_spare = 0;
  std::uint64_t spare_bits = 0;
  is >> has_spare >> spare_bits;
  if (is.fail()) throw InvalidInputError("Rng::deserialize: malformed state");
  rng.has_spare_ = has_spare != 0;
  rng.spare_ = std::bit_cast<double>(spare_bits);
  return rng;
}

}  // namespace lift3d
