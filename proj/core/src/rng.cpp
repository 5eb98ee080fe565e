#include "bofbench/rng.hpp"

#include <bit>

namespace bof {

void Fnv1a::update_f64(double v) {
  update_u64(std::bit_cast<std::uint64_t>(v));
}

std::uint64_t fnv1a64(std::string_view bytes) {
  Fnv1a h;
  h.update_string(bytes);
  return h.digest();
}

std::size_t Rng::categorical(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) return uniform_index(weights.size());
  double target = uniform() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (target < acc) return i;
  }
  return weights.size() - 1;
}

}  // namespace bof
