#include "codiff/rng.hpp"

namespace codiff {

std::uint64_t mix64(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

std::uint64_t combine_keys(std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(a ^ (mix64(b + 0x9e3779b97f4a7c15ULL) + 0x632be59bd9b4e019ULL + (a << 6) + (a >> 2)));
}

CounterRng::result_type CounterRng::operator()() noexcept {
  ++counter_;
  return mix64(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
}

double CounterRng::uniform() {
  if (frozen_) return 0.5;
  constexpr double scale = 1.0 / 9007199254740992.0;  // 2^-53
  return (static_cast<double>((*this)() >> 11) + 0.5) * scale;
}

double CounterRng::normal() {
  if (frozen_) return 0.0;
  return normal_(*this);
}

Vec CounterRng::normal_vec(Eigen::Index n) {
  Vec out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = normal();
  return out;
}

StepRng RngStreams::step(Stream purpose, std::uint64_t step) const {
  return StepRng(combine_keys(combine_keys(seed_, static_cast<std::uint64_t>(purpose)), step), false);
}

}  // namespace codiff
