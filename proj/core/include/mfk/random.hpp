#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "mfk/types.hpp"

namespace mfk {

// Deterministic RNG. Distribution shaping is done here rather than with
// std:: distributions, whose output is implementation-defined; identical
// seeds must give identical streams on every platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t raw() { return engine_(); }

  // derived generator with an independent-looking stream
  Rng fork(uint64_t salt) {
    return Rng(engine_() ^ (salt * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL));
  }

  double uniform() {  // [0, 1)
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive bounds, rejection sampled so the result is unbiased
  int64_t uniform_int(int64_t lo, int64_t hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return lo + static_cast<int64_t>(r % span);
  }

  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return mag * std::cos(2.0 * M_PI * u2);
  }

  double gaussian(double mean, double sigma) { return mean + sigma * gaussian(); }

  Vec2 gaussian_vec2(double sigma) { return {gaussian(0, sigma), gaussian(0, sigma)}; }
  Vec3 gaussian_vec3(double sigma) {
    return {gaussian(0, sigma), gaussian(0, sigma), gaussian(0, sigma)};
  }

  Vec3 unit_vector() {
    Vec3 v;
    double n;
    do {
      v = gaussian_vec3(1.0);
      n = v.norm();
    } while (n < 1e-12);
    return v / n;
  }

  Quat rotation() {  // uniform over SO(3)
    Eigen::Vector4d v;
    double n;
    do {
      v = {gaussian(), gaussian(), gaussian(), gaussian()};
      n = v.norm();
    } while (n < 1e-12);
    v /= n;
    return Quat(v[0], v[1], v[2], v[3]);
  }

  RigidTransform rigid(double translation_scale) {
    return RigidTransform(rotation(), gaussian_vec3(translation_scale));
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mfk
