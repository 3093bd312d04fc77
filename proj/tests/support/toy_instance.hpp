#pragma once

// The committed seeded toy attack instance: a warm red-tinted source and a
// cool blue-tinted target at 96x96, the built-in encoder suite with the
// multimodal encoder reading a 32x32 resize, and the default attack config.

#include <array>

#include "fixtures.hpp"
#include "mpcattack/registry.hpp"

namespace toy {

using namespace mpcattack;

inline constexpr int kSize = 96;
inline constexpr std::uint64_t kSeed = 6;

// Reference values from the committed run, used as a regression check.
inline constexpr double kReferenceInitialLoss = 1.3071875175245764;
inline constexpr double kReferenceFinalLoss = -2.4677868135575185;
inline constexpr double kReferenceFinalSimTarget = 0.7260587251135554;

inline ImageTensor tinted(std::uint64_t seed, std::array<double, 3> mean) {
  Tensor3 t = fixtures::smooth_image(seed, kSize, kSize).pixels();
  for (int y = 0; y < kSize; ++y)
    for (int x = 0; x < kSize; ++x)
      for (int c = 0; c < 3; ++c) t.at(y, x, c) = mean[c] + (t.at(y, x, c) - 0.5);
  return clamp_image(t);
}

inline nlohmann::json encoder_config() {
  nlohmann::json c = default_encoder_config();
  c["cross_modal"][0]["input_size"] = {kSize, kSize};
  c["self_supervised"][0]["input_size"] = {kSize, kSize};
  c["multimodal"][0]["input_size"] = {32, 32};
  return c;
}

struct Instance {
  ImageTensor x_s, x_t;
  EncoderSuite suite;
  AttackConfig cfg;
};

inline Instance seeded_instance() {
  AttackConfig cfg;
  cfg.seed = kSeed;
  return {tinted(kSeed, {0.8, 0.3, 0.2}), tinted(kSeed + 1000, {0.2, 0.3, 0.8}),
          EncoderRegistry::with_builtins().build(encoder_config(), {kSize, kSize}), cfg};
}

}  // namespace toy
