#pragma once

// Shared helpers for unit and acceptance tests: seeded toy images and
// suites, and a central-difference gradient oracle.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>
#include <vector>

#include "mpcattack/attack.hpp"
#include "mpcattack/random.hpp"

namespace fixtures {

using namespace mpcattack;

inline Tensor3 random_tensor(std::uint64_t seed, Shape shape, double lo, double hi) {
  Rng rng(seed);
  Tensor3 t(shape);
  for (double& v : t.values()) v = uniform(rng, lo, hi);
  return t;
}

inline ImageTensor random_image(std::uint64_t seed, int h, int w, double lo = 0.0, double hi = 1.0) {
  const Tensor3 t = random_tensor(seed, {h, w, 3}, lo, hi);
  return ImageTensor(t.shape(), t.vector());
}

/// Smooth seeded pattern: a sum of a few low-frequency cosines per channel.
inline ImageTensor smooth_image(std::uint64_t seed, int h, int w) {
  Rng rng(seed);
  Tensor3 t({h, w, 3});
  for (int c = 0; c < 3; ++c) {
    double fy[3], fx[3], ph[3];
    for (int k = 0; k < 3; ++k) {
      fy[k] = uniform(rng, 0.5, 3.0);
      fx[k] = uniform(rng, 0.5, 3.0);
      ph[k] = uniform(rng, 0.0, 6.283185307179586);
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double v = 0.0;
        for (int k = 0; k < 3; ++k) v += std::cos(fy[k] * y / h * 6.283185307179586 + fx[k] * x / w * 6.283185307179586 + ph[k]);
        t.at(y, x, c) = 0.5 + 0.15 * v;
      }
    }
  }
  return clamp_image(t);
}

inline ImageTensor inverted(const ImageTensor& img) {
  Tensor3 t = img.pixels();
  for (double& v : t.values()) v = 1.0 - v;
  return ImageTensor(t.shape(), t.vector());
}

enum class SuiteKind { kLinear, kConv, kMixed };

/// One encoder per family. Native encoder sizes differ from the working size
/// in some families so the resize path is part of every chain.
inline EncoderSuite toy_suite(SuiteKind kind, int size, std::uint64_t seed, bool with_text = true) {
  auto make = [&](std::uint64_t s, ImageSize native, Paradigm tag,
                  bool conv) -> std::shared_ptr<const ParadigmEncoder> {
    std::shared_ptr<const ParadigmEncoder> enc;
    if (conv) {
      enc = std::make_shared<ToyConvEncoder>(s, native, 16, tag, 3);
    } else {
      enc = std::make_shared<ToyLinearEncoder>(s, native, 16, tag);
    }
    if (native == ImageSize{size, size}) return enc;
    return std::make_shared<ResizingEncoder>(enc, ImageSize{size, size});
  };
  const bool c0 = kind == SuiteKind::kConv;
  const bool c1 = kind != SuiteKind::kLinear;
  const bool c2 = kind == SuiteKind::kConv;
  EncoderSuite suite;
  CrossModalEncoder cm;
  cm.image = make(seed + 1, {size, size}, Paradigm::kCrossModalImage, c0);
  if (with_text) cm.text = std::make_shared<MockTextEncoder>(16, seed + 1);
  suite.cross_modal.push_back(cm);
  suite.multimodal.push_back(make(seed + 2, {8, 8}, Paradigm::kMultimodal, c1));
  suite.self_supervised.push_back(make(seed + 3, {size, size}, Paradigm::kSelfSupervised, c2));
  if (with_text) suite.captioner = std::make_shared<MockCaptionGenerator>(seed);
  return suite;
}

struct GradCheck {
  double rel_error = 0.0;
  double grad_norm = 0.0;
};

/// Compares the analytic dL/d(delta) with central differences over every
/// element of delta (step h).
inline GradCheck check_gradient(const ImageTensor& x_s, const Perturbation& delta,
                                const AggregatedFeature& z_t, const AggregatedFeature& z_s,
                                std::span<const ParadigmEncoder* const> encoders,
                                const LossParams& p, const CropWindow& crop, double h = 1e-5) {
  const PerturbationGradient analytic =
      loss_gradient_wrt_perturbation(x_s, delta, z_t, z_s, encoders, p, crop);
  Tensor3 d = delta.values();
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double keep = d[i];
    d[i] = keep + h;
    const double up = loss_at_perturbation(x_s, d, z_t, z_s, encoders, p, crop).loss;
    d[i] = keep - h;
    const double down = loss_at_perturbation(x_s, d, z_t, z_s, encoders, p, crop).loss;
    d[i] = keep;
    const double fd = (up - down) / (2.0 * h);
    const double diff = analytic.gradient[i] - fd;
    num += diff * diff;
    den += fd * fd;
  }
  return {std::sqrt(num) / std::max(std::sqrt(den), 1e-300), std::sqrt(den)};
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("mpcattack_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixtures
