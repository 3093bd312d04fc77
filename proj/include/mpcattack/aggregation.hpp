#pragma once

#include <optional>
#include <vector>

#include "mpcattack/core.hpp"
#include "mpcattack/encoders.hpp"

namespace mpcattack {

struct FusionSpec {
  double lambda_fusion = 0.6;
  bool text_enabled = true;

  static FusionSpec from(const AttackConfig& cfg) {
    return {cfg.lambda_fusion, cfg.text_fusion_enabled};
  }
};

/// lambda * image + (1 - lambda) * text. Returns the image feature untouched
/// when text is absent or disabled, and exactly one of the inputs at the
/// lambda boundaries.
FeatureVector fuse_cross_modal(const FeatureVector& image_feature,
                               const std::optional<FeatureVector>& text_feature,
                               const FusionSpec& spec);

/// l2-normalises every block and orders them cross-modal, multimodal,
/// self-supervised (stable within a family).
/// Throws DegenerateFeatureError on a zero-norm block.
AggregatedFeature aggregate(std::vector<FeatureVector> blocks);

/// Aggregated feature of a clean source or target image: each cross-modal
/// image feature is fused with the encoded caption of the image.
AggregatedFeature aggregate_reference(const ImageTensor& img, const EncoderSuite& suite,
                                      const AttackConfig& cfg);

/// Raw (unnormalised) per-encoder features of an adversarial input in block
/// order. No caption is involved on this side.
std::vector<FeatureVector> adversarial_blocks(const Tensor3& x_adv, const EncoderSuite& suite,
                                              const AttackConfig& cfg);

AggregatedFeature aggregate_adversarial(const ImageTensor& x_adv, const EncoderSuite& suite,
                                        const AttackConfig& cfg);
AggregatedFeature aggregate_adversarial(const Tensor3& x_adv, const EncoderSuite& suite,
                                        const AttackConfig& cfg);

}  // namespace mpcattack
