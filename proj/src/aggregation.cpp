#include "mpcattack/aggregation.hpp"

#include <algorithm>
#include <cmath>

namespace mpcattack {

FeatureVector fuse_cross_modal(const FeatureVector& image_feature,
                               const std::optional<FeatureVector>& text_feature,
                               const FusionSpec& spec) {
  if (!(spec.lambda_fusion >= 0.0 && spec.lambda_fusion <= 1.0)) {
    throw ConfigError("lambda must lie in [0,1]");
  }
  if (!spec.text_enabled || !text_feature) return image_feature;
  const FeatureVector& text = *text_feature;
  if (text.dim() != image_feature.dim()) {
    throw ValidationError("cannot fuse image feature of dimension " +
                          std::to_string(image_feature.dim()) + " with text feature of dimension " +
                          std::to_string(text.dim()));
  }
  const double lam = spec.lambda_fusion;
  std::vector<double> out(image_feature.dim());
  if (lam == 1.0) {
    out = image_feature.data;
  } else if (lam == 0.0) {
    out = text.data;
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = lam * image_feature.data[i] + (1.0 - lam) * text.data[i];
    }
  }
  return FeatureVector(std::move(out), Paradigm::kCrossModalFused);
}

AggregatedFeature aggregate(std::vector<FeatureVector> blocks) {
  if (blocks.empty()) throw ValidationError("aggregation needs at least one feature block");
  std::stable_sort(blocks.begin(), blocks.end(), [](const FeatureVector& a, const FeatureVector& b) {
    return paradigm_rank(a.paradigm) < paradigm_rank(b.paradigm);
  });
  for (auto& b : blocks) {
    const double n = b.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw DegenerateFeatureError("zero-norm " + std::string(to_string(b.paradigm)) +
                                   " feature block");
    }
    for (double& v : b.data) v /= n;
  }
  return AggregatedFeature{std::move(blocks)};
}

AggregatedFeature aggregate_reference(const ImageTensor& img, const EncoderSuite& suite,
                                      const AttackConfig& cfg) {
  suite.validate(cfg);
  const FusionSpec spec = FusionSpec::from(cfg);
  std::vector<FeatureVector> blocks;
  if (cfg.paradigm_enabled(ParadigmFamily::kCrossModal)) {
    std::optional<std::string> caption;
    if (spec.text_enabled) caption = generate_caption(*suite.captioner, img);
    for (const auto& cm : suite.cross_modal) {
      FeatureVector image_feature = encode(*cm.image, img);
      std::optional<FeatureVector> text_feature;
      if (caption) text_feature = encode_text(*cm.text, *caption);
      blocks.push_back(fuse_cross_modal(image_feature, text_feature, spec));
    }
  }
  if (cfg.paradigm_enabled(ParadigmFamily::kMultimodal))
    for (const auto& e : suite.multimodal) blocks.push_back(encode(*e, img));
  if (cfg.paradigm_enabled(ParadigmFamily::kSelfSupervised))
    for (const auto& e : suite.self_supervised) blocks.push_back(encode(*e, img));
  return aggregate(std::move(blocks));
}

std::vector<FeatureVector> adversarial_blocks(const Tensor3& x_adv, const EncoderSuite& suite,
                                              const AttackConfig& cfg) {
  std::vector<FeatureVector> blocks;
  for (const ParadigmEncoder* e : suite.active(cfg)) blocks.push_back(encode(*e, x_adv));
  return blocks;
}

AggregatedFeature aggregate_adversarial(const Tensor3& x_adv, const EncoderSuite& suite,
                                        const AttackConfig& cfg) {
  suite.validate(cfg);
  return aggregate(adversarial_blocks(x_adv, suite, cfg));
}

AggregatedFeature aggregate_adversarial(const ImageTensor& x_adv, const EncoderSuite& suite,
                                        const AttackConfig& cfg) {
  return aggregate_adversarial(x_adv.pixels(), suite, cfg);
}

}  // namespace mpcattack
