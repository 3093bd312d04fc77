#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpcattack/encoders.hpp"

namespace mpcattack {

/// Builds surrogate suites from a declarative config that maps each paradigm
/// family to adapter names plus their parameters or checkpoint identifiers:
///
///   {
///     "cross_modal": [{"adapter": "toy_linear", "seed": 1, "output_dim": 32,
///                      "input_size": [32, 32],
///                      "text_encoder": {"adapter": "mock_text", "seed": 1}}],
///     "multimodal": [{"adapter": "toy_conv", "seed": 2, ...}],
///     "self_supervised": [{"adapter": "toy_linear", "seed": 3, ...}],
///     "captioner": {"adapter": "mock_caption"}
///   }
///
/// Image encoders whose native input size differs from the working image
/// size are wrapped in a ResizingEncoder.
class EncoderRegistry {
 public:
  using ImageFactory =
      std::function<std::shared_ptr<const ParadigmEncoder>(const nlohmann::json& spec, Paradigm tag)>;
  using TextFactory = std::function<std::shared_ptr<const TextEncoder>(const nlohmann::json& spec,
                                                                       std::size_t output_dim)>;
  using CaptionFactory =
      std::function<std::shared_ptr<const CaptionGenerator>(const nlohmann::json& spec)>;

  /// toy_linear, toy_conv, mock_text, mock_caption, plus the pretrained
  /// model names, which are declared but need an external backend.
  static EncoderRegistry with_builtins();

  void register_image(const std::string& name, ImageFactory factory);
  void register_text(const std::string& name, TextFactory factory);
  void register_captioner(const std::string& name, CaptionFactory factory);

  [[nodiscard]] std::vector<std::string> image_adapters() const;
  [[nodiscard]] bool has_image_adapter(const std::string& name) const;

  /// Throws ConfigError for unknown adapters or malformed entries and
  /// BackendError when an adapter cannot load its model.
  [[nodiscard]] EncoderSuite build(const nlohmann::json& config, ImageSize image_size) const;

 private:
  std::map<std::string, ImageFactory> image_;
  std::map<std::string, TextFactory> text_;
  std::map<std::string, CaptionFactory> caption_;
};

/// Toy three-paradigm suite used when no encoder config is given.
nlohmann::json default_encoder_config();

/// Pretrained models per paradigm family, by name.
const std::vector<std::string>& pretrained_model_names(ParadigmFamily family);

}  // namespace mpcattack
