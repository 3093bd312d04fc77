#include "mpcattack/registry.hpp"

#include <filesystem>

namespace mpcattack {

using nlohmann::json;

namespace {

ImageSize native_size(const json& spec) {
  if (!spec.contains("input_size")) return {32, 32};
  const json& s = spec.at("input_size");
  if (!s.is_array() || s.size() != 2) throw ConfigError("input_size must be [height, width]");
  return {s.at(0).get<int>(), s.at(1).get<int>()};
}

template <typename T>
T get_or(const json& spec, const char* key, T fallback) {
  return spec.contains(key) ? spec.at(key).get<T>() : fallback;
}

std::shared_ptr<const ParadigmEncoder> unavailable_pretrained(const std::string& name,
                                                              const json& spec) {
  const std::string checkpoint = get_or<std::string>(spec, "checkpoint", name);
  throw BackendError("adapter '" + name + "' (checkpoint '" + checkpoint +
                     "') has no in-process backend in this build; implement it as a "
                     "ParadigmEncoder (for example from Python via mpcattack.ParadigmEncoder) "
                     "and pass it in an EncoderSuite");
}

}  // namespace

const std::vector<std::string>& pretrained_model_names(ParadigmFamily family) {
  static const std::vector<std::string> cross = {
      "clip-vit-base-patch16",    "clip-vit-base-patch32",    "CLIP-ViT-G-14-laion2B-s12B-b42K",
      "siglip2-base-patch16-224", "siglip2-base-patch32-256", "siglip2-giant-opt-patch16-256"};
  static const std::vector<std::string> multi = {"InternVL3-1B", "InternVL3-2B"};
  static const std::vector<std::string> ssl = {"dinov2-base", "dinov3-base"};
  switch (family) {
    case ParadigmFamily::kCrossModal: return cross;
    case ParadigmFamily::kMultimodal: return multi;
    case ParadigmFamily::kSelfSupervised: return ssl;
  }
  return cross;
}

EncoderRegistry EncoderRegistry::with_builtins() {
  EncoderRegistry r;
  r.register_image("toy_linear", [](const json& spec, Paradigm tag) {
    return std::make_shared<const ToyLinearEncoder>(get_or<std::uint64_t>(spec, "seed", 0),
                                                    native_size(spec),
                                                    get_or<std::size_t>(spec, "output_dim", 32), tag);
  });
  r.register_image("toy_conv", [](const json& spec, Paradigm tag) {
    return std::make_shared<const ToyConvEncoder>(
        get_or<std::uint64_t>(spec, "seed", 0), native_size(spec),
        get_or<std::size_t>(spec, "output_dim", 32), tag, get_or<int>(spec, "hidden_channels", 4));
  });
  r.register_text("mock_text", [](const json& spec, std::size_t dim) {
    return std::make_shared<const MockTextEncoder>(dim, get_or<std::uint64_t>(spec, "seed", 0));
  });
  r.register_captioner("mock_caption", [](const json& spec) {
    return std::make_shared<const MockCaptionGenerator>(get_or<std::uint64_t>(spec, "seed", 0));
  });
  for (ParadigmFamily f : {ParadigmFamily::kCrossModal, ParadigmFamily::kMultimodal,
                           ParadigmFamily::kSelfSupervised}) {
    for (const std::string& name : pretrained_model_names(f)) {
      r.register_image(name, [name](const json& spec, Paradigm) {
        return unavailable_pretrained(name, spec);
      });
    }
  }
  return r;
}

void EncoderRegistry::register_image(const std::string& name, ImageFactory factory) {
  image_[name] = std::move(factory);
}
void EncoderRegistry::register_text(const std::string& name, TextFactory factory) {
  text_[name] = std::move(factory);
}
void EncoderRegistry::register_captioner(const std::string& name, CaptionFactory factory) {
  caption_[name] = std::move(factory);
}

std::vector<std::string> EncoderRegistry::image_adapters() const {
  std::vector<std::string> names;
  for (const auto& [name, _] : image_) names.push_back(name);
  return names;
}

bool EncoderRegistry::has_image_adapter(const std::string& name) const {
  return image_.contains(name);
}

EncoderSuite EncoderRegistry::build(const json& config, ImageSize image_size) const {
  if (!config.is_object()) throw ConfigError("encoder config must be a JSON object");

  auto make_image = [&](const json& spec, Paradigm tag) -> std::shared_ptr<const ParadigmEncoder> {
    const std::string adapter = spec.at("adapter").get<std::string>();
    auto it = image_.find(adapter);
    if (it == image_.end()) throw ConfigError("unknown image adapter '" + adapter + "'");
    auto enc = it->second(spec, tag);
    if (enc->input_size() == image_size) return enc;
    return std::make_shared<const ResizingEncoder>(std::move(enc), image_size);
  };
  auto entries = [&](const char* key) {
    if (!config.contains(key)) return json::array();
    const json& v = config.at(key);
    if (!v.is_array()) throw ConfigError(std::string(key) + " must be a list of adapters");
    return v;
  };

  EncoderSuite suite;
  try {
    for (const json& spec : entries("cross_modal")) {
      CrossModalEncoder cm;
      cm.image = make_image(spec, Paradigm::kCrossModalImage);
      if (spec.contains("text_encoder")) {
        const json& t = spec.at("text_encoder");
        const std::string adapter = t.at("adapter").get<std::string>();
        auto it = text_.find(adapter);
        if (it == text_.end()) throw ConfigError("unknown text adapter '" + adapter + "'");
        cm.text = it->second(t, cm.image->output_dim());
      }
      suite.cross_modal.push_back(std::move(cm));
    }
    for (const json& spec : entries("multimodal"))
      suite.multimodal.push_back(make_image(spec, Paradigm::kMultimodal));
    for (const json& spec : entries("self_supervised"))
      suite.self_supervised.push_back(make_image(spec, Paradigm::kSelfSupervised));
    if (config.contains("captioner")) {
      const json& c = config.at("captioner");
      const std::string adapter = c.at("adapter").get<std::string>();
      auto it = caption_.find(adapter);
      if (it == caption_.end()) throw ConfigError("unknown caption adapter '" + adapter + "'");
      suite.captioner = it->second(c);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed encoder config: ") + e.what());
  }
  return suite;
}

json default_encoder_config() {
  return json{
      {"cross_modal",
       json::array({{{"adapter", "toy_linear"},
                     {"seed", 101},
                     {"output_dim", 32},
                     {"input_size", {32, 32}},
                     {"text_encoder", {{"adapter", "mock_text"}, {"seed", 101}}}}})},
      {"multimodal",
       json::array({{{"adapter", "toy_conv"},
                     {"seed", 202},
                     {"output_dim", 32},
                     {"input_size", {16, 16}},
                     {"hidden_channels", 4}}})},
      {"self_supervised",
       json::array({{{"adapter", "toy_linear"},
                     {"seed", 303},
                     {"output_dim", 32},
                     {"input_size", {32, 32}}}})},
      {"captioner", {{"adapter", "mock_caption"}, {"seed", 0}}},
  };
}

}  // namespace mpcattack
