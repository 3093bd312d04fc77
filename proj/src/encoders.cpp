#include "mpcattack/encoders.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>

#include "mpcattack/random.hpp"

namespace mpcattack {

namespace {

void check_input(const ParadigmEncoder& encoder, const Shape& shape) {
  const ImageSize expected = encoder.input_size();
  if (shape.height != expected.height || shape.width != expected.width ||
      shape.channels != kImageChannels) {
    throw ValidationError(encoder.name() + " expects input " + std::to_string(expected.height) +
                          "x" + std::to_string(expected.width) + "x3, got " + shape.str());
  }
}

std::vector<double> uniform_vector(Rng& rng, std::size_t n, double bound) {
  std::vector<double> v(n);
  for (double& x : v) x = uniform(rng, -bound, bound);
  return v;
}

}  // namespace

FeatureVector encode(const ParadigmEncoder& encoder, const Tensor3& x) {
  check_input(encoder, x.shape());
  std::vector<double> out = encoder.forward(x);
  if (out.size() != encoder.output_dim()) {
    throw BackendError(encoder.name() + " returned " + std::to_string(out.size()) +
                       " features, declared " + std::to_string(encoder.output_dim()));
  }
  return FeatureVector(std::move(out), encoder.paradigm());
}

FeatureVector encode(const ParadigmEncoder& encoder, const ImageTensor& img) {
  return encode(encoder, img.pixels());
}

Tensor3 vjp(const ParadigmEncoder& encoder, const Tensor3& x, std::span<const double> cotangent) {
  check_input(encoder, x.shape());
  if (cotangent.size() != encoder.output_dim()) {
    throw ValidationError("cotangent has length " + std::to_string(cotangent.size()) + ", " +
                          encoder.name() + " outputs " + std::to_string(encoder.output_dim()));
  }
  Tensor3 g = encoder.vjp(x, cotangent);
  if (g.shape() != x.shape()) {
    throw BackendError(encoder.name() + " returned a gradient of shape " + g.shape().str());
  }
  return g;
}

Tensor3 vjp(const ParadigmEncoder& encoder, const ImageTensor& img, const FeatureVector& cotangent) {
  return vjp(encoder, img.pixels(), cotangent.data);
}

// ---------------------------------------------------------------------------
// ToyLinearEncoder
// ---------------------------------------------------------------------------

ToyLinearEncoder::ToyLinearEncoder(std::uint64_t seed, ImageSize input, std::size_t output_dim,
                                   Paradigm tag)
    : input_(input),
      input_dim_(static_cast<std::size_t>(input.height) * input.width * kImageChannels),
      tag_(tag) {
  if (output_dim == 0 || input_dim_ == 0) throw ValidationError("encoder dimensions must be > 0");
  Rng rng(seed);
  weight_ = uniform_vector(rng, output_dim * input_dim_, std::sqrt(3.0 / input_dim_));
  bias_ = uniform_vector(rng, output_dim, 0.1);
}

ToyLinearEncoder::ToyLinearEncoder(ImageSize input, std::vector<double> weight,
                                   std::vector<double> bias, Paradigm tag)
    : input_(input),
      input_dim_(static_cast<std::size_t>(input.height) * input.width * kImageChannels),
      weight_(std::move(weight)),
      bias_(std::move(bias)),
      tag_(tag) {
  if (bias_.empty() || weight_.size() != bias_.size() * input_dim_) {
    throw ValidationError("weight must be output_dim x " + std::to_string(input_dim_));
  }
}

std::vector<double> ToyLinearEncoder::forward(const Tensor3& x) const {
  const auto in = x.values();
  std::vector<double> out(bias_);
  for (std::size_t o = 0; o < out.size(); ++o) {
    const double* row = weight_.data() + o * input_dim_;
    double acc = 0.0;
    for (std::size_t i = 0; i < input_dim_; ++i) acc += row[i] * in[i];
    out[o] += acc;
  }
  return out;
}

Tensor3 ToyLinearEncoder::vjp(const Tensor3& x, std::span<const double> cotangent) const {
  Tensor3 g(x.shape());
  auto out = g.values();
  for (std::size_t o = 0; o < cotangent.size(); ++o) {
    const double u = cotangent[o];
    if (u == 0.0) continue;
    const double* row = weight_.data() + o * input_dim_;
    for (std::size_t i = 0; i < input_dim_; ++i) out[i] += u * row[i];
  }
  return g;
}

ToyLinearEncoder ToyLinearEncoder::scaled(double factor) const {
  std::vector<double> w = weight_, b = bias_;
  for (double& v : w) v *= factor;
  for (double& v : b) v *= factor;
  return ToyLinearEncoder(input_, std::move(w), std::move(b), tag_);
}

// ---------------------------------------------------------------------------
// ToyConvEncoder
// ---------------------------------------------------------------------------

ToyConvEncoder::ToyConvEncoder(std::uint64_t seed, ImageSize input, std::size_t output_dim,
                               Paradigm tag, int hidden_channels)
    : input_(input), hidden_channels_(hidden_channels), tag_(tag) {
  if (output_dim == 0 || hidden_channels < 1) throw ValidationError("encoder dimensions must be > 0");
  Rng rng(seed);
  const std::size_t fan_in = 9 * kImageChannels;
  kernel_ = uniform_vector(rng, static_cast<std::size_t>(hidden_channels) * fan_in,
                           std::sqrt(3.0 / fan_in));
  conv_bias_ = uniform_vector(rng, hidden_channels, 0.1);
  const std::size_t hidden_dim =
      static_cast<std::size_t>(input.height) * input.width * hidden_channels;
  readout_ = uniform_vector(rng, output_dim * hidden_dim, std::sqrt(3.0 / hidden_dim));
  readout_bias_ = uniform_vector(rng, output_dim, 0.1);
}

double ToyConvEncoder::kernel(int k, int c, int dy, int dx) const {
  return kernel_[((static_cast<std::size_t>(k) * kImageChannels + c) * 3 + dy) * 3 + dx];
}

Tensor3 ToyConvEncoder::hidden(const Tensor3& x) const {
  const int h = input_.height, w = input_.width;
  Tensor3 act({h, w, hidden_channels_});
  for (int y = 0; y < h; ++y) {
    for (int xx = 0; xx < w; ++xx) {
      for (int k = 0; k < hidden_channels_; ++k) {
        double pre = conv_bias_[k];
        for (int dy = 0; dy < 3; ++dy) {
          const int sy = y + dy - 1;
          if (sy < 0 || sy >= h) continue;
          for (int dx = 0; dx < 3; ++dx) {
            const int sx = xx + dx - 1;
            if (sx < 0 || sx >= w) continue;
            for (int c = 0; c < kImageChannels; ++c) pre += kernel(k, c, dy, dx) * x.at(sy, sx, c);
          }
        }
        act.at(y, xx, k) = std::tanh(pre);
      }
    }
  }
  return act;
}

std::vector<double> ToyConvEncoder::forward(const Tensor3& x) const {
  const Tensor3 act = hidden(x);
  const auto a = act.values();
  std::vector<double> out(readout_bias_);
  for (std::size_t o = 0; o < out.size(); ++o) {
    const double* row = readout_.data() + o * a.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += row[i] * a[i];
    out[o] += acc;
  }
  return out;
}

Tensor3 ToyConvEncoder::vjp(const Tensor3& x, std::span<const double> cotangent) const {
  const Tensor3 act = hidden(x);
  const auto a = act.values();
  // d pre-activation = (R^T u) * (1 - tanh^2)
  Tensor3 dpre(act.shape());
  auto d = dpre.values();
  for (std::size_t o = 0; o < cotangent.size(); ++o) {
    const double u = cotangent[o];
    if (u == 0.0) continue;
    const double* row = readout_.data() + o * a.size();
    for (std::size_t i = 0; i < a.size(); ++i) d[i] += u * row[i];
  }
  for (std::size_t i = 0; i < a.size(); ++i) d[i] *= 1.0 - a[i] * a[i];

  const int h = input_.height, w = input_.width;
  Tensor3 g(x.shape());
  for (int y = 0; y < h; ++y) {
    for (int xx = 0; xx < w; ++xx) {
      for (int k = 0; k < hidden_channels_; ++k) {
        const double dk = dpre.at(y, xx, k);
        if (dk == 0.0) continue;
        for (int dy = 0; dy < 3; ++dy) {
          const int sy = y + dy - 1;
          if (sy < 0 || sy >= h) continue;
          for (int dx = 0; dx < 3; ++dx) {
            const int sx = xx + dx - 1;
            if (sx < 0 || sx >= w) continue;
            for (int c = 0; c < kImageChannels; ++c) g.at(sy, sx, c) += kernel(k, c, dy, dx) * dk;
          }
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// ResizingEncoder
// ---------------------------------------------------------------------------

ResizingEncoder::ResizingEncoder(std::shared_ptr<const ParadigmEncoder> inner, ImageSize outer)
    : inner_(std::move(inner)),
      outer_(outer),
      resampler_(Shape{outer.height, outer.width, kImageChannels}, inner_->input_size().height,
                 inner_->input_size().width) {}

std::vector<double> ResizingEncoder::forward(const Tensor3& x) const {
  return inner_->forward(resampler_.apply(x));
}

Tensor3 ResizingEncoder::vjp(const Tensor3& x, std::span<const double> cotangent) const {
  return resampler_.vjp(inner_->vjp(resampler_.apply(x), cotangent));
}

// ---------------------------------------------------------------------------
// Text side
// ---------------------------------------------------------------------------

std::string image_digest(const ImageTensor& img, std::uint64_t seed) {
  const auto v = img.values();
  const auto bytes = std::span(reinterpret_cast<const unsigned char*>(v.data()), v.size_bytes());
  const std::uint64_t h = fnv1a64(bytes, kFnvOffset ^ splitmix64(seed));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string MockCaptionGenerator::caption(const ImageTensor& img) const {
  return "image:" + image_digest(img, seed_);
}

std::string generate_caption(const CaptionGenerator& generator, const ImageTensor& img) {
  std::string text = generator.caption(img);
  if (text.empty()) throw BackendError("caption generator returned an empty description");
  return text;
}

std::vector<double> MockTextEncoder::forward(std::string_view text) const {
  Rng rng(splitmix64(fnv1a64(text) ^ seed_));
  std::vector<double> v(dim_);
  double norm2 = 0.0;
  while (norm2 == 0.0) {
    for (double& x : v) {
      x = uniform(rng, -1.0, 1.0);
      norm2 += x * x;
    }
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& x : v) x *= inv;
  return v;
}

FeatureVector encode_text(const TextEncoder& encoder, std::string_view text) {
  if (text.empty()) throw ValidationError("cannot encode empty text");
  std::vector<double> out = encoder.forward(text);
  if (out.size() != encoder.output_dim()) {
    throw BackendError("text encoder returned " + std::to_string(out.size()) +
                       " features, declared " + std::to_string(encoder.output_dim()));
  }
  return FeatureVector(std::move(out), Paradigm::kCrossModalText);
}

// ---------------------------------------------------------------------------
// EncoderSuite
// ---------------------------------------------------------------------------

std::vector<const ParadigmEncoder*> EncoderSuite::active(const AttackConfig& cfg) const {
  std::vector<const ParadigmEncoder*> out;
  if (cfg.paradigm_enabled(ParadigmFamily::kCrossModal))
    for (const auto& e : cross_modal) out.push_back(e.image.get());
  if (cfg.paradigm_enabled(ParadigmFamily::kMultimodal))
    for (const auto& e : multimodal) out.push_back(e.get());
  if (cfg.paradigm_enabled(ParadigmFamily::kSelfSupervised))
    for (const auto& e : self_supervised) out.push_back(e.get());
  return out;
}

bool EncoderSuite::concurrent_safe() const {
  for (const auto& e : cross_modal)
    if (!e.image->concurrent_safe()) return false;
  for (const auto& e : multimodal)
    if (!e->concurrent_safe()) return false;
  for (const auto& e : self_supervised)
    if (!e->concurrent_safe()) return false;
  return true;
}

void EncoderSuite::validate(const AttackConfig& cfg) const {
  auto need = [&](ParadigmFamily f, std::size_t n) {
    if (cfg.paradigm_enabled(f) && n == 0) {
      throw ConfigError("paradigm " + std::string(to_string(f)) + " is enabled but has no encoder");
    }
  };
  need(ParadigmFamily::kCrossModal, cross_modal.size());
  need(ParadigmFamily::kMultimodal, multimodal.size());
  need(ParadigmFamily::kSelfSupervised, self_supervised.size());
  for (const auto& e : cross_modal) {
    if (!e.image) throw ConfigError("cross-modal entry without an image encoder");
    if (paradigm_rank(e.image->paradigm()) != 0)
      throw ConfigError(e.image->name() + " is listed as cross-modal but tagged " +
                        std::string(to_string(e.image->paradigm())));
  }
  auto check_tag = [](const auto& list, Paradigm tag) {
    for (const auto& e : list) {
      if (!e) throw ConfigError("null encoder in suite");
      if (e->paradigm() != tag)
        throw ConfigError(e->name() + " is listed as " + std::string(to_string(tag)) +
                          " but tagged " + std::string(to_string(e->paradigm())));
    }
  };
  check_tag(multimodal, Paradigm::kMultimodal);
  check_tag(self_supervised, Paradigm::kSelfSupervised);
  if (cfg.text_fusion_enabled && cfg.paradigm_enabled(ParadigmFamily::kCrossModal)) {
    if (!captioner) throw ConfigError("text fusion requires a caption generator");
    for (const auto& e : cross_modal) {
      if (!e.text) throw ConfigError("text fusion requires a text encoder for every cross-modal model");
      if (e.text->output_dim() != e.image->output_dim()) {
        throw ConfigError("text encoder dimension " + std::to_string(e.text->output_dim()) +
                          " differs from image encoder dimension " +
                          std::to_string(e.image->output_dim()));
      }
    }
  }
}

}  // namespace mpcattack
