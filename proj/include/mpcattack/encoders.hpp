#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mpcattack/core.hpp"
#include "mpcattack/transforms.hpp"

namespace mpcattack {

struct ImageSize {
  int height = 0;
  int width = 0;
  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

/// Differentiable image encoder for one pretraining paradigm.
///
/// Implementations must be deterministic, and forward/vjp must be callable
/// concurrently on one instance unless concurrent_safe() returns false, in
/// which case the batch driver builds one instance per worker.
class ParadigmEncoder {
 public:
  virtual ~ParadigmEncoder() = default;

  [[nodiscard]] virtual std::size_t output_dim() const = 0;
  [[nodiscard]] virtual ImageSize input_size() const = 0;
  [[nodiscard]] virtual Paradigm paradigm() const = 0;
  [[nodiscard]] virtual std::string name() const = 0;

  /// Raw (unnormalised) features of an H x W x 3 array.
  [[nodiscard]] virtual std::vector<double> forward(const Tensor3& x) const = 0;
  /// u^T J(x), reshaped to the input shape.
  [[nodiscard]] virtual Tensor3 vjp(const Tensor3& x, std::span<const double> cotangent) const = 0;

  [[nodiscard]] virtual bool concurrent_safe() const { return true; }
};

/// Forward pass with shape validation; the result carries the encoder's tag.
FeatureVector encode(const ParadigmEncoder& encoder, const ImageTensor& img);
FeatureVector encode(const ParadigmEncoder& encoder, const Tensor3& x);

/// VJP with shape and cotangent-length validation.
Tensor3 vjp(const ParadigmEncoder& encoder, const Tensor3& x, std::span<const double> cotangent);
Tensor3 vjp(const ParadigmEncoder& encoder, const ImageTensor& img, const FeatureVector& cotangent);

/// forward(x) = W * flatten(x) + b.
class ToyLinearEncoder final : public ParadigmEncoder {
 public:
  /// Weights ~ U(-sqrt(3/n), sqrt(3/n)) (unit-variance rows), bias ~ U(-0.1, 0.1).
  ToyLinearEncoder(std::uint64_t seed, ImageSize input, std::size_t output_dim, Paradigm tag);
  /// Explicit row-major weight (output_dim x H*W*3) and bias.
  ToyLinearEncoder(ImageSize input, std::vector<double> weight, std::vector<double> bias,
                   Paradigm tag);

  std::size_t output_dim() const override { return bias_.size(); }
  ImageSize input_size() const override { return input_; }
  Paradigm paradigm() const override { return tag_; }
  std::string name() const override { return "toy_linear"; }

  std::vector<double> forward(const Tensor3& x) const override;
  Tensor3 vjp(const Tensor3& x, std::span<const double> cotangent) const override;

  [[nodiscard]] const std::vector<double>& weight() const { return weight_; }
  [[nodiscard]] const std::vector<double>& bias() const { return bias_; }
  [[nodiscard]] std::size_t input_dim() const { return input_dim_; }

  /// Same map with weight and bias multiplied by `factor`.
  [[nodiscard]] ToyLinearEncoder scaled(double factor) const;

 private:
  ImageSize input_;
  std::size_t input_dim_;
  std::vector<double> weight_;
  std::vector<double> bias_;
  Paradigm tag_;
};

/// 3x3 same-padded convolution -> tanh -> linear readout.
class ToyConvEncoder final : public ParadigmEncoder {
 public:
  ToyConvEncoder(std::uint64_t seed, ImageSize input, std::size_t output_dim, Paradigm tag,
                 int hidden_channels = 4);

  std::size_t output_dim() const override { return readout_bias_.size(); }
  ImageSize input_size() const override { return input_; }
  Paradigm paradigm() const override { return tag_; }
  std::string name() const override { return "toy_conv"; }

  std::vector<double> forward(const Tensor3& x) const override;
  Tensor3 vjp(const Tensor3& x, std::span<const double> cotangent) const override;

 private:
  [[nodiscard]] Tensor3 hidden(const Tensor3& x) const;
  [[nodiscard]] double kernel(int k, int c, int dy, int dx) const;

  ImageSize input_;
  int hidden_channels_;
  std::vector<double> kernel_;  // [k][c][3][3]
  std::vector<double> conv_bias_;
  std::vector<double> readout_;  // output_dim x (H*W*hidden)
  std::vector<double> readout_bias_;
  Paradigm tag_;
};

/// Adapter that bilinearly resizes its input to the inner encoder's native
/// size. The resize is part of the VJP.
class ResizingEncoder final : public ParadigmEncoder {
 public:
  ResizingEncoder(std::shared_ptr<const ParadigmEncoder> inner, ImageSize outer);

  std::size_t output_dim() const override { return inner_->output_dim(); }
  ImageSize input_size() const override { return outer_; }
  Paradigm paradigm() const override { return inner_->paradigm(); }
  std::string name() const override { return inner_->name(); }
  bool concurrent_safe() const override { return inner_->concurrent_safe(); }

  std::vector<double> forward(const Tensor3& x) const override;
  Tensor3 vjp(const Tensor3& x, std::span<const double> cotangent) const override;

 private:
  std::shared_ptr<const ParadigmEncoder> inner_;
  ImageSize outer_;
  BilinearResampler resampler_;
};

// ---------------------------------------------------------------------------
// Text side
// ---------------------------------------------------------------------------

/// Image captioner (the text generator of a multimodal model).
class CaptionGenerator {
 public:
  virtual ~CaptionGenerator() = default;
  [[nodiscard]] virtual std::string caption(const ImageTensor& img) const = 0;
};

/// "image:" followed by the 64-bit FNV-1a hash of the pixel bytes (hex).
class MockCaptionGenerator final : public CaptionGenerator {
 public:
  explicit MockCaptionGenerator(std::uint64_t seed = 0) : seed_(seed) {}
  std::string caption(const ImageTensor& img) const override;

 private:
  std::uint64_t seed_;
};

/// Hex digest used by the mock captioner and mock victim.
std::string image_digest(const ImageTensor& img, std::uint64_t seed = 0);

std::string generate_caption(const CaptionGenerator& generator, const ImageTensor& img);

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  [[nodiscard]] virtual std::size_t output_dim() const = 0;
  [[nodiscard]] virtual std::vector<double> forward(std::string_view text) const = 0;
};

/// Unit vector drawn from a stream seeded by the text hash.
class MockTextEncoder final : public TextEncoder {
 public:
  MockTextEncoder(std::size_t output_dim, std::uint64_t seed = 0)
      : dim_(output_dim), seed_(seed) {}
  std::size_t output_dim() const override { return dim_; }
  std::vector<double> forward(std::string_view text) const override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

/// Rejects empty text; the result is tagged kCrossModalText.
FeatureVector encode_text(const TextEncoder& encoder, std::string_view text);

// ---------------------------------------------------------------------------
// Surrogate suite
// ---------------------------------------------------------------------------

struct CrossModalEncoder {
  std::shared_ptr<const ParadigmEncoder> image;
  /// Optional; required when text fusion is enabled.
  std::shared_ptr<const TextEncoder> text;
};

/// All surrogates of one attack, grouped by paradigm family.
struct EncoderSuite {
  std::vector<CrossModalEncoder> cross_modal;
  std::vector<std::shared_ptr<const ParadigmEncoder>> multimodal;
  std::vector<std::shared_ptr<const ParadigmEncoder>> self_supervised;
  std::shared_ptr<const CaptionGenerator> captioner;

  /// Image encoders of the enabled families in block order.
  [[nodiscard]] std::vector<const ParadigmEncoder*> active(const AttackConfig& cfg) const;
  [[nodiscard]] bool concurrent_safe() const;
  /// Throws ConfigError if the enabled families or text fusion cannot be served.
  void validate(const AttackConfig& cfg) const;
};

}  // namespace mpcattack
