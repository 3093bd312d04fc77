#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mpcattack {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: wrong shape, non-finite values, out-of-domain arguments.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameters (non-positive temperature, empty paradigm set, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A feature block with zero norm or a non-finite similarity.
class DegenerateFeatureError : public Error {
 public:
  using Error::Error;
};

/// Failure reported by an external model or service backend.
class BackendError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Dense H x W x C arrays
// ---------------------------------------------------------------------------

struct Shape {
  int height = 0;
  int width = 0;
  int channels = 0;

  [[nodiscard]] std::size_t size() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
           static_cast<std::size_t>(channels);
  }
  [[nodiscard]] std::string str() const;
  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Row-major H x W x C buffer of doubles. Used for perturbations, gradients
/// and any image-shaped intermediate that is not constrained to [0,1].
class Tensor3 {
 public:
  Tensor3() = default;
  explicit Tensor3(Shape shape, double fill = 0.0);
  Tensor3(Shape shape, std::vector<double> data);

  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] int height() const { return shape_.height; }
  [[nodiscard]] int width() const { return shape_.width; }
  [[nodiscard]] int channels() const { return shape_.channels; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }

  [[nodiscard]] std::span<double> values() { return data_; }
  [[nodiscard]] std::span<const double> values() const { return data_; }
  [[nodiscard]] const std::vector<double>& vector() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  [[nodiscard]] std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(shape_.width) +
            static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(shape_.channels) +
           static_cast<std::size_t>(c);
  }
  double& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  [[nodiscard]] double at(int y, int x, int c) const { return data_[index(y, x, c)]; }

  Tensor3& operator+=(const Tensor3& other);
  Tensor3& operator-=(const Tensor3& other);
  Tensor3& operator*=(double s);

  [[nodiscard]] double max_abs() const;
  [[nodiscard]] double l1_norm() const;
  [[nodiscard]] double l2_norm() const;
  [[nodiscard]] bool all_finite() const;

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  Shape shape_{};
  std::vector<double> data_;
};

Tensor3 operator+(Tensor3 a, const Tensor3& b);
Tensor3 operator-(Tensor3 a, const Tensor3& b);
Tensor3 operator*(double s, Tensor3 a);

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

inline constexpr int kImageChannels = 3;
inline constexpr int kMinImageSide = 8;

/// RGB image with every intensity in [0,1]. Immutable after construction.
class ImageTensor {
 public:
  /// Throws ValidationError when the shape or the value range is invalid.
  explicit ImageTensor(Tensor3 pixels);
  ImageTensor(Shape shape, std::vector<double> data);

  /// Uniform gray image; convenient in tests and examples.
  static ImageTensor filled(int height, int width, double value);

  [[nodiscard]] const Tensor3& pixels() const { return pixels_; }
  [[nodiscard]] const Shape& shape() const { return pixels_.shape(); }
  [[nodiscard]] int height() const { return pixels_.height(); }
  [[nodiscard]] int width() const { return pixels_.width(); }
  [[nodiscard]] int channels() const { return pixels_.channels(); }
  [[nodiscard]] std::span<const double> values() const { return pixels_.values(); }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  Tensor3 pixels_;
};

/// Additive perturbation bounded in l-infinity by epsilon.
class Perturbation {
 public:
  /// Tolerance absorbed by the "|delta| <= epsilon" check.
  static constexpr double kBudgetTolerance = 1e-9;

  Perturbation(Tensor3 values, double epsilon);

  static Perturbation zeros(Shape shape, double epsilon);

  [[nodiscard]] const Tensor3& values() const { return values_; }
  [[nodiscard]] double epsilon() const { return epsilon_; }
  [[nodiscard]] const Shape& shape() const { return values_.shape(); }

  friend bool operator==(const Perturbation&, const Perturbation&) = default;

 private:
  Tensor3 values_;
  double epsilon_;
};

enum class Paradigm : std::uint8_t {
  kCrossModalImage,
  kCrossModalText,
  kCrossModalFused,
  kMultimodal,
  kSelfSupervised,
};

std::string_view to_string(Paradigm p);
Paradigm paradigm_from_string(std::string_view name);

/// 0 for any cross-modal tag, 1 multimodal, 2 self-supervised.
int paradigm_rank(Paradigm p);

struct FeatureVector {
  std::vector<double> data;
  Paradigm paradigm = Paradigm::kCrossModalImage;

  FeatureVector() = default;
  /// Throws ValidationError on empty or non-finite data.
  FeatureVector(std::vector<double> values, Paradigm tag);

  [[nodiscard]] std::size_t dim() const { return data.size(); }
  [[nodiscard]] double norm() const;
};

/// Ordered concatenation of unit-norm paradigm blocks.
struct AggregatedFeature {
  std::vector<FeatureVector> blocks;

  [[nodiscard]] std::size_t num_blocks() const { return blocks.size(); }
  [[nodiscard]] std::vector<std::size_t> block_dims() const;
  [[nodiscard]] std::size_t total_dim() const;
  [[nodiscard]] std::vector<double> flat() const;
  [[nodiscard]] double norm() const;
};

/// Families of surrogate encoders an attack may use.
enum class ParadigmFamily : std::uint8_t { kCrossModal, kMultimodal, kSelfSupervised };

std::string_view to_string(ParadigmFamily f);
ParadigmFamily family_from_string(std::string_view name);

/// Normalisation applied to the raw gradient before momentum accumulation.
enum class GradientNorm : std::uint8_t { kL1, kL2 };

/// How the ratio exponent of the contrastive loss combines omega and tau.
enum class LossReading : std::uint8_t {
  /// exp(omega * sim_t / tau) in the numerator (default).
  kOmegaScalesPositive,
  /// exp((sim_t / omega) * tau) in the numerator.
  kLiteral,
};

struct AttackConfig {
  double epsilon = 16.0 / 255.0;
  double alpha = 1.0 / 255.0;
  int iterations = 300;
  double momentum_mu = 1.0;
  double lambda_fusion = 0.6;
  double tau = 0.2;
  double omega = 2.0;
  double crop_min_ratio = 0.5;
  double crop_max_ratio = 1.0;
  bool crop_enabled = true;
  int crops_per_step = 1;
  std::uint64_t seed = 0;
  std::vector<ParadigmFamily> enabled_paradigms = {
      ParadigmFamily::kCrossModal, ParadigmFamily::kMultimodal,
      ParadigmFamily::kSelfSupervised};
  bool text_fusion_enabled = true;
  GradientNorm gradient_norm = GradientNorm::kL1;
  LossReading loss_reading = LossReading::kOmegaScalesPositive;

  /// Throws ConfigError when an invariant does not hold.
  void validate() const;
  [[nodiscard]] bool paradigm_enabled(ParadigmFamily f) const;
};

inline constexpr double kSuccessThreshold = 0.5;

struct EvalRecord {
  std::string pair_id;
  double sim_adv_target = 0.0;
  double sim_adv_source = 0.0;
  bool targeted_success = false;
  bool untargeted_success = false;
  double final_loss = 0.0;
  std::vector<double> loss_trajectory;

  /// Derives both success flags from the judge similarities.
  static EvalRecord make(std::string pair_id, double sim_adv_target, double sim_adv_source,
                         double final_loss = 0.0, std::vector<double> loss_trajectory = {});
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Clamps every element into [0,1]. Non-finite input is rejected.
ImageTensor clamp_image(const Tensor3& values);
ImageTensor clamp_image(const ImageTensor& img);

/// Elementwise clip into [-epsilon, +epsilon].
Perturbation project_linf(const Tensor3& values, double epsilon);
Perturbation project_linf(const Perturbation& pert, double epsilon);

/// clamp(x_s + delta) as an image.
ImageTensor apply_perturbation(const ImageTensor& source, const Perturbation& delta);

}  // namespace mpcattack
