#include "mpcattack/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mpcattack {

std::string Shape::str() const {
  std::ostringstream os;
  os << height << "x" << width << "x" << channels;
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor3
// ---------------------------------------------------------------------------

Tensor3::Tensor3(Shape shape, double fill) : shape_(shape), data_(shape.size(), fill) {
  if (shape.height < 0 || shape.width < 0 || shape.channels < 0) {
    throw ValidationError("negative tensor dimension: " + shape.str());
  }
}

Tensor3::Tensor3(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.size()) {
    throw ValidationError("tensor data has " + std::to_string(data_.size()) +
                          " elements, shape " + shape_.str() + " needs " +
                          std::to_string(shape_.size()));
  }
}

Tensor3& Tensor3::operator+=(const Tensor3& other) {
  if (other.shape_ != shape_) {
    throw ValidationError("shape mismatch: " + shape_.str() + " vs " + other.shape_.str());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor3& Tensor3::operator-=(const Tensor3& other) {
  if (other.shape_ != shape_) {
    throw ValidationError("shape mismatch: " + shape_.str() + " vs " + other.shape_.str());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor3& Tensor3::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

double Tensor3::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

double Tensor3::l1_norm() const {
  double s = 0.0;
  for (double v : data_) s += std::abs(v);
  return s;
}

double Tensor3::l2_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return std::sqrt(s);
}

bool Tensor3::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor3 operator+(Tensor3 a, const Tensor3& b) { return a += b; }
Tensor3 operator-(Tensor3 a, const Tensor3& b) { return a -= b; }
Tensor3 operator*(double s, Tensor3 a) { return a *= s; }

// ---------------------------------------------------------------------------
// ImageTensor / Perturbation
// ---------------------------------------------------------------------------

ImageTensor::ImageTensor(Tensor3 pixels) : pixels_(std::move(pixels)) {
  const Shape& s = pixels_.shape();
  if (s.channels != kImageChannels) {
    throw ValidationError("image must have 3 channels, got " + s.str());
  }
  if (s.height < kMinImageSide || s.width < kMinImageSide) {
    throw ValidationError("image must be at least 8x8, got " + s.str());
  }
  for (double v : pixels_.values()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ValidationError("image intensity outside [0,1]: " + std::to_string(v));
    }
  }
}

ImageTensor::ImageTensor(Shape shape, std::vector<double> data)
    : ImageTensor(Tensor3(shape, std::move(data))) {}

ImageTensor ImageTensor::filled(int height, int width, double value) {
  return ImageTensor(Tensor3({height, width, kImageChannels}, value));
}

Perturbation::Perturbation(Tensor3 values, double epsilon)
    : values_(std::move(values)), epsilon_(epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw ValidationError("perturbation budget must be positive and finite");
  }
  if (!values_.all_finite()) throw ValidationError("perturbation has non-finite entries");
  if (values_.max_abs() > epsilon + kBudgetTolerance) {
    throw ValidationError("perturbation exceeds l-inf budget: " +
                          std::to_string(values_.max_abs()) + " > " + std::to_string(epsilon));
  }
}

Perturbation Perturbation::zeros(Shape shape, double epsilon) {
  return Perturbation(Tensor3(shape, 0.0), epsilon);
}

// ---------------------------------------------------------------------------
// Paradigm tags
// ---------------------------------------------------------------------------

std::string_view to_string(Paradigm p) {
  switch (p) {
    case Paradigm::kCrossModalImage: return "cross_modal_image";
    case Paradigm::kCrossModalText: return "cross_modal_text";
    case Paradigm::kCrossModalFused: return "cross_modal_fused";
    case Paradigm::kMultimodal: return "multimodal";
    case Paradigm::kSelfSupervised: return "self_supervised";
  }
  return "unknown";
}

Paradigm paradigm_from_string(std::string_view name) {
  for (Paradigm p : {Paradigm::kCrossModalImage, Paradigm::kCrossModalText,
                     Paradigm::kCrossModalFused, Paradigm::kMultimodal,
                     Paradigm::kSelfSupervised}) {
    if (to_string(p) == name) return p;
  }
  throw ValidationError("unknown paradigm tag '" + std::string(name) + "'");
}

int paradigm_rank(Paradigm p) {
  switch (p) {
    case Paradigm::kMultimodal: return 1;
    case Paradigm::kSelfSupervised: return 2;
    default: return 0;
  }
}

std::string_view to_string(ParadigmFamily f) {
  switch (f) {
    case ParadigmFamily::kCrossModal: return "cross_modal";
    case ParadigmFamily::kMultimodal: return "multimodal";
    case ParadigmFamily::kSelfSupervised: return "self_supervised";
  }
  return "unknown";
}

ParadigmFamily family_from_string(std::string_view name) {
  for (ParadigmFamily f : {ParadigmFamily::kCrossModal, ParadigmFamily::kMultimodal,
                           ParadigmFamily::kSelfSupervised}) {
    if (to_string(f) == name) return f;
  }
  throw ConfigError("unknown paradigm '" + std::string(name) +
                    "' (expected cross_modal, multimodal or self_supervised)");
}

// ---------------------------------------------------------------------------
// Features
// ---------------------------------------------------------------------------

FeatureVector::FeatureVector(std::vector<double> values, Paradigm tag)
    : data(std::move(values)), paradigm(tag) {
  if (data.empty()) throw ValidationError("feature vector must have at least one entry");
  for (double v : data) {
    if (!std::isfinite(v)) {
      throw ValidationError("non-finite entry in " + std::string(to_string(tag)) + " feature");
    }
  }
}

double FeatureVector::norm() const {
  double s = 0.0;
  for (double v : data) s += v * v;
  return std::sqrt(s);
}

std::vector<std::size_t> AggregatedFeature::block_dims() const {
  std::vector<std::size_t> dims;
  dims.reserve(blocks.size());
  for (const auto& b : blocks) dims.push_back(b.dim());
  return dims;
}

std::size_t AggregatedFeature::total_dim() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.dim();
  return n;
}

std::vector<double> AggregatedFeature::flat() const {
  std::vector<double> out;
  out.reserve(total_dim());
  for (const auto& b : blocks) out.insert(out.end(), b.data.begin(), b.data.end());
  return out;
}

double AggregatedFeature::norm() const {
  double s = 0.0;
  for (const auto& b : blocks)
    for (double v : b.data) s += v * v;
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// Config / records
// ---------------------------------------------------------------------------

void AttackConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (!(epsilon > 0.0)) fail("epsilon must be > 0");
  if (!(alpha >= 0.0 && alpha <= epsilon)) fail("alpha must satisfy 0 <= alpha <= epsilon");
  if (iterations < 0) fail("iterations must be >= 0");
  if (!std::isfinite(momentum_mu) || momentum_mu < 0.0) fail("momentum mu must be >= 0");
  if (!(lambda_fusion >= 0.0 && lambda_fusion <= 1.0)) fail("lambda must lie in [0,1]");
  if (!(tau > 0.0)) fail("tau must be > 0");
  if (!(omega > 0.0)) fail("omega must be > 0");
  if (!(crop_min_ratio > 0.0 && crop_min_ratio <= 1.0)) fail("crop_min_ratio must lie in (0,1]");
  if (!(crop_max_ratio > 0.0 && crop_max_ratio <= 1.0)) fail("crop_max_ratio must lie in (0,1]");
  if (crop_min_ratio > crop_max_ratio) fail("crop_min_ratio must not exceed crop_max_ratio");
  if (crops_per_step < 1) fail("crops_per_step must be >= 1");
  if (enabled_paradigms.empty()) fail("at least one paradigm must be enabled");
}

bool AttackConfig::paradigm_enabled(ParadigmFamily f) const {
  return std::find(enabled_paradigms.begin(), enabled_paradigms.end(), f) !=
         enabled_paradigms.end();
}

EvalRecord EvalRecord::make(std::string pair_id, double sim_adv_target, double sim_adv_source,
                            double final_loss, std::vector<double> loss_trajectory) {
  for (double s : {sim_adv_target, sim_adv_source}) {
    if (!(s >= 0.0 && s <= 1.0)) {
      throw ValidationError("judge similarity outside [0,1]: " + std::to_string(s));
    }
  }
  EvalRecord r;
  r.pair_id = std::move(pair_id);
  r.sim_adv_target = sim_adv_target;
  r.sim_adv_source = sim_adv_source;
  r.targeted_success = sim_adv_target > kSuccessThreshold;
  r.untargeted_success = sim_adv_source < kSuccessThreshold;
  r.final_loss = final_loss;
  r.loss_trajectory = std::move(loss_trajectory);
  return r;
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

ImageTensor clamp_image(const Tensor3& values) {
  if (!values.all_finite()) throw ValidationError("cannot clamp image with non-finite entries");
  Tensor3 out = values;
  for (double& v : out.values()) v = std::clamp(v, 0.0, 1.0);
  return ImageTensor(std::move(out));
}

ImageTensor clamp_image(const ImageTensor& img) { return clamp_image(img.pixels()); }

Perturbation project_linf(const Tensor3& values, double epsilon) {
  if (!(epsilon > 0.0)) throw ValidationError("projection budget must be > 0");
  Tensor3 out = values;
  for (double& v : out.values()) v = std::clamp(v, -epsilon, epsilon);
  return Perturbation(std::move(out), epsilon);
}

Perturbation project_linf(const Perturbation& pert, double epsilon) {
  return project_linf(pert.values(), epsilon);
}

ImageTensor apply_perturbation(const ImageTensor& source, const Perturbation& delta) {
  if (source.shape() != delta.shape()) {
    throw ValidationError("perturbation shape " + delta.shape().str() +
                          " does not match image " + source.shape().str());
  }
  return clamp_image(source.pixels() + delta.values());
}

}  // namespace mpcattack
