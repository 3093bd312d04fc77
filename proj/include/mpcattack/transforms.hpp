#pragma once

#include <vector>

#include "mpcattack/core.hpp"
#include "mpcattack/random.hpp"

namespace mpcattack {

/// Axis-aligned window inside an image.
struct CropWindow {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;

  static CropWindow full(int height, int width) { return {0, 0, height, width}; }
  friend bool operator==(const CropWindow&, const CropWindow&) = default;
};

/// Bilinear resampling of a window of the input onto an output grid
/// (half-pixel centres, edge clamped; the align_corners=false convention).
/// The map is linear, so its VJP is the transposed scatter.
class BilinearResampler {
 public:
  BilinearResampler(Shape input, CropWindow window, int out_height, int out_width);
  BilinearResampler(Shape input, int out_height, int out_width);

  [[nodiscard]] const Shape& input_shape() const { return input_; }
  [[nodiscard]] const Shape& output_shape() const { return output_; }
  [[nodiscard]] bool is_identity() const { return identity_; }

  [[nodiscard]] Tensor3 apply(const Tensor3& x) const;
  [[nodiscard]] Tensor3 vjp(const Tensor3& cotangent) const;

 private:
  struct Taps {
    std::vector<int> lo;
    std::vector<int> hi;
    std::vector<double> frac;  // weight of `hi`
  };
  static Taps make_taps(int offset, int in_len, int out_len);

  Shape input_;
  Shape output_;
  Taps rows_;
  Taps cols_;
  bool identity_ = false;
};

Tensor3 resize_bilinear(const Tensor3& x, int out_height, int out_width);
ImageTensor resize_bilinear(const ImageTensor& img, int out_height, int out_width);

/// Random crop followed by a bilinear resize back to the original size.
class CropTransform {
 public:
  CropTransform(double min_ratio, double max_ratio);

  static CropTransform identity() { return {1.0, 1.0}; }

  [[nodiscard]] double min_ratio() const { return min_ratio_; }
  [[nodiscard]] double max_ratio() const { return max_ratio_; }

  /// Side ratio r ~ U[min,max]; window of round(r*H) x round(r*W) with a
  /// uniformly drawn top-left corner that keeps it inside the image.
  [[nodiscard]] CropWindow sample(Rng& rng, int height, int width) const;

 private:
  double min_ratio_;
  double max_ratio_;
};

/// Resampler taking `window` of an image of `shape` back to full size.
BilinearResampler crop_resampler(const Shape& shape, const CropWindow& window);

}  // namespace mpcattack
