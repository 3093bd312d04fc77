#include "mpcattack/transforms.hpp"

#include <algorithm>
#include <cmath>

namespace mpcattack {

BilinearResampler::Taps BilinearResampler::make_taps(int offset, int in_len, int out_len) {
  Taps t;
  t.lo.resize(out_len);
  t.hi.resize(out_len);
  t.frac.resize(out_len);
  const double scale = static_cast<double>(in_len) / static_cast<double>(out_len);
  for (int o = 0; o < out_len; ++o) {
    const double src = std::max(scale * (o + 0.5) - 0.5, 0.0);
    int lo = static_cast<int>(src);
    double frac = src - lo;
    if (lo >= in_len - 1) {
      lo = in_len - 1;
      frac = 0.0;
    }
    const int hi = lo < in_len - 1 ? lo + 1 : lo;
    t.lo[o] = offset + lo;
    t.hi[o] = offset + hi;
    t.frac[o] = frac;
  }
  return t;
}

BilinearResampler::BilinearResampler(Shape input, CropWindow window, int out_height,
                                     int out_width)
    : input_(input), output_{out_height, out_width, input.channels} {
  if (window.height < 1 || window.width < 1 || window.top < 0 || window.left < 0 ||
      window.top + window.height > input.height || window.left + window.width > input.width) {
    throw ValidationError("crop window lies outside the " + input.str() + " image");
  }
  if (out_height < 1 || out_width < 1) throw ValidationError("resize target must be positive");
  rows_ = make_taps(window.top, window.height, out_height);
  cols_ = make_taps(window.left, window.width, out_width);
  identity_ = window == CropWindow::full(input.height, input.width) &&
              out_height == input.height && out_width == input.width;
}

BilinearResampler::BilinearResampler(Shape input, int out_height, int out_width)
    : BilinearResampler(input, CropWindow::full(input.height, input.width), out_height,
                        out_width) {}

Tensor3 BilinearResampler::apply(const Tensor3& x) const {
  if (x.shape() != input_) {
    throw ValidationError("resampler expects " + input_.str() + ", got " + x.shape().str());
  }
  if (identity_) return x;
  Tensor3 out(output_);
  const int channels = output_.channels;
  for (int oy = 0; oy < output_.height; ++oy) {
    const int y0 = rows_.lo[oy], y1 = rows_.hi[oy];
    const double wy = rows_.frac[oy];
    for (int ox = 0; ox < output_.width; ++ox) {
      const int x0 = cols_.lo[ox], x1 = cols_.hi[ox];
      const double wx = cols_.frac[ox];
      const double w00 = (1 - wy) * (1 - wx), w01 = (1 - wy) * wx;
      const double w10 = wy * (1 - wx), w11 = wy * wx;
      for (int c = 0; c < channels; ++c) {
        out.at(oy, ox, c) = w00 * x.at(y0, x0, c) + w01 * x.at(y0, x1, c) +
                            w10 * x.at(y1, x0, c) + w11 * x.at(y1, x1, c);
      }
    }
  }
  return out;
}

Tensor3 BilinearResampler::vjp(const Tensor3& cotangent) const {
  if (cotangent.shape() != output_) {
    throw ValidationError("resampler cotangent expects " + output_.str() + ", got " +
                          cotangent.shape().str());
  }
  if (identity_) return cotangent;
  Tensor3 grad(input_);
  const int channels = output_.channels;
  for (int oy = 0; oy < output_.height; ++oy) {
    const int y0 = rows_.lo[oy], y1 = rows_.hi[oy];
    const double wy = rows_.frac[oy];
    for (int ox = 0; ox < output_.width; ++ox) {
      const int x0 = cols_.lo[ox], x1 = cols_.hi[ox];
      const double wx = cols_.frac[ox];
      const double w00 = (1 - wy) * (1 - wx), w01 = (1 - wy) * wx;
      const double w10 = wy * (1 - wx), w11 = wy * wx;
      for (int c = 0; c < channels; ++c) {
        const double u = cotangent.at(oy, ox, c);
        grad.at(y0, x0, c) += w00 * u;
        grad.at(y0, x1, c) += w01 * u;
        grad.at(y1, x0, c) += w10 * u;
        grad.at(y1, x1, c) += w11 * u;
      }
    }
  }
  return grad;
}

Tensor3 resize_bilinear(const Tensor3& x, int out_height, int out_width) {
  return BilinearResampler(x.shape(), out_height, out_width).apply(x);
}

ImageTensor resize_bilinear(const ImageTensor& img, int out_height, int out_width) {
  // Convex combinations of [0,1] values stay in [0,1] up to rounding.
  return clamp_image(resize_bilinear(img.pixels(), out_height, out_width));
}

CropTransform::CropTransform(double min_ratio, double max_ratio)
    : min_ratio_(min_ratio), max_ratio_(max_ratio) {
  if (!(min_ratio > 0.0 && max_ratio <= 1.0 && min_ratio <= max_ratio)) {
    throw ConfigError("crop ratios must satisfy 0 < min <= max <= 1");
  }
}

CropWindow CropTransform::sample(Rng& rng, int height, int width) const {
  const double r = uniform(rng, min_ratio_, max_ratio_);
  const int ch = std::clamp(static_cast<int>(std::lround(r * height)), 1, height);
  const int cw = std::clamp(static_cast<int>(std::lround(r * width)), 1, width);
  const int top = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(height - ch + 1)));
  const int left = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(width - cw + 1)));
  return {top, left, ch, cw};
}

BilinearResampler crop_resampler(const Shape& shape, const CropWindow& window) {
  return BilinearResampler(shape, window, shape.height, shape.width);
}

}  // namespace mpcattack
