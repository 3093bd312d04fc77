#include "mpcattack/objective.hpp"

#include <algorithm>
#include <cmath>

#include "mpcattack/aggregation.hpp"

namespace mpcattack {

void LossParams::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("tau must be > 0");
  if (!(omega > 0.0) || !std::isfinite(omega)) throw ConfigError("omega must be > 0");
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ValidationError("cosine similarity of vectors with dimensions " +
                          std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (!(na > 0.0) || !(nb > 0.0)) throw DegenerateFeatureError("cosine similarity of a zero vector");
  const double s = dot / (std::sqrt(na) * std::sqrt(nb));
  if (!std::isfinite(s)) throw DegenerateFeatureError("non-finite cosine similarity");
  return s;
}

double cosine_sim(const AggregatedFeature& a, const AggregatedFeature& b) {
  return cosine_sim(a.flat(), b.flat());
}

namespace {

struct LossTerms {
  double loss;
  double p_target;  // softmax weight of the target term in the denominator
  double p_source;
  double d_positive;  // d(numerator exponent)/d(sim_t)
};

LossTerms evaluate_terms(double sim_t, double sim_s, const LossParams& p) {
  p.validate();
  if (!std::isfinite(sim_t) || !std::isfinite(sim_s)) {
    throw DegenerateFeatureError("non-finite similarity in contrastive loss");
  }
  const double a = sim_t / p.tau;
  const double b = sim_s / p.tau;
  double positive = 0.0, d_positive = 0.0;
  switch (p.reading) {
    case LossReading::kOmegaScalesPositive:
      positive = p.omega * sim_t / p.tau;
      d_positive = p.omega / p.tau;
      break;
    case LossReading::kLiteral:
      positive = (sim_t / p.omega) * p.tau;
      d_positive = p.tau / p.omega;
      break;
  }
  const double m = std::max(a, b);
  const double lse = m + std::log1p(std::exp(std::min(a, b) - m));
  return {lse - positive, std::exp(a - lse), std::exp(b - lse), d_positive};
}

}  // namespace

double contrastive_loss(double sim_target, double sim_source, const LossParams& p) {
  return evaluate_terms(sim_target, sim_source, p).loss;
}

LossBreakdown contrastive_loss(const AggregatedFeature& z_adv, const AggregatedFeature& z_t,
                               const AggregatedFeature& z_s, const LossParams& p) {
  const double st = cosine_sim(z_adv, z_t);
  const double ss = cosine_sim(z_adv, z_s);
  return {contrastive_loss(st, ss, p), st, ss};
}

SimilarityPartials loss_partials(double sim_target, double sim_source, const LossParams& p) {
  const LossTerms t = evaluate_terms(sim_target, sim_source, p);
  return {t.p_target / p.tau - t.d_positive, t.p_source / p.tau};
}

BlockGradient loss_gradient_wrt_raw_blocks(const std::vector<FeatureVector>& raw_blocks,
                                           const AggregatedFeature& z_t,
                                           const AggregatedFeature& z_s, const LossParams& p) {
  if (raw_blocks.size() != z_t.num_blocks() || raw_blocks.size() != z_s.num_blocks()) {
    throw ValidationError("adversarial features have " + std::to_string(raw_blocks.size()) +
                          " blocks, references have " + std::to_string(z_t.num_blocks()));
  }
  for (std::size_t k = 0; k < raw_blocks.size(); ++k) {
    if (k > 0 && paradigm_rank(raw_blocks[k].paradigm) < paradigm_rank(raw_blocks[k - 1].paradigm)) {
      throw ValidationError("adversarial feature blocks are not in paradigm order");
    }
    if (raw_blocks[k].dim() != z_t.blocks[k].dim() || raw_blocks[k].dim() != z_s.blocks[k].dim()) {
      throw ValidationError("block " + std::to_string(k) + " dimension mismatch");
    }
  }
  const AggregatedFeature z_adv = aggregate(raw_blocks);
  const std::vector<double> a = z_adv.flat();
  const std::vector<double> t = z_t.flat();
  const std::vector<double> s = z_s.flat();

  const double sim_t = cosine_sim(a, t);
  const double sim_s = cosine_sim(a, s);
  BlockGradient out;
  out.breakdown = {contrastive_loss(sim_t, sim_s, p), sim_t, sim_s};
  const SimilarityPartials d = loss_partials(sim_t, sim_s, p);

  // d cos(a,b)/da = b/(|a||b|) - cos(a,b) * a/|a|^2
  auto sq = [](const std::vector<double>& v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    return n;
  };
  const double na2 = sq(a);
  const double na = std::sqrt(na2), nt = std::sqrt(sq(t)), ns = std::sqrt(sq(s));
  std::vector<double> g(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    g[i] = d.d_sim_target * (t[i] / (na * nt) - sim_t * a[i] / na2) +
           d.d_sim_source * (s[i] / (na * ns) - sim_s * a[i] / na2);
  }

  // Through z = r/|r|: dL/dr = (I - z z^T) dL/dz / |r|.
  std::size_t offset = 0;
  out.raw_block_grads.reserve(raw_blocks.size());
  for (std::size_t k = 0; k < raw_blocks.size(); ++k) {
    const std::vector<double>& z = z_adv.blocks[k].data;
    const double r_norm = raw_blocks[k].norm();
    double proj = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) proj += g[offset + i] * z[i];
    std::vector<double> gr(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) gr[i] = (g[offset + i] - proj * z[i]) / r_norm;
    out.raw_block_grads.push_back(std::move(gr));
    offset += z.size();
  }
  return out;
}

namespace {

struct ClampedInput {
  Tensor3 x;
  std::vector<unsigned char> inside;  // 1 where x_s + delta is within [0,1]
};

ClampedInput clamp_sum(const ImageTensor& x_s, const Tensor3& delta) {
  if (x_s.shape() != delta.shape()) {
    throw ValidationError("perturbation shape " + delta.shape().str() + " does not match image " +
                          x_s.shape().str());
  }
  ClampedInput out{x_s.pixels() + delta, std::vector<unsigned char>(delta.size(), 1)};
  for (std::size_t i = 0; i < out.x.size(); ++i) {
    const double v = out.x[i];
    if (!std::isfinite(v)) throw ValidationError("non-finite adversarial input");
    if (v < 0.0 || v > 1.0) {
      out.inside[i] = 0;
      out.x[i] = std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

std::vector<FeatureVector> encode_all(const Tensor3& x,
                                      std::span<const ParadigmEncoder* const> encoders) {
  if (encoders.empty()) throw ConfigError("no surrogate encoders are active");
  std::vector<FeatureVector> blocks;
  blocks.reserve(encoders.size());
  for (const ParadigmEncoder* e : encoders) blocks.push_back(encode(*e, x));
  return blocks;
}

}  // namespace

LossBreakdown loss_at_perturbation(const ImageTensor& x_s, const Tensor3& delta,
                                   const AggregatedFeature& z_t, const AggregatedFeature& z_s,
                                   std::span<const ParadigmEncoder* const> encoders,
                                   const LossParams& p, const CropWindow& crop) {
  const ClampedInput in = clamp_sum(x_s, delta);
  const Tensor3 view = crop_resampler(in.x.shape(), crop).apply(in.x);
  return contrastive_loss(aggregate(encode_all(view, encoders)), z_t, z_s, p);
}

PerturbationGradient loss_gradient_wrt_perturbation(
    const ImageTensor& x_s, const Perturbation& delta, const AggregatedFeature& z_t,
    const AggregatedFeature& z_s, std::span<const ParadigmEncoder* const> encoders,
    const LossParams& p, const CropWindow& crop) {
  const ClampedInput in = clamp_sum(x_s, delta.values());
  const BilinearResampler resampler = crop_resampler(in.x.shape(), crop);
  const Tensor3 view = resampler.apply(in.x);

  const BlockGradient bg = loss_gradient_wrt_raw_blocks(encode_all(view, encoders), z_t, z_s, p);
  Tensor3 g_view(view.shape());
  for (std::size_t k = 0; k < encoders.size(); ++k) {
    g_view += vjp(*encoders[k], view, bg.raw_block_grads[k]);
  }
  Tensor3 g = resampler.vjp(g_view);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!in.inside[i]) g[i] = 0.0;
  }
  return {bg.breakdown, std::move(g)};
}

}  // namespace mpcattack
