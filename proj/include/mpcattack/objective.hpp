#pragma once

#include <span>
#include <vector>

#include "mpcattack/core.hpp"
#include "mpcattack/encoders.hpp"
#include "mpcattack/transforms.hpp"

namespace mpcattack {

struct LossParams {
  double tau = 0.2;
  double omega = 2.0;
  LossReading reading = LossReading::kOmegaScalesPositive;

  static LossParams from(const AttackConfig& cfg) { return {cfg.tau, cfg.omega, cfg.loss_reading}; }
  /// Throws ConfigError unless tau > 0 and omega > 0.
  void validate() const;
};

struct LossBreakdown {
  double loss = 0.0;
  double sim_adv_target = 0.0;
  double sim_adv_source = 0.0;
};

double cosine_sim(std::span<const double> a, std::span<const double> b);
double cosine_sim(const AggregatedFeature& a, const AggregatedFeature& b);

/// Two-way contrastive matching loss on precomputed similarities:
///   -log( exp(P) / (exp(sim_t/tau) + exp(sim_s/tau)) )
/// where P = omega*sim_t/tau (default reading) or (sim_t/omega)*tau (literal).
/// Evaluated with max-subtracted log-sum-exp.
double contrastive_loss(double sim_target, double sim_source, const LossParams& p);

LossBreakdown contrastive_loss(const AggregatedFeature& z_adv, const AggregatedFeature& z_t,
                               const AggregatedFeature& z_s, const LossParams& p);

struct SimilarityPartials {
  double d_sim_target = 0.0;
  double d_sim_source = 0.0;
};

/// dL/dsim_t and dL/dsim_s.
SimilarityPartials loss_partials(double sim_target, double sim_source, const LossParams& p);

struct BlockGradient {
  LossBreakdown breakdown;
  /// dL/d(raw block k), one entry per input block, same order.
  std::vector<std::vector<double>> raw_block_grads;
};

/// Gradient of the loss with respect to the raw (pre-normalisation) feature
/// blocks of the adversarial input. `raw_blocks` must already be in block
/// order and match z_t / z_s block by block.
BlockGradient loss_gradient_wrt_raw_blocks(const std::vector<FeatureVector>& raw_blocks,
                                           const AggregatedFeature& z_t,
                                           const AggregatedFeature& z_s, const LossParams& p);

struct PerturbationGradient {
  LossBreakdown breakdown;
  /// dL/d(delta), image shaped.
  Tensor3 gradient;
};

/// dL/d(delta) at x_adv = clamp(x_s + delta) viewed through `crop`:
///   delta -> clamp -> crop/resize -> encoders -> normalise/concat -> loss.
/// The clamp contributes a zero derivative where x_s + delta lies outside [0,1].
PerturbationGradient loss_gradient_wrt_perturbation(
    const ImageTensor& x_s, const Perturbation& delta, const AggregatedFeature& z_t,
    const AggregatedFeature& z_s, std::span<const ParadigmEncoder* const> encoders,
    const LossParams& p, const CropWindow& crop);

/// Loss at a given perturbation (no gradient); the finite-difference oracle
/// in the tests is built on this.
LossBreakdown loss_at_perturbation(const ImageTensor& x_s, const Tensor3& delta,
                                   const AggregatedFeature& z_t, const AggregatedFeature& z_s,
                                   std::span<const ParadigmEncoder* const> encoders,
                                   const LossParams& p, const CropWindow& crop);

}  // namespace mpcattack
