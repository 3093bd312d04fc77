#pragma once

#include <functional>
#include <vector>

#include "mpcattack/aggregation.hpp"
#include "mpcattack/core.hpp"
#include "mpcattack/encoders.hpp"
#include "mpcattack/objective.hpp"
#include "mpcattack/random.hpp"
#include "mpcattack/transforms.hpp"

namespace mpcattack {

struct AttackState {
  Perturbation delta;
  Tensor3 momentum;
  int iteration = 0;
  /// Loss on the (cropped) view used for each step's gradient.
  std::vector<double> loss_trajectory;
  std::vector<double> sim_target_trajectory;
  Rng rng;
};

/// Snapshot handed to a StepObserver after each iteration.
struct StepRecord {
  int iteration = 0;  // n of the step just completed
  LossBreakdown breakdown;
  std::vector<CropWindow> crops;
  const Tensor3* normalized_gradient = nullptr;  // d / ||d||
  const Tensor3* momentum = nullptr;             // g^{n+1}
  const Perturbation* delta = nullptr;           // delta^{n+1}
  bool stagnated = false;
};

using StepObserver = std::function<void(const StepRecord&)>;

/// delta^0 ~ U[-eps, eps] elementwise from cfg.seed, zero momentum.
AttackState init_state(const ImageTensor& x_s, const AttackConfig& cfg);

/// One momentum sign-gradient iteration. The momentum accumulates the
/// normalised descent direction -dL/d(delta), so delta + alpha*sign(g)
/// lowers the loss.
AttackState attack_step(AttackState state, const ImageTensor& x_s, const AggregatedFeature& z_t,
                        const AggregatedFeature& z_s, const EncoderSuite& suite,
                        const AttackConfig& cfg, const StepObserver& observer = {});

struct AttackResult {
  Perturbation delta;
  ImageTensor x_adv;
  AttackState state;
  AggregatedFeature z_target;
  AggregatedFeature z_source;
  /// Uncropped loss at delta^0 and at the returned delta.
  LossBreakdown initial;
  LossBreakdown final;
};

/// Full attack: reference features are computed once, then cfg.iterations
/// steps are run from init_state.
AttackResult run_attack(const ImageTensor& x_s, const ImageTensor& x_t, const EncoderSuite& suite,
                        const AttackConfig& cfg, const StepObserver& observer = {});

/// Uncropped loss of x_s + delta.
LossBreakdown evaluate_perturbation(const ImageTensor& x_s, const Perturbation& delta,
                                    const AggregatedFeature& z_t, const AggregatedFeature& z_s,
                                    const EncoderSuite& suite, const AttackConfig& cfg);

}  // namespace mpcattack
