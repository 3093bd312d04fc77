#include "mpcattack/attack.hpp"

#include <cmath>

#include <spdlog/spdlog.h>

namespace mpcattack {

AttackState init_state(const ImageTensor& x_s, const AttackConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  Tensor3 d0(x_s.shape());
  for (double& v : d0.values()) v = uniform(rng, -cfg.epsilon, cfg.epsilon);
  return AttackState{project_linf(d0, cfg.epsilon), Tensor3(x_s.shape()), 0, {}, {}, rng};
}

AttackState attack_step(AttackState state, const ImageTensor& x_s, const AggregatedFeature& z_t,
                        const AggregatedFeature& z_s, const EncoderSuite& suite,
                        const AttackConfig& cfg, const StepObserver& observer) {
  if (state.iteration >= cfg.iterations) {
    throw ValidationError("attack already ran its " + std::to_string(cfg.iterations) + " steps");
  }
  const std::vector<const ParadigmEncoder*> encoders = suite.active(cfg);
  const LossParams params = LossParams::from(cfg);
  const CropTransform crop(cfg.crop_min_ratio, cfg.crop_max_ratio);

  Tensor3 grad(x_s.shape());
  LossBreakdown mean{};
  std::vector<CropWindow> windows;
  for (int c = 0; c < cfg.crops_per_step; ++c) {
    const CropWindow w = cfg.crop_enabled ? crop.sample(state.rng, x_s.height(), x_s.width())
                                          : CropWindow::full(x_s.height(), x_s.width());
    windows.push_back(w);
    PerturbationGradient pg =
        loss_gradient_wrt_perturbation(x_s, state.delta, z_t, z_s, encoders, params, w);
    grad += pg.gradient;
    mean.loss += pg.breakdown.loss;
    mean.sim_adv_target += pg.breakdown.sim_adv_target;
    mean.sim_adv_source += pg.breakdown.sim_adv_source;
  }
  const double inv = 1.0 / cfg.crops_per_step;
  mean.loss *= inv;
  mean.sim_adv_target *= inv;
  mean.sim_adv_source *= inv;

  // Descent direction, normalised.
  Tensor3 direction = -inv * std::move(grad);
  const double norm =
      cfg.gradient_norm == GradientNorm::kL1 ? direction.l1_norm() : direction.l2_norm();
  const bool stagnated = !(norm > 0.0);
  if (stagnated) {
    spdlog::warn("attack step {}: zero gradient, momentum not updated by this step",
                 state.iteration);
    direction *= 0.0;
  } else {
    direction *= 1.0 / norm;
  }

  state.momentum *= cfg.momentum_mu;
  state.momentum += direction;
  if (!state.momentum.all_finite()) throw DegenerateFeatureError("non-finite momentum");

  Tensor3 stepped = state.delta.values();
  const auto g = state.momentum.values();
  auto d = stepped.values();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double s = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
    d[i] += cfg.alpha * s;
  }
  state.delta = project_linf(stepped, cfg.epsilon);
  state.loss_trajectory.push_back(mean.loss);
  state.sim_target_trajectory.push_back(mean.sim_adv_target);

  if (observer) {
    observer(StepRecord{state.iteration, mean, windows, &direction, &state.momentum, &state.delta,
                        stagnated});
  }
  ++state.iteration;
  return state;
}

LossBreakdown evaluate_perturbation(const ImageTensor& x_s, const Perturbation& delta,
                                    const AggregatedFeature& z_t, const AggregatedFeature& z_s,
                                    const EncoderSuite& suite, const AttackConfig& cfg) {
  const auto encoders = suite.active(cfg);
  return loss_at_perturbation(x_s, delta.values(), z_t, z_s, encoders, LossParams::from(cfg),
                              CropWindow::full(x_s.height(), x_s.width()));
}

AttackResult run_attack(const ImageTensor& x_s, const ImageTensor& x_t, const EncoderSuite& suite,
                        const AttackConfig& cfg, const StepObserver& observer) {
  cfg.validate();
  suite.validate(cfg);
  AggregatedFeature z_t = aggregate_reference(x_t, suite, cfg);
  AggregatedFeature z_s = aggregate_reference(x_s, suite, cfg);

  AttackState state = init_state(x_s, cfg);
  const LossBreakdown initial = evaluate_perturbation(x_s, state.delta, z_t, z_s, suite, cfg);
  while (state.iteration < cfg.iterations) {
    state = attack_step(std::move(state), x_s, z_t, z_s, suite, cfg, observer);
  }
  const LossBreakdown final = evaluate_perturbation(x_s, state.delta, z_t, z_s, suite, cfg);
  Perturbation delta = state.delta;
  ImageTensor x_adv = apply_perturbation(x_s, delta);
  return AttackResult{std::move(delta), std::move(x_adv), std::move(state),
                      std::move(z_t),   std::move(z_s),   initial,
                      final};
}

}  // namespace mpcattack
