// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>

#include <spdlog/spdlog.h>

#include "../support/batch_fixture.hpp"
#include "../support/fixtures.hpp"
#include "../support/toy_instance.hpp"
#include "mpcattack/attack.hpp"
#include "mpcattack/evaluation.hpp"
#include "mpcattack/harness.hpp"

using namespace mpcattack;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

void require(Outcome& o, bool cond, const std::string& what) {
  if (!cond && o.pass) o.detail = what;
  o.pass = o.pass && cond;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// 1. Gradient correctness ----------------------------------------------------

Outcome gradient_correctness() {
  Outcome o;
  double worst = 0.0;
  int checked = 0;
  for (fixtures::SuiteKind kind : {fixtures::SuiteKind::kLinear, fixtures::SuiteKind::kConv}) {
    for (bool crop : {false, true}) {
      for (std::uint64_t s = 0; s < 50; ++s) {
        const int size = 8;
        const EncoderSuite suite = fixtures::toy_suite(kind, size, 1000 + s);
        AttackConfig cfg;
        cfg.seed = s;
        const ImageTensor x_s = fixtures::random_image(2000 + s, size, size, 0.1, 0.9);
        const ImageTensor x_t = fixtures::random_image(3000 + s, size, size);
        const auto z_t = aggregate_reference(x_t, suite, cfg);
        const auto z_s = aggregate_reference(x_s, suite, cfg);
        Rng rng(s);
        const Perturbation delta = project_linf(
            fixtures::random_tensor(4000 + s, x_s.shape(), -cfg.epsilon, cfg.epsilon), cfg.epsilon);
        const CropWindow win = crop ? CropTransform(0.5, 1.0).sample(rng, size, size)
                                    : CropWindow::full(size, size);
        const auto g = fixtures::check_gradient(x_s, delta, z_t, z_s, suite.active(cfg),
                                                LossParams::from(cfg), win);
        worst = std::max(worst, g.rel_error);
        ++checked;
      }
    }
  }
  require(o, worst <= 1e-4, fmt("worst relative error %.3g", worst));
  if (o.pass) o.detail = fmt("%.0f instances, worst relative error %.3g", checked, worst);
  return o;
}

// 2. Budget invariant --------------------------------------------------------

Outcome budget_invariant() {
  Outcome o;
  const int size = 32;
  const EncoderSuite suite = fixtures::toy_suite(fixtures::SuiteKind::kMixed, size, 7);
  AttackConfig cfg;
  cfg.seed = 7;
  const ImageTensor x_s = fixtures::smooth_image(7, size, size);
  const ImageTensor x_t = fixtures::smooth_image(8, size, size);
  double worst = 0.0;
  int steps = 0;
  const AttackResult r = run_attack(x_s, x_t, suite, cfg, [&](const StepRecord& rec) {
    worst = std::max(worst, rec.delta->values().max_abs());
    ++steps;
  });
  require(o, steps == 300, "expected 300 iterations");
  require(o, worst <= cfg.epsilon + 1e-9, fmt("max |delta| = %.17g", worst));
  const fs::path dir = fixtures::temp_dir("acceptance_budget");
  const QuantizationReport q = write_adversarial_image(r.x_adv, x_s, dir / "adv.png");
  const auto side = nlohmann::json::parse(fixtures::slurp(dir / "adv.png.json"));
  const double reported = side.at("max_quantized_diff").get<double>();
  require(o, reported <= 17.0 / 255.0 + 1e-12, fmt("sidecar reports %.6g", reported));
  require(o, q.max_quantized_levels <= 17, "quantized levels above 17");
  if (o.pass) o.detail = fmt("max |delta| * 255 = %.6f, sidecar levels %.0f", worst * 255.0, q.max_quantized_levels);
  return o;
}

// 3. Loss anchors ------------------------------------------------------------

Outcome loss_anchors() {
  Outcome o;
  double worst = 0.0;
  for (double tau : {0.05, 0.1, 0.2, 0.5, 1.0}) {
    for (double omega : {0.5, 1.0, 2.0, 3.0, 5.0}) {
      worst = std::max(worst, std::abs(contrastive_loss(0.0, 0.0, {tau, omega}) - std::log(2.0)));
    }
  }
  require(o, worst <= 1e-12, fmt("zero-similarity deviation %.3g", worst));
  // 50-digit reference computed independently with mpmath.
  const double oracle = -4.9999546011007828577722734763303969682547938703231;
  const double got = contrastive_loss(1.0, -1.0, {0.2, 2.0});
  require(o, std::abs(got - oracle) <= 1e-10, fmt("oracle mismatch %.17g", got));
  if (o.pass) o.detail = fmt("grid deviation %.3g, oracle deviation %.3g", worst, std::abs(got - oracle));
  return o;
}

// 4. Aggregation anchors -----------------------------------------------------

Outcome aggregation_anchors() {
  Outcome o;
  AttackConfig cfg;
  cfg.text_fusion_enabled = false;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const int size = 8;
    EncoderSuite suite;
    const auto cm = std::make_shared<ToyLinearEncoder>(s + 1, ImageSize{size, size}, 12, Paradigm::kCrossModalImage);
    const auto mm = std::make_shared<ToyConvEncoder>(s + 2, ImageSize{size, size}, 9, Paradigm::kMultimodal);
    const auto ss = std::make_shared<ToyLinearEncoder>(s + 3, ImageSize{size, size}, 7, Paradigm::kSelfSupervised);
    suite.cross_modal.push_back({cm, nullptr});
    suite.multimodal.push_back(mm);
    suite.self_supervised.push_back(ss);
    const ImageTensor x = fixtures::random_image(s, size, size);
    const AggregatedFeature z = aggregate_reference(x, suite, cfg);
    for (const auto& b : z.blocks) require(o, std::abs(b.norm() - 1.0) <= 1e-6, "block norm off unit");
    require(o, std::abs(z.norm() - std::sqrt(3.0)) <= 1e-5, "total norm off sqrt(3)");

    // Positive rescaling of one encoder's output.
    for (double factor : {0.01, 3.7, 250.0}) {
      EncoderSuite scaled = suite;
      scaled.self_supervised[0] = std::make_shared<ToyLinearEncoder>(ss->scaled(factor));
      scaled.cross_modal[0].image = std::make_shared<ToyLinearEncoder>(cm->scaled(factor));
      const auto a = z.flat();
      const auto b = aggregate_reference(x, scaled, cfg).flat();
      double diff = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
      require(o, diff <= 1e-12, fmt("rescaling changed the aggregate by %.3g", diff));
    }
  }
  if (o.pass) o.detail = "20 suites, unit blocks, sqrt(3) total, rescaling invariant";
  return o;
}

// 5. Attack efficacy ---------------------------------------------------------

Outcome attack_efficacy() {
  Outcome o;
  const toy::Instance inst = toy::seeded_instance();
  const AttackResult r = run_attack(inst.x_s, inst.x_t, inst.suite, inst.cfg);
  const double gain = r.final.sim_adv_target - r.initial.sim_adv_target;
  require(o, gain >= 0.3, fmt("similarity gain %.4f", gain));
  require(o, r.final.loss < r.initial.loss, fmt("loss %.6g -> %.6g", r.initial.loss, r.final.loss));
  require(o, std::abs(r.final.loss - toy::kReferenceFinalLoss) <= 1e-9 * std::abs(toy::kReferenceFinalLoss),
          "final loss differs from the reference run");
  o.detail = fmt("sim %.4f -> %.4f, loss %.4f", r.initial.sim_adv_target, r.final.sim_adv_target,
                 r.initial.loss) +
             fmt(" -> %.4f", r.final.loss);
  return o;
}

// 6. Ablation ordering -------------------------------------------------------

// Each family has a seeded base map; the surrogate and the held-out encoders
// of a family are independent noisy copies of it, so attacks transfer within
// a family and less across families.
constexpr int kAblationSize = 16;
constexpr std::size_t kAblationDim = 16;
constexpr double kFamilyNoise = 0.5;
constexpr int kHeldOutPerFamily = 3;

std::shared_ptr<ToyLinearEncoder> family_member(const std::vector<double>& base, std::uint64_t seed,
                                                Paradigm tag) {
  Rng rng(seed);
  const std::size_t n = base.size() / kAblationDim;
  const double scale = std::sqrt(3.0 / static_cast<double>(n));
  std::vector<double> w(base.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = base[i] + kFamilyNoise * uniform(rng, -scale, scale);
  std::vector<double> b(kAblationDim);
  for (double& v : b) v = uniform(rng, -0.1, 0.1);
  return std::make_shared<ToyLinearEncoder>(ImageSize{kAblationSize, kAblationSize}, std::move(w),
                                            std::move(b), tag);
}

double held_out_similarity(const ImageTensor& x_adv, const ImageTensor& x_t,
                           const std::vector<std::shared_ptr<ToyLinearEncoder>>& held_out) {
  double sum = 0.0;
  for (const auto& e : held_out) sum += cosine_sim(e->forward(x_adv.pixels()), e->forward(x_t.pixels()));
  return sum / static_cast<double>(held_out.size());
}

Outcome ablation_ordering() {
  Outcome o;
  const Paradigm tags[] = {Paradigm::kCrossModalImage, Paradigm::kMultimodal, Paradigm::kSelfSupervised};
  const ParadigmFamily families[] = {ParadigmFamily::kCrossModal, ParadigmFamily::kMultimodal,
                                     ParadigmFamily::kSelfSupervised};
  const std::size_t n = static_cast<std::size_t>(kAblationSize) * kAblationSize * 3;
  double mean_all = 0.0, mean_single[3] = {0.0, 0.0, 0.0};
  int strict = 0;
  constexpr int kInstances = 20;
  for (int inst = 0; inst < kInstances; ++inst) {
    const std::uint64_t seed = 7000 + 100 * static_cast<std::uint64_t>(inst);
    EncoderSuite suite;
    std::vector<std::shared_ptr<ToyLinearEncoder>> held_out;
    for (int f = 0; f < 3; ++f) {
      Rng rng(seed + f);
      const double scale = std::sqrt(3.0 / static_cast<double>(n));
      std::vector<double> base(kAblationDim * n);
      for (double& v : base) v = uniform(rng, -scale, scale);
      auto surrogate = family_member(base, seed + 10 + f, tags[f]);
      if (f == 0) suite.cross_modal.push_back({surrogate, nullptr});
      if (f == 1) suite.multimodal.push_back(surrogate);
      if (f == 2) suite.self_supervised.push_back(surrogate);
      for (int k = 0; k < kHeldOutPerFamily; ++k) held_out.push_back(family_member(base, seed + 20 + 3 * f + k, tags[f]));
    }
    const ImageTensor x_s = fixtures::smooth_image(seed + 50, kAblationSize, kAblationSize);
    const ImageTensor x_t = fixtures::smooth_image(seed + 51, kAblationSize, kAblationSize);

    AttackConfig cfg;
    cfg.seed = seed;
    cfg.text_fusion_enabled = false;
    const double all = held_out_similarity(run_attack(x_s, x_t, suite, cfg).x_adv, x_t, held_out);
    double best_single = -INFINITY;
    for (int f = 0; f < 3; ++f) {
      AttackConfig single = cfg;
      single.enabled_paradigms = {families[f]};
      const double v = held_out_similarity(run_attack(x_s, x_t, suite, single).x_adv, x_t, held_out);
      mean_single[f] += v / kInstances;
      best_single = std::max(best_single, v);
    }
    mean_all += all / kInstances;
    strict += all > best_single;
  }
  for (int f = 0; f < 3; ++f) {
    require(o, mean_all >= mean_single[f],
            fmt("all-paradigm %.4f below single-paradigm %.4f (family %.0f)", mean_all, mean_single[f], f));
  }
  require(o, strict >= 15, fmt("strict improvement on %.0f/20 instances", strict));
  o.detail = fmt("held-out sim: all %.4f, singles %.4f", mean_all, mean_single[0]) +
             fmt(" / %.4f / %.4f", mean_single[1], mean_single[2]) + fmt(", strict on %.0f/20", strict);
  return o;
}

// 7. Lambda boundary ---------------------------------------------------------

Outcome lambda_boundary() {
  Outcome o;
  for (std::uint64_t s = 0; s < 3; ++s) {
    const int size = 16;
    const EncoderSuite suite = fixtures::toy_suite(fixtures::SuiteKind::kMixed, size, 40 + s);
    const ImageTensor x_s = fixtures::smooth_image(40 + s, size, size);
    const ImageTensor x_t = fixtures::smooth_image(50 + s, size, size);
    AttackConfig a;
    a.seed = s;
    a.iterations = 100;
    a.lambda_fusion = 1.0;
    AttackConfig b = a;
    b.lambda_fusion = 0.6;
    b.text_fusion_enabled = false;
    const AttackResult ra = run_attack(x_s, x_t, suite, a);
    const AttackResult rb = run_attack(x_s, x_t, suite, b);
    require(o, ra.delta == rb.delta, "perturbations differ");
    require(o, ra.state.loss_trajectory == rb.state.loss_trajectory, "loss trajectories differ");
  }
  if (o.pass) o.detail = "3 instances bit-identical";
  return o;
}

// 8. Determinism -------------------------------------------------------------

Outcome determinism() {
  Outcome o;
  const fs::path images = fixtures::make_image_dir("acceptance_det", 4);
  const fs::path a = fixtures::temp_dir("acceptance_det_a");
  const fs::path b = fixtures::temp_dir("acceptance_det_b");
  RunManifest ma = fixtures::toy_manifest(images, a, 50);
  ma.evaluation.enabled = true;
  RunManifest mb = ma;
  mb.output_dir = b.string();
  mb.workers = 4;
  run_batch(ma);
  run_batch(mb);
  for (const auto& p : ma.pairing.pairs) {
    const std::string f = "adv/" + p.pair_id + ".png";
    require(o, fs::exists(a / f) && fixtures::slurp(a / f) == fixtures::slurp(b / f), "PNG differs: " + f);
  }
  require(o, fixtures::slurp(a / "report.json") == fixtures::slurp(b / "report.json"), "report.json differs");
  require(o, fixtures::slurp(a / "summary.csv") == fixtures::slurp(b / "summary.csv"), "summary.csv differs");
  if (o.pass) o.detail = "4 pairs, 1 vs 4 workers, byte-identical";
  return o;
}

// 9. Evaluation semantics ----------------------------------------------------

Outcome evaluation_semantics() {
  Outcome o;
  require(o, EvalRecord::make("b", 0.51, 0.9).targeted_success, "0.51 should succeed (targeted)");
  require(o, !EvalRecord::make("b", 0.5, 0.5).targeted_success, "0.5 should fail (targeted)");
  require(o, !EvalRecord::make("b", 0.5, 0.5).untargeted_success, "0.5 should fail (untargeted)");
  require(o, EvalRecord::make("b", std::nextafter(0.5, 1.0), 0.9).targeted_success, "just above 0.5");
  require(o, EvalRecord::make("b", 0.1, std::nextafter(0.5, 0.0)).untargeted_success, "just below 0.5");
  for (int i = 0; i <= 1000; ++i) {
    const double s = i / 1000.0;
    const EvalRecord r = EvalRecord::make("g", s, s);
    require(o, r.targeted_success == (s > 0.5) && r.untargeted_success == (s < 0.5), fmt("biconditional at %.3f", s));
  }
  const MockJudge j;
  require(o, std::abs(j.score("a red car", "a red truck") - 2.0 / 3.0) <= 1e-15, "red car / red truck");
  require(o, j.score("a red car", "a red car") == 1.0, "identical strings");
  require(o, j.score("a red car", "green grass field") == 0.0, "disjoint strings");
  const EvalRecord e = evaluate_pair("a red car", "a red car", "green grass", j);
  require(o, e.targeted_success && e.untargeted_success, "mock composition");
  const std::vector<EvalRecord> two{EvalRecord::make("a", 0.2, 0.9), EvalRecord::make("b", 0.8, 0.1)};
  const BatchMetrics m = aggregate_metrics(two, EvalMode::kTargeted);
  require(o, m.asr == 0.5 && std::abs(m.avg_sim - 0.5) <= 1e-15, "ASR/AvgSim hand values");
  if (o.pass) o.detail = "thresholds strict, mock judge 2/3, metrics hand values";
  return o;
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"gradient correctness", gradient_correctness},
      {"budget invariant", budget_invariant},
      {"loss anchors", loss_anchors},
      {"aggregation anchors", aggregation_anchors},
      {"attack efficacy", attack_efficacy},
      {"ablation ordering", ablation_ordering},
      {"lambda boundary", lambda_boundary},
      {"determinism", determinism},
      {"evaluation semantics", evaluation_semantics},
  };
  int failed = 0, index = 0;
  for (const auto& [name, run] : criteria) {
    ++index;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %d %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", index, name, o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
