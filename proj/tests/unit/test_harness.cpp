#include <doctest.h>

#include <cmath>
#include <fstream>

#include "../support/batch_fixture.hpp"
#include "mpcattack/harness.hpp"
#include "mpcattack/image_io.hpp"

using namespace mpcattack;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::pair<std::string, std::string>> stems(const PairingPlan& plan) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& p : plan.pairs) {
    out.emplace_back(fs::path(p.source).stem().string(), fs::path(p.target).stem().string());
  }
  return out;
}

using SP = std::vector<std::pair<std::string, std::string>>;

}  // namespace

TEST_CASE("reverse-order pairing") {
  CHECK(stems(pair_reverse_order({"a", "b", "c", "d"})) == SP{{"a", "d"}, {"b", "c"}, {"c", "b"}, {"d", "a"}});
  CHECK(stems(pair_reverse_order({"a", "b"})) == SP{{"a", "b"}, {"b", "a"}});
  const PairingPlan odd = pair_reverse_order({"a", "b", "c"});
  CHECK(stems(odd) == SP{{"a", "c"}, {"c", "a"}});
  CHECK(odd.warnings.size() == 1);
  CHECK(pair_reverse_order({"a", "b"}).pairs[0].pair_id == "0000_a_to_b");
}

TEST_CASE("reverse-order pairing is an involution without self pairs") {
  for (int n = 2; n < 12; ++n) {
    std::vector<std::string> files;
    for (int i = 0; i < n; ++i) files.push_back("f" + std::to_string(10 + i));
    const PairingPlan plan = pair_reverse_order(files);
    CHECK(plan.pairs.size() == static_cast<std::size_t>(n - n % 2));
    for (const auto& p : plan.pairs) {
      CHECK(p.source != p.target);
      const auto back = std::find_if(plan.pairs.begin(), plan.pairs.end(),
                                     [&](const ImagePair& q) { return q.source == p.target; });
      REQUIRE(back != plan.pairs.end());
      CHECK(back->target == p.source);
    }
  }
}

TEST_CASE("build_pairing sorts, skips unreadable files and needs two images") {
  const fs::path dir = fixtures::make_image_dir("pairing", 3);
  { std::ofstream(dir / "img_0broken.png") << "not a png"; }
  { std::ofstream(dir / "notes.txt") << "ignored"; }
  const PairingPlan plan = build_pairing(dir);
  CHECK(plan.skipped.size() == 1);
  CHECK(stems(plan) == SP{{"img_a", "img_c"}, {"img_c", "img_a"}});

  const fs::path lonely = fixtures::make_image_dir("pairing_one", 1);
  CHECK_THROWS_AS(build_pairing(lonely), ValidationError);
}

TEST_CASE("explicit pair manifest") {
  const fs::path dir = fixtures::make_image_dir("pairing_csv", 3);
  { std::ofstream(dir / "pairs.csv") << "source,target\nimg_a.png,img_b.png\nimg_c.png,img_a.png,custom\n"; }
  const PairingPlan plan = build_pairing(dir, PairingPolicy::kExplicitManifest, dir / "pairs.csv");
  CHECK(stems(plan) == SP{{"img_a", "img_b"}, {"img_c", "img_a"}});
  CHECK(plan.pairs[1].pair_id == "custom");
}

TEST_CASE("quantizer rounds half away from zero and round-trips within half a level") {
  CHECK(quantize_value(0.5) == 128);
  CHECK(quantize_value(0.0) == 0);
  CHECK(quantize_value(1.0) == 255);
  const fs::path dir = fixtures::temp_dir("png");
  for (std::uint64_t s = 0; s < 10; ++s) {
    const ImageTensor x = fixtures::random_image(s, 9, 13);
    write_png(x, dir / "x.png");
    const ImageTensor y = read_image(dir / "x.png");
    CHECK((x.pixels() - y.pixels()).max_abs() <= 1.0 / 510.0 + 1e-12);
  }
}

TEST_CASE("quantized budget sidecar stays within 17/255 even when saturated") {
  const fs::path dir = fixtures::temp_dir("sidecar");
  const double eps = 16.0 / 255.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const ImageTensor x_s = fixtures::random_image(s, 12, 12);
    Tensor3 d({12, 12, 3});
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = (i + s) % 2 ? eps : -eps;
    const ImageTensor x_adv = apply_perturbation(x_s, Perturbation(d, eps));
    const QuantizationReport r = write_adversarial_image(x_adv, x_s, dir / "adv.png");
    CHECK(r.max_quantized_diff <= 17.0 / 255.0 + 1e-12);
    const json side = json::parse(fixtures::slurp(dir / "adv.png.json"));
    CHECK(side.at("max_quantized_levels").get<int>() == r.max_quantized_levels);
    CHECK(side.at("max_quantized_levels").get<int>() <= 17);
  }
}

TEST_CASE("manifest JSON round trip") {
  const fs::path dir = fixtures::make_image_dir("manifest", 4);
  RunManifest m = fixtures::toy_manifest(dir, dir / "out");
  m.config.lambda_fusion = 0.25;
  m.config.enabled_paradigms = {ParadigmFamily::kSelfSupervised};
  m.config.gradient_norm = GradientNorm::kL2;
  m.config.loss_reading = LossReading::kLiteral;
  m.evaluation.enabled = true;
  m.evaluation.modes = {EvalMode::kUntargeted};
  m.workers = 3;
  const json j = to_json(m);
  CHECK(to_json(manifest_from_json(j)) == j);
  CHECK(to_json(manifest_from_json(json::parse(j.dump()))) == j);
}

TEST_CASE("two-pair batch without evaluation") {
  const fs::path dir = fixtures::make_image_dir("batch2", 2);
  const fs::path out = fixtures::temp_dir("batch2_out");
  const BatchReport r = run_batch(fixtures::toy_manifest(dir, out));
  REQUIRE(r.pairs.size() == 2);
  CHECK(r.failures == 0);
  CHECK(r.metrics.empty());
  for (const auto& p : r.pairs) {
    CHECK(p.ok);
    CHECK(fs::exists(out / p.adv_path));
    CHECK(fs::exists(out / "records" / (p.pair.pair_id + ".json")));
    CHECK(p.linf <= 16.0 / 255.0 + 1e-9);
    CHECK(p.loss_trajectory.size() == 10);
  }
  CHECK(fs::exists(out / "summary.csv"));
  CHECK(fs::exists(out / "manifest.json"));
  CHECK(load_report(out).at("n_pairs") == 2);
}

TEST_CASE("batch output is deterministic across runs and worker counts") {
  const fs::path dir = fixtures::make_image_dir("det", 4);
  const fs::path a = fixtures::temp_dir("det_a"), b = fixtures::temp_dir("det_b");
  RunManifest ma = fixtures::toy_manifest(dir, a);
  RunManifest mb = fixtures::toy_manifest(dir, b);
  mb.workers = 3;
  run_batch(ma);
  run_batch(mb);
  for (const auto& p : ma.pairing.pairs) {
    const std::string f = "adv/" + p.pair_id + ".png";
    CHECK(fixtures::slurp(a / f) == fixtures::slurp(b / f));
  }
  CHECK(fixtures::slurp(a / "report.json") == fixtures::slurp(b / "report.json"));
}

TEST_CASE("per-pair failures are isolated") {
  const fs::path dir = fixtures::make_image_dir("isolate", 2);
  RunManifest m = fixtures::toy_manifest(dir, fixtures::temp_dir("isolate_out"));
  m.pairing.pairs.push_back({(dir / "missing.png").string(), m.pairing.pairs[0].target, "0002_missing"});
  const BatchReport r = run_batch(m);
  CHECK(r.failures == 1);
  CHECK_FALSE(r.pairs[2].ok);
  CHECK(r.pairs[0].ok);
}

TEST_CASE("mock evaluation metrics can be recomputed from the records") {
  const fs::path dir = fixtures::make_image_dir("eval4", 4);
  const fs::path out = fixtures::temp_dir("eval4_out");
  RunManifest m = fixtures::toy_manifest(dir, out);
  m.evaluation.enabled = true;
  const BatchReport r = run_batch(m);
  REQUIRE(r.pairs.size() == 4);

  int targeted = 0, untargeted = 0, n = 0;
  double st = 0.0, ss = 0.0;
  for (const auto& e : fs::directory_iterator(out / "records")) {
    const json rec = json::parse(fixtures::slurp(e.path()));
    const json& ev = rec.at("evaluation");
    const double t = ev.at("sim_adv_target").get<double>(), s = ev.at("sim_adv_source").get<double>();
    targeted += t > 0.5;
    untargeted += s < 0.5;
    st += t;
    ss += s;
    ++n;
  }
  REQUIRE(n == 4);
  const json rep = load_report(out);
  CHECK(rep.at("metrics").at("targeted").at("asr").get<double>() == targeted / 4.0);
  CHECK(rep.at("metrics").at("untargeted").at("asr").get<double>() == untargeted / 4.0);
  CHECK(rep.at("metrics").at("targeted").at("avg_sim").get<double>() == doctest::Approx(st / 4.0).epsilon(1e-14));
  CHECK(rep.at("metrics").at("untargeted").at("avg_sim").get<double>() == doctest::Approx(ss / 4.0).epsilon(1e-14));

  // Re-evaluating the finished batch directory gives the same metrics.
  EvaluationOptions opts;
  opts.enabled = true;
  const BatchReport again = evaluate_batch(out, opts, 16);
  CHECK(again.metrics.at(EvalMode::kTargeted).asr == targeted / 4.0);
}

TEST_CASE("ground-truth captions replace victim responses for references") {
  const fs::path dir = fixtures::make_image_dir("captions", 2);
  { std::ofstream(dir / "caps.json") << R"({"img_a.png": "a red car", "img_b.png": "a blue boat"})"; }
  RunManifest m = fixtures::toy_manifest(dir, fixtures::temp_dir("captions_out"));
  m.evaluation.enabled = true;
  m.evaluation.captions_path = (dir / "caps.json").string();
  const BatchReport r = run_batch(m);
  REQUIRE(r.pairs[0].eval.has_value());
  CHECK(r.pairs[0].source_response == "a red car");
  CHECK(r.pairs[0].target_response == "a blue boat");
}

TEST_CASE("lambda sweep writes one batch per value and plot data") {
  const fs::path dir = fixtures::make_image_dir("sweep", 2);
  const fs::path out = fixtures::temp_dir("sweep_out");
  RunManifest m = fixtures::toy_manifest(dir, out, 5);
  const std::vector<double> values{0.0, 0.6, 1.0};
  const SweepReport s = sweep(m, SweepParameter::kLambda, values);
  REQUIRE(s.rows.size() == 3);
  for (const auto& row : s.rows) {
    CHECK(row.pairs_ok == 2);
    CHECK(fs::exists(fs::path(row.output_dir) / "report.json"));
  }
  CHECK(fs::exists(out / "lambda_0.6" / "summary.csv"));
  CHECK(s.rows[0].mean_final_loss != s.rows[1].mean_final_loss);

  // lambda = 1 matches a text-fusion-disabled batch.
  RunManifest off = fixtures::toy_manifest(dir, fixtures::temp_dir("sweep_off"), 5);
  off.config.text_fusion_enabled = false;
  run_batch(off);
  for (const auto& p : m.pairing.pairs) {
    const std::string f = "adv/" + p.pair_id + ".png";
    CHECK(fixtures::slurp(out / "lambda_1" / f) == fixtures::slurp(fs::path(off.output_dir) / f));
  }

  write_plot_data(out, "sweep", out / "plot.csv");
  const std::string csv = fixtures::slurp(out / "plot.csv");
  CHECK(csv.rfind("parameter,value,mode", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

  write_plot_data(out / "lambda_0", "loss", out / "loss.csv");
  const std::string loss = fixtures::slurp(out / "loss.csv");
  CHECK(std::count(loss.begin(), loss.end(), '\n') == 1 + 2 * 5);
  CHECK_THROWS_AS(write_plot_data(out, "bars", out / "x.csv"), ConfigError);
}
