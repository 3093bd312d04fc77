// mpcattack command-line front end: attack, evaluate, sweep, plot-data.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "mpcattack/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mpcattack;

namespace {

// Accepts "0.0627" as well as "16/255".
double parse_real(const std::string& text) {
  const auto slash = text.find('/');
  try {
    if (slash == std::string::npos) return std::stod(text);
    const double num = std::stod(text.substr(0, slash));
    const double den = std::stod(text.substr(slash + 1));
    if (den == 0.0) throw ConfigError("zero denominator in '" + text + "'");
    return num / den;
  } catch (const std::logic_error&) {
    throw ConfigError("not a number: '" + text + "'");
  }
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("malformed JSON in " + path + ": " + e.what());
  }
}

std::vector<EvalMode> parse_modes(const std::string& mode) {
  if (mode == "both") return {EvalMode::kTargeted, EvalMode::kUntargeted};
  return {eval_mode_from_string(mode)};
}

struct AttackFlags {
  std::string config_path;
  std::string images;
  std::string pairing;
  std::string pair_manifest;
  std::optional<std::string> epsilon, alpha;
  std::optional<int> steps;
  std::optional<double> mu, lambda, tau, omega, crop_min, crop_max;
  std::optional<std::string> paradigms;
  std::optional<std::uint64_t> seed;
  std::optional<int> crops_per_step;
  bool no_crop = false;
  bool no_text_fusion = false;
  std::optional<std::string> grad_norm, loss_reading;
  std::string out;
  std::optional<int> workers, image_size;
  std::string encoders_path;
  bool evaluate = false;
  std::optional<std::string> judge, victim, captions, prompt_template, mode;
};

void add_attack_flags(CLI::App* cmd, AttackFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON run manifest or config file");
  cmd->add_option("--images", f.images, "Directory of source/target images (PNG or JPEG)");
  cmd->add_option("--pairing", f.pairing, "reverse_order or explicit_manifest");
  cmd->add_option("--pair-manifest", f.pair_manifest, "CSV of source,target[,pair_id] lines");
  cmd->add_option("--epsilon", f.epsilon, "L-infinity budget, e.g. 16/255");
  cmd->add_option("--alpha", f.alpha, "Step size, e.g. 1/255");
  cmd->add_option("--steps", f.steps, "Number of iterations");
  cmd->add_option("--mu", f.mu, "Momentum decay");
  cmd->add_option("--lambda", f.lambda, "Image/text fusion weight in [0,1]");
  cmd->add_option("--tau", f.tau, "Loss temperature");
  cmd->add_option("--omega", f.omega, "Positive-term weight");
  cmd->add_option("--paradigms", f.paradigms,
                  "Comma list of cross_modal, multimodal, self_supervised");
  cmd->add_option("--crop-min", f.crop_min, "Minimum crop side ratio");
  cmd->add_option("--crop-max", f.crop_max, "Maximum crop side ratio");
  cmd->add_flag("--no-crop", f.no_crop, "Disable the random crop transform");
  cmd->add_option("--crops-per-step", f.crops_per_step, "Crops averaged per gradient step");
  cmd->add_option("--seed", f.seed, "Base seed; per-pair streams derive from it");
  cmd->add_flag("--no-text-fusion", f.no_text_fusion, "Drop the caption/text branch");
  cmd->add_option("--grad-norm", f.grad_norm, "l1 or l2 normalisation of the gradient");
  cmd->add_option("--loss-reading", f.loss_reading, "omega_scales_positive or literal");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--workers", f.workers, "Pair-level worker threads");
  cmd->add_option("--image-size", f.image_size, "Square working resolution (0 keeps file size)");
  cmd->add_option("--encoders", f.encoders_path, "Encoder registry config (JSON)");
  cmd->add_flag("--evaluate", f.evaluate, "Run victim + judge evaluation after the attack");
  cmd->add_option("--judge", f.judge, "mock or chat");
  cmd->add_option("--victim", f.victim, "mock or chat");
  cmd->add_option("--captions", f.captions, "Ground-truth captions JSON {file name: caption}");
  cmd->add_option("--prompt-template", f.prompt_template, "Judge prompt template file");
  cmd->add_option("--mode", f.mode, "targeted, untargeted or both");
}

// defaults < config file < flags
RunManifest resolve_manifest(const AttackFlags& f) {
  RunManifest m;
  if (!f.config_path.empty()) {
    const json j = read_json_file(f.config_path);
    m = manifest_from_json(j);
  }
  AttackConfig& c = m.config;
  if (f.epsilon) c.epsilon = parse_real(*f.epsilon);
  if (f.alpha) c.alpha = parse_real(*f.alpha);
  if (f.steps) c.iterations = *f.steps;
  if (f.mu) c.momentum_mu = *f.mu;
  if (f.lambda) c.lambda_fusion = *f.lambda;
  if (f.tau) c.tau = *f.tau;
  if (f.omega) c.omega = *f.omega;
  if (f.crop_min) c.crop_min_ratio = *f.crop_min;
  if (f.crop_max) c.crop_max_ratio = *f.crop_max;
  if (f.no_crop) c.crop_enabled = false;
  if (f.crops_per_step) c.crops_per_step = *f.crops_per_step;
  if (f.seed) c.seed = *f.seed;
  if (f.no_text_fusion) c.text_fusion_enabled = false;
  if (f.paradigms) {
    c.enabled_paradigms.clear();
    for (const auto& p : split_list(*f.paradigms)) c.enabled_paradigms.push_back(family_from_string(p));
  }
  if (f.grad_norm || f.loss_reading) {
    json overrides = json::object();
    if (f.grad_norm) overrides["gradient_norm"] = *f.grad_norm;
    if (f.loss_reading) overrides["loss_reading"] = *f.loss_reading;
    c = attack_config_from_json(overrides, c);
  }
  c.validate();

  if (!f.out.empty()) m.output_dir = f.out;
  if (f.workers) m.workers = *f.workers;
  if (f.image_size) m.image_size = *f.image_size;
  if (!f.encoders_path.empty()) m.encoders = read_json_file(f.encoders_path);

  EvaluationOptions& e = m.evaluation;
  if (f.evaluate) e.enabled = true;
  if (f.judge) e.judge = *f.judge;
  if (f.victim) e.victim = *f.victim;
  if (f.captions) e.captions_path = *f.captions;
  if (f.prompt_template) e.prompt_template_path = *f.prompt_template;
  if (f.mode) e.modes = parse_modes(*f.mode);

  if (!f.images.empty()) m.image_dir = f.images;
  const bool repair = !f.images.empty() || !f.pairing.empty() || !f.pair_manifest.empty() ||
                      m.pairing.pairs.empty();
  if (repair) {
    if (m.image_dir.empty()) throw ConfigError("--images is required");
    PairingPolicy policy = f.pairing.empty() ? m.pairing.policy : pairing_policy_from_string(f.pairing);
    if (!f.pair_manifest.empty()) policy = PairingPolicy::kExplicitManifest;
    if (policy == PairingPolicy::kExplicitManifest && f.pair_manifest.empty()) {
      throw ConfigError("explicit_manifest pairing needs --pair-manifest");
    }
    m.pairing = build_pairing(m.image_dir, policy, f.pair_manifest);
  }
  if (m.output_dir.empty()) throw ConfigError("--out is required");
  return m;
}

void print_metrics(const std::map<EvalMode, BatchMetrics>& metrics) {
  for (const auto& [mode, bm] : metrics) {
    std::cout << to_string(mode) << ": ASR=" << bm.asr << " AvgSim=" << bm.avg_sim
              << " (n=" << bm.n_pairs << ")\n";
  }
}

int report_exit(const BatchReport& r) {
  std::cout << r.pairs.size() - r.failures << "/" << r.pairs.size() << " pairs succeeded";
  if (r.unevaluated > 0) std::cout << ", " << r.unevaluated << " unevaluated";
  std::cout << "\n";
  print_metrics(r.metrics);
  return r.failures == r.pairs.size() ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-paradigm transferable adversarial attack toolkit"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error");

  AttackFlags attack_flags;
  auto* attack = app.add_subcommand("attack", "Craft adversarial images for every image pair");
  add_attack_flags(attack, attack_flags);

  std::string records_dir, eval_judge = "mock", eval_mode = "both", eval_victim = "mock";
  std::string eval_captions, eval_template;
  std::optional<int> eval_image_size;
  auto* evaluate = app.add_subcommand("evaluate", "Judge the outputs of a finished attack batch");
  evaluate->add_option("--records", records_dir, "Batch output directory")->required();
  evaluate->add_option("--judge", eval_judge, "mock or chat");
  evaluate->add_option("--mode", eval_mode, "targeted, untargeted or both");
  evaluate->add_option("--victim", eval_victim, "mock or chat");
  evaluate->add_option("--captions", eval_captions, "Ground-truth captions JSON");
  evaluate->add_option("--prompt-template", eval_template, "Judge prompt template file");
  evaluate->add_option("--image-size", eval_image_size, "Working resolution (default: batch's)");

  AttackFlags sweep_flags;
  std::string sweep_param;
  std::string sweep_values;
  auto* sweep_cmd = app.add_subcommand("sweep", "Repeat the attack batch over one parameter");
  add_attack_flags(sweep_cmd, sweep_flags);
  sweep_cmd->add_option("--param", sweep_param, "lambda, tau or omega")->required();
  sweep_cmd->add_option("--values", sweep_values, "Comma-separated values")->required();

  std::string plot_input, plot_kind = "sweep", plot_out;
  auto* plot = app.add_subcommand("plot-data", "Emit CSV for figures from sweep or batch output");
  plot->add_option("--input", plot_input, "Sweep or batch directory")->required();
  plot->add_option("--kind", plot_kind, "sweep or loss");
  plot->add_option("--out", plot_out, "CSV path")->required();

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*attack) {
      const RunManifest m = resolve_manifest(attack_flags);
      return report_exit(run_batch(m));
    }
    if (*evaluate) {
      EvaluationOptions opts;
      opts.enabled = true;
      opts.judge = eval_judge;
      opts.victim = eval_victim;
      opts.modes = parse_modes(eval_mode);
      opts.captions_path = eval_captions;
      opts.prompt_template_path = eval_template;
      int size = 224;
      if (eval_image_size) {
        size = *eval_image_size;
      } else if (fs::exists(fs::path(records_dir) / "manifest.json")) {
        size = manifest_from_json(read_json_file((fs::path(records_dir) / "manifest.json").string()))
                   .image_size;
      }
      return report_exit(evaluate_batch(records_dir, opts, size));
    }
    if (*sweep_cmd) {
      const RunManifest m = resolve_manifest(sweep_flags);
      std::vector<double> values;
      for (const auto& v : split_list(sweep_values)) values.push_back(parse_real(v));
      const SweepReport rep = sweep(m, sweep_parameter_from_string(sweep_param), values);
      bool any_ok = false;
      for (const auto& row : rep.rows) {
        std::cout << sweep_param << "=" << row.value << ": " << row.pairs_ok << " pairs ok, mean sim_t "
                  << row.mean_final_sim_target << "\n";
        print_metrics(row.metrics);
        any_ok = any_ok || row.pairs_ok > 0;
      }
      return any_ok ? 0 : 1;
    }
    if (*plot) {
      write_plot_data(plot_input, plot_kind, plot_out);
      return 0;
    }
  } catch (const ConfigError& e) {
    spdlog::error("configuration error: {}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
