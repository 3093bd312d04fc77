#include "mpcattack/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "mpcattack/attack.hpp"
#include "mpcattack/image_io.hpp"
#include "mpcattack/random.hpp"
#include "mpcattack/transforms.hpp"

namespace mpcattack {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool is_image_file(const fs::path& p) {
  const std::string ext = lower(p.extension().string());
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

std::string make_pair_id(std::size_t index, const std::string& source, const std::string& target) {
  char prefix[16];
  std::snprintf(prefix, sizeof prefix, "%04zu", index);
  return std::string(prefix) + "_" + fs::path(source).stem().string() + "_to_" +
         fs::path(target).stem().string();
}

}  // namespace

// ---------------------------------------------------------------------------
// Pairing
// ---------------------------------------------------------------------------

std::string_view to_string(PairingPolicy p) {
  return p == PairingPolicy::kReverseOrder ? "reverse_order" : "explicit_manifest";
}

PairingPolicy pairing_policy_from_string(std::string_view name) {
  if (name == "reverse_order") return PairingPolicy::kReverseOrder;
  if (name == "explicit_manifest" || name == "manifest") return PairingPolicy::kExplicitManifest;
  throw ConfigError("unknown pairing policy '" + std::string(name) + "'");
}

PairingPlan pair_reverse_order(const std::vector<std::string>& sorted_files) {
  PairingPlan plan;
  plan.policy = PairingPolicy::kReverseOrder;
  const std::size_t n = sorted_files.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = n - 1 - i;
    if (i == j) {
      plan.warnings.push_back("skipping middle image " + sorted_files[i] +
                              ": reverse-order pairing would target itself");
      spdlog::warn("{}", plan.warnings.back());
      continue;
    }
    plan.pairs.push_back({sorted_files[i], sorted_files[j],
                          make_pair_id(plan.pairs.size(), sorted_files[i], sorted_files[j])});
  }
  return plan;
}

PairingPlan build_pairing(const fs::path& image_dir, PairingPolicy policy,
                          const fs::path& manifest_csv) {
  if (!fs::is_directory(image_dir)) {
    throw ValidationError("image directory " + image_dir.string() + " does not exist");
  }
  std::vector<std::string> readable;
  std::vector<std::string> skipped;
  std::vector<fs::path> candidates;
  for (const auto& entry : fs::directory_iterator(image_dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) candidates.push_back(entry.path());
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
  for (const fs::path& p : candidates) {
    try {
      (void)read_image(p);
      readable.push_back(p.string());
    } catch (const std::exception& e) {
      skipped.push_back(p.string() + ": " + e.what());
      spdlog::warn("skipping unreadable image {}", skipped.back());
    }
  }

  PairingPlan plan;
  if (policy == PairingPolicy::kReverseOrder) {
    if (readable.size() < 2) {
      throw ValidationError("need at least 2 readable images in " + image_dir.string() + ", found " +
                            std::to_string(readable.size()));
    }
    plan = pair_reverse_order(readable);
  } else {
    std::ifstream in(manifest_csv);
    if (!in) throw ValidationError("cannot read pairing manifest " + manifest_csv.string());
    plan.policy = PairingPolicy::kExplicitManifest;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#' || line.rfind("source,", 0) == 0) continue;
      std::vector<std::string> cols;
      std::stringstream ss(line);
      for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
      if (cols.size() < 2) throw ValidationError("pairing manifest line needs source,target: " + line);
      const std::string src = (image_dir / cols[0]).string();
      const std::string tgt = (image_dir / cols[1]).string();
      auto usable = [&](const std::string& p) {
        return std::find(readable.begin(), readable.end(), p) != readable.end();
      };
      if (!usable(src) || !usable(tgt)) {
        plan.warnings.push_back("manifest pair " + line + " references a missing or unreadable image");
        spdlog::warn("{}", plan.warnings.back());
        continue;
      }
      const std::string id = cols.size() >= 3 && !cols[2].empty()
                                 ? cols[2]
                                 : make_pair_id(plan.pairs.size(), src, tgt);
      plan.pairs.push_back({src, tgt, id});
    }
    if (plan.pairs.empty()) throw ValidationError("pairing manifest yields no usable pairs");
  }
  plan.skipped = std::move(skipped);
  return plan;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

json to_json(const AttackConfig& cfg) {
  json paradigms = json::array();
  for (ParadigmFamily f : cfg.enabled_paradigms) paradigms.push_back(std::string(to_string(f)));
  return {{"epsilon", cfg.epsilon},
          {"alpha", cfg.alpha},
          {"iterations", cfg.iterations},
          {"momentum_mu", cfg.momentum_mu},
          {"lambda", cfg.lambda_fusion},
          {"tau", cfg.tau},
          {"omega", cfg.omega},
          {"crop_min_ratio", cfg.crop_min_ratio},
          {"crop_max_ratio", cfg.crop_max_ratio},
          {"crop_enabled", cfg.crop_enabled},
          {"crops_per_step", cfg.crops_per_step},
          {"seed", cfg.seed},
          {"paradigms", paradigms},
          {"text_fusion", cfg.text_fusion_enabled},
          {"gradient_norm", cfg.gradient_norm == GradientNorm::kL1 ? "l1" : "l2"},
          {"loss_reading", cfg.loss_reading == LossReading::kOmegaScalesPositive
                               ? "omega_scales_positive"
                               : "literal"}};
}

AttackConfig attack_config_from_json(const json& j, AttackConfig cfg) {
  try {
    auto set = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    set("epsilon", cfg.epsilon);
    set("alpha", cfg.alpha);
    set("iterations", cfg.iterations);
    set("momentum_mu", cfg.momentum_mu);
    set("lambda", cfg.lambda_fusion);
    set("tau", cfg.tau);
    set("omega", cfg.omega);
    set("crop_min_ratio", cfg.crop_min_ratio);
    set("crop_max_ratio", cfg.crop_max_ratio);
    set("crop_enabled", cfg.crop_enabled);
    set("crops_per_step", cfg.crops_per_step);
    set("seed", cfg.seed);
    set("text_fusion", cfg.text_fusion_enabled);
    if (j.contains("paradigms")) {
      cfg.enabled_paradigms.clear();
      for (const auto& p : j.at("paradigms")) {
        cfg.enabled_paradigms.push_back(family_from_string(p.get<std::string>()));
      }
    }
    if (j.contains("gradient_norm")) {
      const auto v = j.at("gradient_norm").get<std::string>();
      if (v != "l1" && v != "l2") throw ConfigError("gradient_norm must be l1 or l2");
      cfg.gradient_norm = v == "l1" ? GradientNorm::kL1 : GradientNorm::kL2;
    }
    if (j.contains("loss_reading")) {
      const auto v = j.at("loss_reading").get<std::string>();
      if (v != "omega_scales_positive" && v != "literal")
        throw ConfigError("loss_reading must be omega_scales_positive or literal");
      cfg.loss_reading =
          v == "literal" ? LossReading::kLiteral : LossReading::kOmegaScalesPositive;
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed attack config: ") + e.what());
  }
  return cfg;
}

namespace {

json backend_json(const ChatBackendConfig& b) {
  return {{"endpoint", b.endpoint},
          {"path", b.path},
          {"model", b.model},
          {"api_key_env", b.api_key_env},
          {"timeout_seconds", b.timeout_seconds}};
}

ChatBackendConfig backend_from_json(const json& j) {
  ChatBackendConfig b;
  b.endpoint = j.value("endpoint", b.endpoint);
  b.path = j.value("path", b.path);
  b.model = j.value("model", b.model);
  b.api_key_env = j.value("api_key_env", b.api_key_env);
  b.timeout_seconds = j.value("timeout_seconds", b.timeout_seconds);
  return b;
}

json evaluation_json(const EvaluationOptions& e) {
  json modes = json::array();
  for (EvalMode m : e.modes) modes.push_back(std::string(to_string(m)));
  return {{"enabled", e.enabled},
          {"judge", e.judge},
          {"victim", e.victim},
          {"modes", modes},
          {"judge_backend", backend_json(e.judge_backend)},
          {"victim_backend", backend_json(e.victim_backend)},
          {"victim_prompt", e.victim_prompt},
          {"prompt_template", e.prompt_template_path},
          {"captions", e.captions_path},
          {"retry_attempts", e.retry_attempts},
          {"retry_base_delay_ms", e.retry_base_delay_ms}};
}

EvaluationOptions evaluation_from_json(const json& j) {
  EvaluationOptions e;
  e.enabled = j.value("enabled", e.enabled);
  e.judge = j.value("judge", e.judge);
  e.victim = j.value("victim", e.victim);
  if (j.contains("modes")) {
    e.modes.clear();
    for (const auto& m : j.at("modes")) e.modes.push_back(eval_mode_from_string(m.get<std::string>()));
  }
  if (j.contains("judge_backend")) e.judge_backend = backend_from_json(j.at("judge_backend"));
  if (j.contains("victim_backend")) e.victim_backend = backend_from_json(j.at("victim_backend"));
  e.victim_prompt = j.value("victim_prompt", e.victim_prompt);
  e.prompt_template_path = j.value("prompt_template", e.prompt_template_path);
  e.captions_path = j.value("captions", e.captions_path);
  e.retry_attempts = j.value("retry_attempts", e.retry_attempts);
  e.retry_base_delay_ms = j.value("retry_base_delay_ms", e.retry_base_delay_ms);
  return e;
}

}  // namespace

json to_json(const RunManifest& m) {
  json pairs = json::array();
  for (const auto& p : m.pairing.pairs) {
    pairs.push_back({{"source", p.source}, {"target", p.target}, {"pair_id", p.pair_id}});
  }
  return {{"schema_version", m.schema_version},
          {"attack", to_json(m.config)},
          {"image_dir", m.image_dir},
          {"pairing",
           {{"policy", std::string(to_string(m.pairing.policy))},
            {"pairs", pairs},
            {"skipped", m.pairing.skipped},
            {"warnings", m.pairing.warnings}}},
          {"output_dir", m.output_dir},
          {"encoders", m.encoders},
          {"image_size", m.image_size},
          {"workers", m.workers},
          {"evaluation", evaluation_json(m.evaluation)}};
}

RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  try {
    m.schema_version = j.value("schema_version", kSchemaVersion);
    if (m.schema_version != kSchemaVersion) {
      throw ConfigError("unsupported manifest schema_version " + std::to_string(m.schema_version));
    }
    if (j.contains("attack")) m.config = attack_config_from_json(j.at("attack"));
    m.image_dir = j.value("image_dir", std::string{});
    if (j.contains("pairing")) {
      const json& p = j.at("pairing");
      m.pairing.policy = pairing_policy_from_string(p.value("policy", "reverse_order"));
      for (const auto& e : p.value("pairs", json::array())) {
        m.pairing.pairs.push_back({e.at("source").get<std::string>(),
                                   e.at("target").get<std::string>(),
                                   e.at("pair_id").get<std::string>()});
      }
      m.pairing.skipped = p.value("skipped", std::vector<std::string>{});
      m.pairing.warnings = p.value("warnings", std::vector<std::string>{});
    }
    m.output_dir = j.value("output_dir", std::string{});
    if (j.contains("encoders")) m.encoders = j.at("encoders");
    m.image_size = j.value("image_size", m.image_size);
    m.workers = j.value("workers", m.workers);
    if (j.contains("evaluation")) m.evaluation = evaluation_from_json(j.at("evaluation"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed run manifest: ") + e.what());
  }
  return m;
}

namespace {

json record_json(const EvalRecord& r) {
  return {{"sim_adv_target", r.sim_adv_target},
          {"sim_adv_source", r.sim_adv_source},
          {"targeted_success", r.targeted_success},
          {"untargeted_success", r.untargeted_success}};
}

json metrics_json(const std::map<EvalMode, BatchMetrics>& metrics) {
  json out = json::object();
  for (const auto& [mode, m] : metrics) {
    out[std::string(to_string(mode))] = {{"asr", m.asr}, {"avg_sim", m.avg_sim}, {"n_pairs", m.n_pairs}};
  }
  return out;
}

std::map<EvalMode, BatchMetrics> metrics_from_json(const json& j) {
  std::map<EvalMode, BatchMetrics> out;
  for (const auto& [name, v] : j.items()) {
    const EvalMode mode = eval_mode_from_string(name);
    out[mode] = BatchMetrics{v.at("asr").get<double>(), v.at("avg_sim").get<double>(),
                             v.at("n_pairs").get<std::size_t>(), mode};
  }
  return out;
}

PairOutcome outcome_from_json(const json& j) {
  PairOutcome p;
  p.pair = {j.at("source").get<std::string>(), j.at("target").get<std::string>(),
            j.at("pair_id").get<std::string>()};
  p.ok = j.at("ok").get<bool>();
  p.error = j.value("error", std::string{});
  p.adv_path = j.value("adv_path", std::string{});
  p.initial_loss = j.value("initial_loss", 0.0);
  p.final_loss = j.value("final_loss", 0.0);
  p.initial_sim_target = j.value("initial_sim_target", 0.0);
  p.final_sim_target = j.value("final_sim_target", 0.0);
  p.final_sim_source = j.value("final_sim_source", 0.0);
  p.linf = j.value("linf", 0.0);
  p.quantized.max_quantized_diff = j.value("quantized_linf", 0.0);
  p.quantized.max_quantized_levels = j.value("quantized_linf_levels", 0);
  p.loss_trajectory = j.value("loss_trajectory", std::vector<double>{});
  return p;
}

}  // namespace

json to_json(const PairOutcome& p) {
  json j = {{"schema_version", kSchemaVersion},
            {"pair_id", p.pair.pair_id},
            {"source", p.pair.source},
            {"target", p.pair.target},
            {"ok", p.ok}};
  if (!p.ok) {
    j["error"] = p.error;
    return j;
  }
  j["adv_path"] = p.adv_path;
  j["initial_loss"] = p.initial_loss;
  j["final_loss"] = p.final_loss;
  j["initial_sim_target"] = p.initial_sim_target;
  j["final_sim_target"] = p.final_sim_target;
  j["final_sim_source"] = p.final_sim_source;
  j["linf"] = p.linf;
  j["quantized_linf"] = p.quantized.max_quantized_diff;
  j["quantized_linf_levels"] = p.quantized.max_quantized_levels;
  j["loss_trajectory"] = p.loss_trajectory;
  if (p.eval) {
    j["evaluation"] = record_json(*p.eval);
    j["evaluation"]["adv_response"] = p.adv_response;
    j["evaluation"]["target_response"] = p.target_response;
    j["evaluation"]["source_response"] = p.source_response;
  }
  return j;
}

json to_json(const BatchReport& r) {
  json pairs = json::array();
  for (const auto& p : r.pairs) pairs.push_back(to_json(p));
  return {{"schema_version", r.schema_version},
          {"n_pairs", r.pairs.size()},
          {"failures", r.failures},
          {"unevaluated", r.unevaluated},
          {"metrics", metrics_json(r.metrics)},
          {"pairs", pairs}};
}

json load_report(const fs::path& batch_dir) { return read_json(batch_dir / "report.json"); }

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

QuantizationReport write_adversarial_image(const ImageTensor& x_adv, const ImageTensor& x_s,
                                           const fs::path& path) {
  if (x_adv.shape() != x_s.shape()) throw ValidationError("adversarial and source shapes differ");
  const auto qa = quantize(x_adv);
  const auto qs = quantize(x_s);
  int levels = 0;
  for (std::size_t i = 0; i < qa.size(); ++i) {
    levels = std::max(levels, std::abs(static_cast<int>(qa[i]) - static_cast<int>(qs[i])));
  }
  write_png(x_adv, path);
  QuantizationReport rep{levels / 255.0, levels};
  const json sidecar = {{"schema_version", kSchemaVersion},
                        {"rounding", "half_away_from_zero"},
                        {"max_quantized_diff", rep.max_quantized_diff},
                        {"max_quantized_levels", rep.max_quantized_levels}};
  write_text(fs::path(path.string() + ".json"), sidecar.dump(2) + "\n");
  return rep;
}

// ---------------------------------------------------------------------------
// Batch
// ---------------------------------------------------------------------------

namespace {

ImageTensor load_working_image(const std::string& path, int image_size) {
  ImageTensor img = read_image(path);
  if (image_size > 0 && (img.height() != image_size || img.width() != image_size)) {
    return resize_bilinear(img, image_size, image_size);
  }
  return img;
}

struct Evaluator {
  std::unique_ptr<Judge> judge;
  std::unique_ptr<VictimClient> victim;
  std::map<std::string, std::string> captions;
  RetryPolicy retry;
};

Evaluator make_evaluator(const EvaluationOptions& o) {
  Evaluator ev;
  if (o.judge == "mock") {
    ev.judge = std::make_unique<MockJudge>();
  } else if (o.judge == "chat") {
    ev.judge = std::make_unique<ChatJudge>(o.judge_backend,
                                           o.prompt_template_path.empty()
                                               ? PromptTemplate::default_template()
                                               : PromptTemplate::from_file(o.prompt_template_path));
  } else {
    throw ConfigError("unknown judge '" + o.judge + "' (mock or chat)");
  }
  if (o.victim == "mock") {
    ev.victim = std::make_unique<MockVictim>();
  } else if (o.victim == "chat") {
    ev.victim = std::make_unique<ChatVictim>(o.victim_backend, o.victim_prompt);
  } else {
    throw ConfigError("unknown victim '" + o.victim + "' (mock or chat)");
  }
  if (!o.captions_path.empty()) {
    ev.captions = read_json(o.captions_path).get<std::map<std::string, std::string>>();
  }
  ev.retry = {o.retry_attempts, std::chrono::milliseconds(o.retry_base_delay_ms)};
  return ev;
}

std::optional<std::string> describe_with_retry(const Evaluator& ev, const ImageTensor& img) {
  auto delay = ev.retry.base_delay;
  for (int attempt = 1; attempt <= std::max(1, ev.retry.attempts); ++attempt) {
    try {
      std::string s = ev.victim->describe(img);
      if (!s.empty()) return s;
      throw BackendError("victim returned an empty response");
    } catch (const BackendError& e) {
      spdlog::warn("victim attempt {}/{} failed: {}", attempt, ev.retry.attempts, e.what());
      if (attempt < ev.retry.attempts && delay.count() > 0) {
        std::this_thread::sleep_for(delay);
        delay *= 2;
      }
    }
  }
  return std::nullopt;
}

std::optional<std::string> reference_text(const Evaluator& ev, const std::string& path,
                                          const ImageTensor& img) {
  if (!ev.captions.empty()) {
    const auto it = ev.captions.find(fs::path(path).filename().string());
    if (it == ev.captions.end()) throw ValidationError("no ground-truth caption for " + path);
    return it->second;
  }
  return describe_with_retry(ev, img);
}

/// Fills the evaluation fields of an outcome; false when it stays unevaluated.
bool evaluate_outcome(PairOutcome& out, const Evaluator& ev, const ImageTensor& x_adv,
                      const ImageTensor& x_t, const ImageTensor& x_s) {
  const auto adv = describe_with_retry(ev, x_adv);
  const auto tgt = reference_text(ev, out.pair.target, x_t);
  const auto src = reference_text(ev, out.pair.source, x_s);
  if (!adv || !tgt || !src) return false;
  auto rec = evaluate_pair_with_retry(*adv, *tgt, *src, *ev.judge, out.pair.pair_id, ev.retry);
  if (!rec) return false;
  rec->final_loss = out.final_loss;
  rec->loss_trajectory = out.loss_trajectory;
  out.eval = std::move(rec);
  out.adv_response = *adv;
  out.target_response = *tgt;
  out.source_response = *src;
  return true;
}

void finalize_metrics(BatchReport& report, const std::vector<EvalMode>& modes, bool evaluated) {
  report.failures = 0;
  report.unevaluated = 0;
  report.metrics.clear();
  std::vector<EvalRecord> records;
  for (const auto& p : report.pairs) {
    if (!p.ok) {
      ++report.failures;
      continue;
    }
    if (p.eval) {
      records.push_back(*p.eval);
    } else if (evaluated) {
      ++report.unevaluated;
    }
  }
  if (!records.empty()) {
    for (EvalMode m : modes) report.metrics[m] = aggregate_metrics(records, m);
  }
}

void write_batch_outputs(const fs::path& dir, const BatchReport& report) {
  fs::create_directories(dir / "records");
  for (const auto& p : report.pairs) {
    write_text(dir / "records" / (p.pair.pair_id + ".json"), to_json(p).dump(2) + "\n");
  }
  std::ostringstream csv;
  csv << "pair_id,source,target,ok,initial_loss,final_loss,initial_sim_target,final_sim_target,"
         "final_sim_source,linf,quantized_linf,judge_sim_target,judge_sim_source,targeted_success,"
         "untargeted_success\n";
  for (const auto& p : report.pairs) {
    csv << p.pair.pair_id << ',' << p.pair.source << ',' << p.pair.target << ',' << (p.ok ? 1 : 0);
    if (p.ok) {
      csv << ',' << fmt_double(p.initial_loss) << ',' << fmt_double(p.final_loss) << ','
          << fmt_double(p.initial_sim_target) << ',' << fmt_double(p.final_sim_target) << ','
          << fmt_double(p.final_sim_source) << ',' << fmt_double(p.linf) << ','
          << fmt_double(p.quantized.max_quantized_diff);
    } else {
      csv << ",,,,,,,";
    }
    if (p.eval) {
      csv << ',' << fmt_double(p.eval->sim_adv_target) << ',' << fmt_double(p.eval->sim_adv_source)
          << ',' << (p.eval->targeted_success ? 1 : 0) << ',' << (p.eval->untargeted_success ? 1 : 0);
    } else {
      csv << ",,,,";
    }
    csv << '\n';
  }
  write_text(dir / "summary.csv", csv.str());
  write_text(dir / "report.json", to_json(report).dump(2) + "\n");
}

PairOutcome run_pair(const ImagePair& pair, const RunManifest& manifest, const EncoderSuite& suite,
                     const Evaluator* evaluator, const fs::path& out_dir) {
  PairOutcome out;
  out.pair = pair;
  try {
    const ImageTensor x_s = load_working_image(pair.source, manifest.image_size);
    const ImageTensor x_t = load_working_image(pair.target, manifest.image_size);
    if (x_s.shape() != x_t.shape()) {
      throw ValidationError("source " + x_s.shape().str() + " and target " + x_t.shape().str() +
                            " differ in size; set image_size");
    }
    AttackConfig cfg = manifest.config;
    cfg.seed = derive_seed(manifest.config.seed, pair.pair_id);
    const AttackResult res = run_attack(x_s, x_t, suite, cfg);

    const fs::path adv_path = out_dir / "adv" / (pair.pair_id + ".png");
    out.quantized = write_adversarial_image(res.x_adv, x_s, adv_path);
    out.adv_path = (fs::path("adv") / (pair.pair_id + ".png")).generic_string();
    out.initial_loss = res.initial.loss;
    out.final_loss = res.final.loss;
    out.initial_sim_target = res.initial.sim_adv_target;
    out.final_sim_target = res.final.sim_adv_target;
    out.final_sim_source = res.final.sim_adv_source;
    out.linf = (res.x_adv.pixels() - x_s.pixels()).max_abs();
    out.loss_trajectory = res.state.loss_trajectory;
    out.ok = true;
    if (evaluator != nullptr) {
      // Judge what the victim will actually receive: the persisted 8-bit image.
      const ImageTensor stored = read_image(adv_path);
      if (!evaluate_outcome(out, *evaluator, stored, x_t, x_s)) {
        spdlog::warn("pair {} could not be evaluated", pair.pair_id);
      }
    }
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
    spdlog::error("pair {} failed: {}", pair.pair_id, e.what());
  }
  return out;
}

}  // namespace

BatchReport run_batch(const RunManifest& manifest, const EncoderRegistry& registry) {
  manifest.config.validate();
  if (manifest.output_dir.empty()) throw ConfigError("manifest has no output_dir");
  if (manifest.pairing.pairs.empty()) throw ConfigError("manifest has no image pairs");
  const fs::path out_dir(manifest.output_dir);
  fs::create_directories(out_dir / "adv");
  write_text(out_dir / "manifest.json", to_json(manifest).dump(2) + "\n");

  const ImageSize size = manifest.image_size > 0
                             ? ImageSize{manifest.image_size, manifest.image_size}
                             : [&] {
                                 const ImageTensor first = read_image(manifest.pairing.pairs[0].source);
                                 return ImageSize{first.height(), first.width()};
                               }();
  const EncoderSuite shared = registry.build(manifest.encoders, size);
  shared.validate(manifest.config);
  const bool per_worker_suites = !shared.concurrent_safe();

  std::optional<Evaluator> evaluator;
  if (manifest.evaluation.enabled) evaluator = make_evaluator(manifest.evaluation);

  const auto& pairs = manifest.pairing.pairs;
  BatchReport report;
  report.pairs.resize(pairs.size());
  const int workers = std::clamp(manifest.workers, 1, static_cast<int>(pairs.size()));
  std::atomic<std::size_t> next{0};
  std::mutex build_mutex;
  auto work = [&] {
    std::optional<EncoderSuite> own;
    if (per_worker_suites) {
      std::lock_guard lock(build_mutex);
      own = registry.build(manifest.encoders, size);
    }
    const EncoderSuite& suite = own ? *own : shared;
    for (std::size_t i = next++; i < pairs.size(); i = next++) {
      report.pairs[i] = run_pair(pairs[i], manifest, suite, evaluator ? &*evaluator : nullptr, out_dir);
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  }

  finalize_metrics(report, manifest.evaluation.modes, manifest.evaluation.enabled);
  write_batch_outputs(out_dir, report);
  spdlog::info("batch finished: {} pairs, {} failed", report.pairs.size(), report.failures);
  return report;
}

BatchReport evaluate_batch(const fs::path& batch_dir, const EvaluationOptions& options,
                           int image_size) {
  const json j = load_report(batch_dir);
  BatchReport report;
  for (const auto& p : j.at("pairs")) report.pairs.push_back(outcome_from_json(p));
  const Evaluator ev = make_evaluator(options);
  for (PairOutcome& p : report.pairs) {
    if (!p.ok) continue;
    p.eval.reset();
    try {
      const ImageTensor x_adv = read_image(batch_dir / p.adv_path);
      const ImageTensor x_s = load_working_image(p.pair.source, image_size);
      const ImageTensor x_t = load_working_image(p.pair.target, image_size);
      if (!evaluate_outcome(p, ev, x_adv, x_t, x_s)) {
        spdlog::warn("pair {} could not be evaluated", p.pair.pair_id);
      }
    } catch (const ValidationError& e) {
      spdlog::error("pair {} not evaluated: {}", p.pair.pair_id, e.what());
    }
  }
  finalize_metrics(report, options.modes, true);
  write_batch_outputs(batch_dir, report);
  return report;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

std::string_view to_string(SweepParameter p) {
  switch (p) {
    case SweepParameter::kLambda: return "lambda";
    case SweepParameter::kTau: return "tau";
    case SweepParameter::kOmega: return "omega";
  }
  return "unknown";
}

SweepParameter sweep_parameter_from_string(std::string_view name) {
  if (name == "lambda") return SweepParameter::kLambda;
  if (name == "tau") return SweepParameter::kTau;
  if (name == "omega") return SweepParameter::kOmega;
  throw ConfigError("unknown sweep parameter '" + std::string(name) + "' (lambda, tau or omega)");
}

SweepReport sweep(const RunManifest& manifest, SweepParameter parameter,
                  std::span<const double> values, const EncoderRegistry& registry) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  SweepReport report{parameter, {}};
  const fs::path base(manifest.output_dir);
  fs::create_directories(base);
  for (double v : values) {
    RunManifest m = manifest;
    switch (parameter) {
      case SweepParameter::kLambda: m.config.lambda_fusion = v; break;
      case SweepParameter::kTau: m.config.tau = v; break;
      case SweepParameter::kOmega: m.config.omega = v; break;
    }
    char name[64];
    std::snprintf(name, sizeof name, "%s_%g", std::string(to_string(parameter)).c_str(), v);
    m.output_dir = (base / name).string();
    SweepRow row;
    row.value = v;
    row.output_dir = m.output_dir;
    try {
      const BatchReport br = run_batch(m, registry);
      double loss = 0.0, sim = 0.0;
      for (const auto& p : br.pairs) {
        if (!p.ok) continue;
        ++row.pairs_ok;
        loss += p.final_loss;
        sim += p.final_sim_target;
      }
      if (row.pairs_ok > 0) {
        row.mean_final_loss = loss / row.pairs_ok;
        row.mean_final_sim_target = sim / row.pairs_ok;
      }
      row.metrics = br.metrics;
    } catch (const std::exception& e) {
      spdlog::error("sweep {}={} failed: {}", to_string(parameter), v, e.what());
    }
    report.rows.push_back(std::move(row));
  }

  json rows = json::array();
  std::ostringstream csv;
  csv << "parameter,value,pairs_ok,mean_final_loss,mean_final_sim_target,targeted_asr,"
         "targeted_avg_sim,untargeted_asr,untargeted_avg_sim\n";
  for (const auto& r : report.rows) {
    rows.push_back({{"value", r.value},
                    {"output_dir", r.output_dir},
                    {"pairs_ok", r.pairs_ok},
                    {"mean_final_loss", r.mean_final_loss},
                    {"mean_final_sim_target", r.mean_final_sim_target},
                    {"metrics", metrics_json(r.metrics)}});
    csv << to_string(parameter) << ',' << fmt_double(r.value) << ',' << r.pairs_ok << ','
        << fmt_double(r.mean_final_loss) << ',' << fmt_double(r.mean_final_sim_target);
    for (EvalMode mode : {EvalMode::kTargeted, EvalMode::kUntargeted}) {
      if (auto it = r.metrics.find(mode); it != r.metrics.end()) {
        csv << ',' << fmt_double(it->second.asr) << ',' << fmt_double(it->second.avg_sim);
      } else {
        csv << ",,";
      }
    }
    csv << '\n';
  }
  write_text(base / "sweep.json",
             json{{"schema_version", kSchemaVersion},
                  {"parameter", std::string(to_string(parameter))},
                  {"rows", rows}}
                     .dump(2) +
                 "\n");
  write_text(base / "sweep.csv", csv.str());
  return report;
}

void write_plot_data(const fs::path& input_dir, const std::string& kind, const fs::path& out_csv) {
  std::ostringstream csv;
  if (kind == "sweep") {
    const json j = read_json(input_dir / "sweep.json");
    const std::string param = j.at("parameter").get<std::string>();
    csv << "parameter,value,mode,asr,avg_sim,mean_final_sim_target,mean_final_loss\n";
    for (const auto& r : j.at("rows")) {
      const auto metrics = metrics_from_json(r.at("metrics"));
      auto prefix = [&] { csv << param << ',' << fmt_double(r.at("value").get<double>()) << ','; };
      auto suffix = [&] {
        csv << ',' << fmt_double(r.at("mean_final_sim_target").get<double>()) << ','
            << fmt_double(r.at("mean_final_loss").get<double>()) << '\n';
      };
      if (metrics.empty()) {
        prefix();
        csv << "surrogate,,";
        suffix();
      }
      for (const auto& [mode, m] : metrics) {
        prefix();
        csv << to_string(mode) << ',' << fmt_double(m.asr) << ',' << fmt_double(m.avg_sim);
        suffix();
      }
    }
  } else if (kind == "loss") {
    const json j = load_report(input_dir);
    csv << "pair_id,step,loss\n";
    for (const auto& p : j.at("pairs")) {
      if (!p.at("ok").get<bool>()) continue;
      const auto traj = p.at("loss_trajectory").get<std::vector<double>>();
      for (std::size_t i = 0; i < traj.size(); ++i) {
        csv << p.at("pair_id").get<std::string>() << ',' << i << ',' << fmt_double(traj[i]) << '\n';
      }
    }
  } else {
    throw ConfigError("unknown plot-data kind '" + kind + "' (sweep or loss)");
  }
  if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
  write_text(out_csv, csv.str());
}

}  // namespace mpcattack
