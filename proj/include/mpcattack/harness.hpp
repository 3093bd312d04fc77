#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpcattack/core.hpp"
#include "mpcattack/evaluation.hpp"
#include "mpcattack/registry.hpp"

namespace mpcattack {

inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Pairing
// ---------------------------------------------------------------------------

enum class PairingPolicy : std::uint8_t { kReverseOrder, kExplicitManifest };

std::string_view to_string(PairingPolicy p);
PairingPolicy pairing_policy_from_string(std::string_view name);

struct ImagePair {
  std::string source;
  std::string target;
  std::string pair_id;
  friend bool operator==(const ImagePair&, const ImagePair&) = default;
};

struct PairingPlan {
  std::vector<ImagePair> pairs;
  PairingPolicy policy = PairingPolicy::kReverseOrder;
  /// Files that could not be decoded, with the reason.
  std::vector<std::string> skipped;
  std::vector<std::string> warnings;
};

/// Reverse-order pairing over an already sorted list: source[i] -> target[n-1-i].
/// The middle element of an odd-length list would pair with itself and is
/// left out with a warning.
PairingPlan pair_reverse_order(const std::vector<std::string>& sorted_files);

/// Lists PNG/JPEG files of `image_dir` in lexicographic order, drops
/// unreadable ones into the skip report and pairs the rest.
/// kExplicitManifest reads `manifest_csv` (source,target[,pair_id] per line,
/// paths relative to image_dir). Throws ValidationError when fewer than two
/// readable images remain.
PairingPlan build_pairing(const std::filesystem::path& image_dir,
                          PairingPolicy policy = PairingPolicy::kReverseOrder,
                          const std::filesystem::path& manifest_csv = {});

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

struct EvaluationOptions {
  bool enabled = false;
  std::string judge = "mock";   // mock | chat
  std::string victim = "mock";  // mock | chat
  std::vector<EvalMode> modes = {EvalMode::kTargeted, EvalMode::kUntargeted};
  ChatBackendConfig judge_backend;
  ChatBackendConfig victim_backend;
  std::string victim_prompt = std::string(kDefaultVictimPrompt);
  std::string prompt_template_path;  // empty: built-in template
  /// JSON object {file name: caption}; when set, captions replace victim
  /// responses for source and target images.
  std::string captions_path;
  int retry_attempts = 3;
  int retry_base_delay_ms = 500;
};

struct RunManifest {
  int schema_version = kSchemaVersion;
  AttackConfig config;
  std::string image_dir;
  PairingPlan pairing;
  std::string output_dir;
  nlohmann::json encoders = default_encoder_config();
  /// Square working resolution applied on load (0 keeps the file size).
  int image_size = 224;
  int workers = 1;
  EvaluationOptions evaluation;
};

nlohmann::json to_json(const AttackConfig& cfg);
AttackConfig attack_config_from_json(const nlohmann::json& j, AttackConfig base = {});
nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

struct QuantizationReport {
  /// max |q(x_adv) - q(x_s)| / 255 over all elements.
  double max_quantized_diff = 0.0;
  int max_quantized_levels = 0;
};

/// Writes x_adv as an 8-bit PNG and a "<path>.json" sidecar with the budget
/// measured after quantisation against the quantised source.
QuantizationReport write_adversarial_image(const ImageTensor& x_adv, const ImageTensor& x_s,
                                           const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Batch
// ---------------------------------------------------------------------------

struct PairOutcome {
  ImagePair pair;
  bool ok = false;
  std::string error;
  std::string adv_path;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double initial_sim_target = 0.0;
  double final_sim_target = 0.0;
  double final_sim_source = 0.0;
  double linf = 0.0;
  QuantizationReport quantized;
  std::vector<double> loss_trajectory;
  std::optional<EvalRecord> eval;
  std::string adv_response;
  std::string target_response;
  std::string source_response;
};

struct BatchReport {
  int schema_version = kSchemaVersion;
  std::vector<PairOutcome> pairs;
  std::size_t failures = 0;
  std::size_t unevaluated = 0;
  std::map<EvalMode, BatchMetrics> metrics;
};

nlohmann::json to_json(const PairOutcome& p);
nlohmann::json to_json(const BatchReport& r);

/// Runs every pair of the manifest (pair-level worker pool, per-pair RNG
/// streams), persists adversarial PNGs, per-pair JSON records, summary.csv
/// and report.json under output_dir, and optionally evaluates.
BatchReport run_batch(const RunManifest& manifest,
                      const EncoderRegistry& registry = EncoderRegistry::with_builtins());

/// Re-evaluates the records of a finished batch directory with the given
/// victim and judge; writes eval.json and metrics into it.
BatchReport evaluate_batch(const std::filesystem::path& batch_dir, const EvaluationOptions& options,
                           int image_size);

/// Loads report.json of a batch directory.
nlohmann::json load_report(const std::filesystem::path& batch_dir);

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

enum class SweepParameter : std::uint8_t { kLambda, kTau, kOmega };

std::string_view to_string(SweepParameter p);
SweepParameter sweep_parameter_from_string(std::string_view name);

struct SweepRow {
  double value = 0.0;
  std::string output_dir;
  std::size_t pairs_ok = 0;
  double mean_final_loss = 0.0;
  double mean_final_sim_target = 0.0;
  std::map<EvalMode, BatchMetrics> metrics;
};

struct SweepReport {
  SweepParameter parameter = SweepParameter::kLambda;
  std::vector<SweepRow> rows;
};

/// One run_batch per value with only `parameter` changed. Writes sweep.json
/// and sweep.csv (value, ASR, AvgSim per mode) into manifest.output_dir.
SweepReport sweep(const RunManifest& manifest, SweepParameter parameter,
                  std::span<const double> values,
                  const EncoderRegistry& registry = EncoderRegistry::with_builtins());

/// CSV for figures: "sweep" reads sweep.json, "loss" reads report.json and
/// emits per-step loss trajectories.
void write_plot_data(const std::filesystem::path& input_dir, const std::string& kind,
                     const std::filesystem::path& out_csv);

}  // namespace mpcattack
