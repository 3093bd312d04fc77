#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mpcattack/attack.hpp"
#include "mpcattack/harness.hpp"
#include "mpcattack/image_io.hpp"

namespace py = pybind11;
using namespace mpcattack;
using nlohmann::json;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor3 to_tensor(const Array& a) {
  if (a.ndim() != 3) throw ValidationError("expected an (H, W, C) array");
  const Shape s{static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                static_cast<int>(a.shape(2))};
  return Tensor3(s, std::vector<double>(a.data(), a.data() + a.size()));
}

ImageTensor to_image(const Array& a) {
  const Tensor3 t = to_tensor(a);
  return ImageTensor(t.shape(), t.vector());
}

Array to_array(const Tensor3& t) {
  Array out({t.height(), t.width(), t.channels()});
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

Array to_array(const ImageTensor& img) { return to_array(img.pixels()); }

py::array_t<double> vec_array(const std::vector<double>& v) {
  py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

LossReading reading_from(const std::string& s) {
  if (s == "omega_scales_positive") return LossReading::kOmegaScalesPositive;
  if (s == "literal") return LossReading::kLiteral;
  throw ConfigError("loss_reading must be omega_scales_positive or literal");
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
}

/// Lets Python classes act as surrogate encoders. forward/vjp exchange numpy
/// arrays; Python encoders are never shared across worker threads.
class PyParadigmEncoder : public ParadigmEncoder, public py::trampoline_self_life_support {
 public:
  std::size_t output_dim() const override {
    PYBIND11_OVERRIDE_PURE(std::size_t, ParadigmEncoder, output_dim);
  }
  ImageSize input_size() const override {
    py::gil_scoped_acquire gil;
    py::function f = py::get_override(static_cast<const ParadigmEncoder*>(this), "input_size");
    if (!f) throw BackendError("ParadigmEncoder subclass must implement input_size()");
    const auto hw = f().cast<std::pair<int, int>>();
    return {hw.first, hw.second};
  }
  Paradigm paradigm() const override {
    py::gil_scoped_acquire gil;
    py::function f = py::get_override(static_cast<const ParadigmEncoder*>(this), "paradigm");
    if (!f) throw BackendError("ParadigmEncoder subclass must implement paradigm()");
    return paradigm_from_string(f().cast<std::string>());
  }
  std::string name() const override { PYBIND11_OVERRIDE_PURE(std::string, ParadigmEncoder, name, ); }
  std::vector<double> forward(const Tensor3& x) const override {
    py::gil_scoped_acquire gil;
    py::function f = py::get_override(static_cast<const ParadigmEncoder*>(this), "forward");
    if (!f) throw BackendError("ParadigmEncoder subclass must implement forward()");
    const Array out = f(to_array(x));
    return {out.data(), out.data() + out.size()};
  }
  Tensor3 vjp(const Tensor3& x, std::span<const double> cotangent) const override {
    py::gil_scoped_acquire gil;
    py::function f = py::get_override(static_cast<const ParadigmEncoder*>(this), "vjp");
    if (!f) throw BackendError("ParadigmEncoder subclass must implement vjp()");
    py::array_t<double> cot(static_cast<py::ssize_t>(cotangent.size()));
    std::copy(cotangent.begin(), cotangent.end(), cot.mutable_data());
    const Array g = f(to_array(x), cot);
    return to_tensor(g);
  }
  bool concurrent_safe() const override { return false; }
};

std::shared_ptr<const ParadigmEncoder> as_const(std::shared_ptr<ParadigmEncoder> p) {
  return std::const_pointer_cast<const ParadigmEncoder>(std::move(p));
}

py::dict breakdown_dict(const LossBreakdown& b) {
  py::dict d;
  d["loss"] = b.loss;
  d["sim_adv_target"] = b.sim_adv_target;
  d["sim_adv_source"] = b.sim_adv_source;
  return d;
}

py::dict record_dict(const EvalRecord& r) {
  py::dict d;
  d["pair_id"] = r.pair_id;
  d["sim_adv_target"] = r.sim_adv_target;
  d["sim_adv_source"] = r.sim_adv_source;
  d["targeted_success"] = r.targeted_success;
  d["untargeted_success"] = r.untargeted_success;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-paradigm transferable adversarial attack toolkit";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DegenerateFeatureError>(m, "DegenerateFeatureError", PyExc_ArithmeticError);
  py::register_exception<BackendError>(m, "BackendError", PyExc_RuntimeError);

  py::class_<AttackConfig>(m, "AttackConfig")
      .def(py::init<>())
      .def_readwrite("epsilon", &AttackConfig::epsilon)
      .def_readwrite("alpha", &AttackConfig::alpha)
      .def_readwrite("iterations", &AttackConfig::iterations)
      .def_readwrite("momentum_mu", &AttackConfig::momentum_mu)
      .def_readwrite("lambda_fusion", &AttackConfig::lambda_fusion)
      .def_readwrite("tau", &AttackConfig::tau)
      .def_readwrite("omega", &AttackConfig::omega)
      .def_readwrite("crop_min_ratio", &AttackConfig::crop_min_ratio)
      .def_readwrite("crop_max_ratio", &AttackConfig::crop_max_ratio)
      .def_readwrite("crop_enabled", &AttackConfig::crop_enabled)
      .def_readwrite("crops_per_step", &AttackConfig::crops_per_step)
      .def_readwrite("seed", &AttackConfig::seed)
      .def_readwrite("text_fusion_enabled", &AttackConfig::text_fusion_enabled)
      .def_property(
          "paradigms",
          [](const AttackConfig& c) {
            std::vector<std::string> out;
            for (auto f : c.enabled_paradigms) out.emplace_back(to_string(f));
            return out;
          },
          [](AttackConfig& c, const std::vector<std::string>& names) {
            c.enabled_paradigms.clear();
            for (const auto& n : names) c.enabled_paradigms.push_back(family_from_string(n));
          })
      .def_property(
          "gradient_norm",
          [](const AttackConfig& c) { return c.gradient_norm == GradientNorm::kL1 ? "l1" : "l2"; },
          [](AttackConfig& c, const std::string& v) {
            if (v != "l1" && v != "l2") throw ConfigError("gradient_norm must be l1 or l2");
            c.gradient_norm = v == "l1" ? GradientNorm::kL1 : GradientNorm::kL2;
          })
      .def_property(
          "loss_reading",
          [](const AttackConfig& c) {
            return c.loss_reading == LossReading::kLiteral ? "literal" : "omega_scales_positive";
          },
          [](AttackConfig& c, const std::string& v) { c.loss_reading = reading_from(v); })
      .def("validate", &AttackConfig::validate)
      .def("to_json", [](const AttackConfig& c) { return to_json(c).dump(); })
      .def_static("from_json",
                  [](const std::string& text) { return attack_config_from_json(parse_json(text)); });

  py::classh<ParadigmEncoder, PyParadigmEncoder>(m, "ParadigmEncoder")
      .def(py::init<>())
      .def("output_dim", &ParadigmEncoder::output_dim)
      .def("input_size",
           [](const ParadigmEncoder& e) {
             const ImageSize s = e.input_size();
             return std::make_pair(s.height, s.width);
           })
      .def("paradigm", [](const ParadigmEncoder& e) { return std::string(to_string(e.paradigm())); })
      .def("name", &ParadigmEncoder::name)
      .def("forward",
           [](const ParadigmEncoder& e, const Array& x) { return vec_array(encode(e, to_tensor(x)).data); })
      .def("vjp", [](const ParadigmEncoder& e, const Array& x, const std::vector<double>& cot) {
        return to_array(vjp(e, to_tensor(x), cot));
      });

  m.def(
      "toy_linear_encoder",
      [](std::uint64_t seed, std::pair<int, int> size, std::size_t dim, const std::string& tag) {
        return std::shared_ptr<ParadigmEncoder>(std::make_shared<ToyLinearEncoder>(
            seed, ImageSize{size.first, size.second}, dim, paradigm_from_string(tag)));
      },
      py::arg("seed"), py::arg("input_size"), py::arg("output_dim"), py::arg("paradigm"));
  m.def(
      "toy_conv_encoder",
      [](std::uint64_t seed, std::pair<int, int> size, std::size_t dim, const std::string& tag,
         int hidden) {
        return std::shared_ptr<ParadigmEncoder>(std::make_shared<ToyConvEncoder>(
            seed, ImageSize{size.first, size.second}, dim, paradigm_from_string(tag), hidden));
      },
      py::arg("seed"), py::arg("input_size"), py::arg("output_dim"), py::arg("paradigm"),
      py::arg("hidden_channels") = 4);

  py::class_<EncoderSuite>(m, "EncoderSuite")
      .def_static(
          "from_config",
          [](const std::string& config_json, int image_size) {
            return EncoderRegistry::with_builtins().build(
                config_json.empty() ? default_encoder_config() : parse_json(config_json),
                {image_size, image_size});
          },
          py::arg("config_json") = "", py::arg("image_size") = 224)
      .def_static(
          "from_encoders",
          [](const std::vector<std::shared_ptr<ParadigmEncoder>>& cross_modal,
             const std::vector<std::shared_ptr<ParadigmEncoder>>& multimodal,
             const std::vector<std::shared_ptr<ParadigmEncoder>>& self_supervised) {
            EncoderSuite s;
            for (auto& e : cross_modal) s.cross_modal.push_back({as_const(e), nullptr});
            for (auto& e : multimodal) s.multimodal.push_back(as_const(e));
            for (auto& e : self_supervised) s.self_supervised.push_back(as_const(e));
            return s;
          },
          py::arg("cross_modal") = std::vector<std::shared_ptr<ParadigmEncoder>>{},
          py::arg("multimodal") = std::vector<std::shared_ptr<ParadigmEncoder>>{},
          py::arg("self_supervised") = std::vector<std::shared_ptr<ParadigmEncoder>>{})
      .def("validate", &EncoderSuite::validate)
      .def("num_encoders", [](const EncoderSuite& s, const AttackConfig& cfg) {
        return s.active(cfg).size();
      });

  m.def(
      "contrastive_loss",
      [](double sim_t, double sim_s, double tau, double omega, const std::string& reading) {
        return contrastive_loss(sim_t, sim_s, LossParams{tau, omega, reading_from(reading)});
      },
      py::arg("sim_target"), py::arg("sim_source"), py::arg("tau") = 0.2, py::arg("omega") = 2.0,
      py::arg("reading") = "omega_scales_positive");
  m.def(
      "loss_partials",
      [](double sim_t, double sim_s, double tau, double omega, const std::string& reading) {
        const auto p = loss_partials(sim_t, sim_s, LossParams{tau, omega, reading_from(reading)});
        return std::make_pair(p.d_sim_target, p.d_sim_source);
      },
      py::arg("sim_target"), py::arg("sim_source"), py::arg("tau") = 0.2, py::arg("omega") = 2.0,
      py::arg("reading") = "omega_scales_positive");
  m.def(
      "cosine_sim",
      [](const std::vector<double>& a, const std::vector<double>& b) { return cosine_sim(a, b); });
  m.def(
      "aggregate",
      [](const std::vector<std::pair<std::vector<double>, std::string>>& blocks) {
        std::vector<FeatureVector> fv;
        for (const auto& [v, tag] : blocks) fv.emplace_back(v, paradigm_from_string(tag));
        const AggregatedFeature agg = aggregate(std::move(fv));
        std::vector<std::string> tags;
        for (const auto& b : agg.blocks) tags.emplace_back(to_string(b.paradigm));
        return std::make_pair(vec_array(agg.flat()), tags);
      },
      "Per-block L2 normalisation and concatenation in canonical paradigm order; returns "
      "(flat vector, block paradigm tags).");
  m.def(
      "fuse_cross_modal",
      [](const std::vector<double>& image, std::optional<std::vector<double>> text, double lambda) {
        std::optional<FeatureVector> t;
        if (text) t = FeatureVector(*text, Paradigm::kCrossModalText);
        const auto out = fuse_cross_modal(FeatureVector(image, Paradigm::kCrossModalImage), t,
                                          FusionSpec{lambda, true});
        return vec_array(out.data);
      },
      py::arg("image"), py::arg("text"), py::arg("lambda_fusion") = 0.6);
  m.def(
      "project_linf",
      [](const Array& delta, double eps) { return to_array(project_linf(to_tensor(delta), eps).values()); });
  m.def("clamp_image", [](const Array& x) { return to_array(clamp_image(to_tensor(x))); });
  m.def(
      "sample_crop",
      [](std::uint64_t seed, int h, int w, double min_ratio, double max_ratio) {
        Rng rng(seed);
        const CropWindow c = CropTransform(min_ratio, max_ratio).sample(rng, h, w);
        return py::make_tuple(c.top, c.left, c.height, c.width);
      },
      py::arg("seed"), py::arg("height"), py::arg("width"), py::arg("min_ratio") = 0.5,
      py::arg("max_ratio") = 1.0);
  m.def("resize_bilinear", [](const Array& x, int h, int w) {
    return to_array(resize_bilinear(to_tensor(x), h, w));
  });

  m.def(
      "run_attack",
      [](const Array& x_s, const Array& x_t, const EncoderSuite& suite, const AttackConfig& cfg,
         std::function<void(int, double, double)> on_step) {
        const ImageTensor src = to_image(x_s);
        const ImageTensor tgt = to_image(x_t);
        StepObserver observer;
        if (on_step) {
          observer = [&on_step](const StepRecord& r) {
            py::gil_scoped_acquire gil;
            on_step(r.iteration, r.breakdown.loss, r.breakdown.sim_adv_target);
          };
        }
        std::optional<AttackResult> res;
        {
          py::gil_scoped_release release;
          res.emplace(run_attack(src, tgt, suite, cfg, observer));
        }
        py::dict d;
        d["delta"] = to_array(res->delta.values());
        d["x_adv"] = to_array(res->x_adv);
        d["loss_trajectory"] = res->state.loss_trajectory;
        d["sim_target_trajectory"] = res->state.sim_target_trajectory;
        d["initial"] = breakdown_dict(res->initial);
        d["final"] = breakdown_dict(res->final);
        return d;
      },
      py::arg("x_source"), py::arg("x_target"), py::arg("suite"), py::arg("config"),
      py::arg("on_step") = nullptr);

  m.def(
      "mock_judge",
      [](const std::string& a, const std::string& b) { return MockJudge{}.score(a, b); });
  m.def("mock_victim", [](const Array& x) { return MockVictim{}.describe(to_image(x)); });
  m.def(
      "evaluate_pair",
      [](const std::string& adv, const std::string& tgt, const std::string& src,
         const std::string& pair_id) { return record_dict(evaluate_pair(adv, tgt, src, MockJudge{}, pair_id)); },
      py::arg("adv_response"), py::arg("target_response"), py::arg("source_response"),
      py::arg("pair_id") = "",
      "Mock-judge evaluation with the strict 0.5 thresholds.");
  m.def(
      "eval_record",
      [](double sim_t, double sim_s) { return record_dict(EvalRecord::make("", sim_t, sim_s)); });
  m.def(
      "aggregate_metrics",
      [](const std::vector<std::pair<double, double>>& sims, const std::string& mode) {
        std::vector<EvalRecord> recs;
        for (const auto& [t, s] : sims) recs.push_back(EvalRecord::make("", t, s));
        const auto bm = aggregate_metrics(recs, eval_mode_from_string(mode));
        return py::make_tuple(bm.asr, bm.avg_sim, bm.n_pairs);
      },
      py::arg("sims"), py::arg("mode"),
      "sims: list of (sim_adv_target, sim_adv_source); returns (ASR, AvgSim, n).");

  m.def(
      "build_pairing",
      [](const std::filesystem::path& dir, const std::string& policy,
         const std::filesystem::path& manifest) {
        const PairingPlan plan = build_pairing(dir, pairing_policy_from_string(policy), manifest);
        std::vector<std::tuple<std::string, std::string, std::string>> pairs;
        for (const auto& p : plan.pairs) pairs.emplace_back(p.source, p.target, p.pair_id);
        py::dict d;
        d["pairs"] = pairs;
        d["skipped"] = plan.skipped;
        d["warnings"] = plan.warnings;
        return d;
      },
      py::arg("image_dir"), py::arg("policy") = "reverse_order",
      py::arg("manifest") = std::filesystem::path{});
  m.def("pair_reverse_order", [](const std::vector<std::string>& files) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& p : pair_reverse_order(files).pairs) out.emplace_back(p.source, p.target);
    return out;
  });
  m.def(
      "run_batch",
      [](const std::string& manifest_json) {
        const RunManifest manifest = manifest_from_json(parse_json(manifest_json));
        BatchReport rep;
        {
          py::gil_scoped_release release;
          rep = run_batch(manifest);
        }
        return to_json(rep).dump();
      },
      "Runs a batch from a manifest JSON string and returns the report JSON string.");
  m.def(
      "default_encoder_config", [] { return default_encoder_config().dump(); });

  m.def("read_image", [](const std::filesystem::path& p) { return to_array(read_image(p)); });
  m.def("write_png", [](const Array& x, const std::filesystem::path& p) { write_png(to_image(x), p); });
  m.def("quantize", [](const Array& x) {
    const auto q = quantize(to_image(x));
    py::array_t<std::uint8_t> out({x.shape(0), x.shape(1), x.shape(2)});
    std::copy(q.begin(), q.end(), out.mutable_data());
    return out;
  });
  m.def(
      "write_adversarial_image",
      [](const Array& x_adv, const Array& x_s, const std::filesystem::path& p) {
        const auto rep = write_adversarial_image(to_image(x_adv), to_image(x_s), p);
        return py::make_tuple(rep.max_quantized_diff, rep.max_quantized_levels);
      });

  m.attr("SCHEMA_VERSION") = kSchemaVersion;
  m.attr("SUCCESS_THRESHOLD") = kSuccessThreshold;
}
