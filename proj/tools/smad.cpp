// smad: command-line front end.
//   exit 0 success, 1 usage error, 2 runtime error.

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "smad/cli/run_config.hpp"
#include "smad/common/error.hpp"
#include "smad/dsp/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using smad::cli::RunConfig;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flags that override config fields when given on the command line.
class Overrides {
 public:
  explicit Overrides(CLI::App* app) : app_(app) {}

  template <typename Get>
  CLI::Option* add(const std::string& name, Get get, const std::string& desc) {
    using T = std::remove_reference_t<decltype(get(defaults_))>;
    auto value = std::make_shared<T>(get(defaults_));
    auto* opt = app_->add_option(name, *value, desc)->capture_default_str();
    apply_.push_back([opt, value, get](RunConfig& c) {
      if (opt->count() > 0) get(c) = *value;
    });
    return opt;
  }

  // Enumerations travel as their names.
  template <typename Get, typename Parse, typename Name>
  CLI::Option* add_enum(const std::string& name, Get get, Parse parse, Name to_name, const std::string& desc) {
    auto value = std::make_shared<std::string>(to_name(get(defaults_)));
    auto* opt = app_->add_option(name, *value, desc)->capture_default_str();
    apply_.push_back([opt, value, get, parse, name](RunConfig& c) {
      if (opt->count() == 0) return;
      try {
        get(c) = parse(*value);
      } catch (const smad::Error&) {
        throw UsageError(name + ": unknown value '" + *value + "'");
      }
    });
    return opt;
  }

  void config_option() {
    app_->add_option("--config", config_path_, "run config JSON; flags override its fields");
  }

  RunConfig resolve() const {
    RunConfig c = config_path_.empty() ? RunConfig{} : smad::cli::load_run_config(config_path_);
    for (const auto& f : apply_) f(c);
    c.validate();
    return c;
  }

 private:
  CLI::App* app_;
  RunConfig defaults_;
  std::string config_path_;
  std::vector<std::function<void(RunConfig&)>> apply_;
};

const CLI::Validator kAtLeastOne(
    [](std::string& s) -> std::string {
      long long v = 0;
      try {
        std::size_t used = 0;
        v = std::stoll(s, &used);
        if (used != s.size()) return "'" + s + "' is not an integer";
      } catch (const std::exception&) {
        return "'" + s + "' is not an integer";
      }
      return v >= 1 ? std::string() : "must be at least 1, got " + s;
    },
    ">=1");

void data_flags(Overrides& o) {
  o.add("--data", [](RunConfig& c) -> auto& { return c.data_dir; }, "dataset directory (holds manifest.json)");
}

void dsp_flags(Overrides& o) {
  o.add("--crops", [](RunConfig& c) -> auto& { return c.train.crops; }, "crops per recording")
      ->check(kAtLeastOne);
}

void train_flags(Overrides& o) {
  o.add_enum("--variant", [](RunConfig& c) -> auto& { return c.train.variant; }, smad::translator::parse_variant,
             smad::translator::variant_name, "translator backbone: cnn | cnn_attention");
  o.add("--epochs", [](RunConfig& c) -> auto& { return c.train.epochs; }, "training epochs")
      ->check(kAtLeastOne);
  o.add("--lr", [](RunConfig& c) -> auto& { return c.train.lr; }, "Adam learning rate")->check(CLI::PositiveNumber);
  o.add("--batch", [](RunConfig& c) -> auto& { return c.train.batch; }, "crops per step (one subject per step)")
      ->check(kAtLeastOne);
  o.add("--seed", [](RunConfig& c) -> auto& { return c.train.seed; }, "training seed");
  dsp_flags(o);
}

void detector_flags(Overrides& o) {
  o.add("--nu", [](RunConfig& c) -> auto& { return c.detector.svm.nu; }, "one-class SVM nu")
      ->check(CLI::Range(0.0, 1.0));
  o.add_enum("--features", [](RunConfig& c) -> auto& { return c.detector.features; },
             smad::detector::parse_feature_mode, smad::detector::feature_mode_name,
             "detector features: reconstruction | raw");
  o.add_enum("--aggregation", [](RunConfig& c) -> auto& { return c.detector.aggregation; },
             smad::detector::parse_aggregation, smad::detector::aggregation_name, "crop aggregation: median | mean");
}

void write_run_manifest(const fs::path& dir, const std::string& command, const std::vector<std::string>& argv,
                        const RunConfig* cfg, const json& extra) {
  json j{{"version", smad::eval::version_string()}, {"command", command}, {"argv", argv}};
  if (cfg) {
    j["config"] = smad::cli::run_config_json(*cfg);
    j["seeds"] = {{"data", cfg->data_seed}, {"train", cfg->train.seed}, {"griffin_lim", cfg->train.seed}};
  }
  for (const auto& [k, v] : extra.items()) j[k] = v;
  std::error_code ec;
  fs::create_directories(dir, ec);
  smad::eval::write_text(dir / "run_manifest.json", j.dump(2) + "\n");
}

fs::path parent_or_dot(const fs::path& p) { return p.has_parent_path() ? p.parent_path() : fs::path("."); }

smad::synth::Manifest manifest_for(const RunConfig& cfg, const std::string& override_path) {
  const fs::path p = override_path.empty() ? cfg.manifest_path() : fs::path(override_path);
  return smad::synth::read_manifest(p);
}

std::vector<const smad::translator::Example*> healthy_of(const std::vector<smad::translator::Example>& xs) {
  std::vector<const smad::translator::Example*> out;
  for (const auto& e : xs) {
    if (e.label == smad::synth::Label::Healthy) out.push_back(&e);
  }
  return out;
}

void log(const std::string& msg) { std::cerr << msg << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Speech motion anomaly detection: synthetic corpus, translator, detector, evaluation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus and its manifest");
  Overrides synth_o(synth);
  synth_o.config_option();
  synth_o.add("--out", [](RunConfig& c) -> auto& { return c.data_dir; }, "output directory");
  synth_o.add("--healthy", [](RunConfig& c) -> auto& { return c.healthy; }, "healthy subjects")
      ->check(kAtLeastOne);
  synth_o.add("--patients", [](RunConfig& c) -> auto& { return c.patients; }, "patient subjects");
  synth_o.add("--severity", [](RunConfig& c) -> auto& { return c.severity; }, "patient anomaly severity");
  synth_o.add("--seed", [](RunConfig& c) -> auto& { return c.data_seed; }, "corpus seed");

  // train
  auto* train = app.add_subcommand("train", "train a translator on the healthy subjects of a manifest");
  Overrides train_o(train);
  train_o.config_option();
  data_flags(train_o);
  train_flags(train_o);
  std::string train_out;
  train->add_option("--out", train_out, "checkpoint path")->default_str("<out_dir>/translator.anck");

  // translate
  auto* translate = app.add_subcommand("translate", "predict a mel-spectrogram from one motion file");
  Overrides translate_o(translate);
  translate_o.config_option();
  std::string tr_ckpt, tr_motion, tr_out, tr_wav;
  translate->add_option("--checkpoint", tr_ckpt, "translator checkpoint")->required();
  translate->add_option("--motion", tr_motion, "motion field file")->required();
  translate->add_option("--out", tr_out, "output spectrogram file")->required();
  translate->add_option("--wav", tr_wav, "also write a Griffin-Lim waveform here")->default_str("(none)");
  translate_o.add("--gl-iterations", [](RunConfig& c) -> auto& { return c.griffin_lim_iterations; },
                  "Griffin-Lim iterations")->check(CLI::NonNegativeNumber);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "per-crop Corr2D, LSD and pesq_lite over a manifest");
  Overrides evaluate_o(evaluate);
  evaluate_o.config_option();
  data_flags(evaluate_o);
  dsp_flags(evaluate_o);
  std::string ev_ckpt, ev_out;
  evaluate->add_option("--checkpoint", ev_ckpt, "translator checkpoint")->required();
  evaluate->add_option("--out", ev_out, "metrics CSV")->default_str("<out_dir>/metrics.csv");

  // detect
  auto* detect = app.add_subcommand(
      "detect", "fit a one-class SVM on the manifest's healthy subjects (or load one) and score every subject");
  Overrides detect_o(detect);
  detect_o.config_option();
  data_flags(detect_o);
  dsp_flags(detect_o);
  detector_flags(detect_o);
  std::string dt_ckpt, dt_svm, dt_out;
  detect->add_option("--checkpoint", dt_ckpt, "translator checkpoint")->required();
  detect->add_option("--svm", dt_svm, "score with this saved detector instead of fitting one")
      ->default_str("(fit)");
  detect->add_option("--out", dt_out, "output directory")->default_str("<out_dir>");

  // loo
  auto* loo = app.add_subcommand("loo", "leave-one-subject-out protocol; writes metrics, scores, summary and ROC");
  Overrides loo_o(loo);
  loo_o.config_option();
  data_flags(loo_o);
  train_flags(loo_o);
  detector_flags(loo_o);
  loo_o.add_enum("--svm-fit", [](RunConfig& c) -> auto& { return c.detector.fit; }, smad::eval::parse_svm_fit,
                 smad::eval::svm_fit_name, "SVM training points: cross_fit | held_out | in_sample");
  loo_o.add("--jobs", [](RunConfig& c) -> auto& { return c.jobs; }, "parallel rounds")->check(kAtLeastOne);
  loo_o.add("--out", [](RunConfig& c) -> auto& { return c.out_dir; }, "run directory");
  std::vector<std::string> loo_variants;
  loo->add_option("--backbones", loo_variants, "run several backbones into one report (overrides --variant)")
      ->default_str("(train.variant)");

  // report
  auto* report = app.add_subcommand("report", "re-render outputs from saved report JSON files");
  std::vector<std::string> rp_inputs;
  std::string rp_out;
  report->add_option("--input", rp_inputs, "report.json written by loo (repeatable)")->required();
  report->add_option("--out", rp_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) {
      const RunConfig cfg = synth_o.resolve();
      const auto manifest = smad::synth::make_dataset(cfg.synth_config(), cfg.data_dir);
      write_run_manifest(cfg.data_dir, "synth", args, &cfg, {{"subjects", manifest.entries.size()}});
      log("wrote " + std::to_string(manifest.count(smad::synth::Label::Healthy)) + " healthy and " +
          std::to_string(manifest.count(smad::synth::Label::Patient)) + " patient subjects to " + cfg.data_dir);
    } else if (train->parsed()) {
      const RunConfig cfg = train_o.resolve();
      const auto examples = smad::translator::load_examples(manifest_for(cfg, ""), cfg.train.crops, cfg.mel);
      auto model = smad::translator::init_model(cfg.train.variant, cfg.model_config(), cfg.train.seed);
      const auto history = smad::translator::train(model, healthy_of(examples), cfg.train,
                                                   [&](std::size_t epoch, double loss) {
                                                     if (epoch % 10 == 0 || epoch + 1 == cfg.train.epochs) {
                                                       char buf[64];
                                                       std::snprintf(buf, sizeof buf, "epoch %zu loss %.6f",
                                                                     epoch + 1, loss);
                                                       log(buf);
                                                     }
                                                   });
      const fs::path out = train_out.empty() ? fs::path(cfg.out_dir) / "translator.anck" : fs::path(train_out);
      std::error_code ec;
      fs::create_directories(parent_or_dot(out), ec);
      smad::translator::save_checkpoint(model, out);
      write_run_manifest(parent_or_dot(out), "train", args, &cfg,
                         {{"checkpoint", out.string()}, {"loss", history.loss}});
    } else if (translate->parsed()) {
      const RunConfig cfg = translate_o.resolve();
      const auto model = smad::translator::load_checkpoint(tr_ckpt);
      const auto pred = smad::translator::predict(model, smad::synth::read_motion(tr_motion), cfg.mel);
      smad::dsp::write_spectrogram(tr_out, pred);
      if (!tr_wav.empty()) {
        smad::dsp::write_wav(tr_wav, smad::dsp::invert_mel(pred, cfg.griffin_lim_iterations, cfg.train.seed));
      }
      write_run_manifest(parent_or_dot(tr_out), "translate", args, &cfg,
                         {{"checkpoint", tr_ckpt}, {"motion", tr_motion}});
    } else if (evaluate->parsed()) {
      const RunConfig cfg = evaluate_o.resolve();
      const auto model = smad::translator::load_checkpoint(ev_ckpt);
      const auto examples = smad::translator::load_examples(manifest_for(cfg, ""), cfg.train.crops, cfg.mel);
      const auto loo_cfg = cfg.loo_config();
      std::vector<smad::metrics::MetricRow> rows;
      for (const auto& ex : examples) {
        const auto s = smad::eval::evaluate_subject(smad::translator::predict(model, ex.input, cfg.mel), ex, loo_cfg);
        for (std::size_t k = 0; k < s.crops.size(); ++k) rows.push_back({ex.subject_id, k, s.crops[k]});
      }
      const fs::path out = ev_out.empty() ? fs::path(cfg.out_dir) / "metrics.csv" : fs::path(ev_out);
      std::error_code ec;
      fs::create_directories(parent_or_dot(out), ec);
      smad::metrics::write_metrics_csv(rows, out);
      write_run_manifest(parent_or_dot(out), "evaluate", args, &cfg, {{"checkpoint", ev_ckpt}});
    } else if (detect->parsed()) {
      const RunConfig cfg = detect_o.resolve();
      const auto model = smad::translator::load_checkpoint(dt_ckpt);
      const auto examples = smad::translator::load_examples(manifest_for(cfg, ""), cfg.train.crops, cfg.mel);
      std::vector<std::vector<smad::detector::FeatureVector>> feats;
      for (const auto& ex : examples) {
        feats.push_back(smad::eval::crop_features(smad::translator::predict(model, ex.input, cfg.mel), ex,
                                                  cfg.detector.features));
      }
      const fs::path out = dt_out.empty() ? fs::path(cfg.out_dir) : fs::path(dt_out);
      std::error_code ec;
      fs::create_directories(out, ec);
      smad::detector::OcSvmModel svm;
      if (dt_svm.empty()) {
        std::vector<smad::detector::FeatureVector> xs;
        for (std::size_t i = 0; i < examples.size(); ++i) {
          if (examples[i].label == smad::synth::Label::Healthy) xs.insert(xs.end(), feats[i].begin(), feats[i].end());
        }
        svm = smad::detector::fit_ocsvm(xs, cfg.detector.svm);
        smad::detector::save_model(svm, out / "ocsvm.anck");
      } else {
        svm = smad::detector::load_model(dt_svm);
      }
      std::string csv = "subject_id,label,anomaly\n";
      for (std::size_t i = 0; i < examples.size(); ++i) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.9f",
                      smad::detector::score_subject(svm, feats[i], cfg.detector.aggregation));
        csv += examples[i].subject_id + "," + smad::synth::label_name(examples[i].label) + "," + buf + "\n";
      }
      smad::eval::write_text(out / "detect.csv", csv);
      write_run_manifest(out, "detect", args, &cfg, {{"checkpoint", dt_ckpt}, {"svm", dt_svm.empty() ? "fit" : dt_svm}});
    } else if (loo->parsed()) {
      const RunConfig cfg = loo_o.resolve();
      std::vector<smad::translator::Variant> variants{cfg.train.variant};
      if (!loo_variants.empty()) {
        variants.clear();
        for (const auto& v : loo_variants) {
          try {
            variants.push_back(smad::translator::parse_variant(v));
          } catch (const smad::Error&) {
            throw UsageError("--backbones: unknown value '" + v + "'");
          }
        }
      }
      if (!fs::exists(cfg.manifest_path())) {
        log("no manifest at " + cfg.manifest_path().string() + "; synthesizing the corpus from the data section");
        smad::synth::make_dataset(cfg.synth_config(), cfg.data_dir);
      }
      const auto manifest = smad::synth::read_manifest(cfg.manifest_path());
      const auto examples = smad::translator::load_examples(manifest, cfg.train.crops, cfg.mel);
      std::vector<smad::eval::EvaluationReport> reports;
      for (const auto v : variants) {
        auto loo_cfg = cfg.loo_config();
        loo_cfg.train.variant = v;
        reports.push_back(smad::eval::loo_protocol(examples, loo_cfg, [&](const smad::eval::RoundResult& r) {
          char buf[160];
          std::snprintf(buf, sizeof buf, "[%s] round %zu (%s) loss %.5f -> %.5f, %.1f s",
                        smad::translator::variant_name(v), r.index, r.held_out.c_str(), r.first_loss,
                        r.final_loss, r.train_seconds);
          log(buf);
        }));
        const auto& r = reports.back();
        char buf[200];
        std::snprintf(buf, sizeof buf, "[%s] healthy corr2d %.4f, patient corr2d %.4f, SVM AUC %.4f, threshold AUC %.4f",
                      r.variant.c_str(), r.healthy.corr2d_mean, r.patient.corr2d_mean, r.pooled_auc, r.threshold_auc);
        log(buf);
      }
      smad::eval::render_report(reports, cfg.out_dir);
      std::vector<std::string> names;
      for (const auto v : variants) names.push_back(smad::translator::variant_name(v));
      write_run_manifest(cfg.out_dir, "loo", args, &cfg,
                         {{"manifest", cfg.manifest_path().string()}, {"backbones", names}});
    } else if (report->parsed()) {
      std::vector<smad::eval::EvaluationReport> reports;
      for (const auto& in : rp_inputs) {
        std::ifstream f(in);
        if (!f) throw smad::Error("cli", smad::ErrorCode::IoError, "cannot read " + in);
        json j;
        try {
          j = json::parse(f);
        } catch (const json::parse_error& e) {
          throw smad::Error("eval", smad::ErrorCode::BadConfig, in + ": " + e.what());
        }
        if (j.is_array()) {
          for (const auto& r : j) reports.push_back(smad::eval::report_from_json(r));
        } else {
          reports.push_back(smad::eval::report_from_json(j));
        }
      }
      smad::eval::render_report(reports, rp_out);
      json configs = json::array();
      for (const auto& r : reports) configs.push_back(r.config);
      write_run_manifest(rp_out, "report", args, nullptr, {{"inputs", rp_inputs}, {"report_configs", configs}});
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const smad::Error& e) {
    if (e.module() == "cli" && e.code() == smad::ErrorCode::BadConfig) {
      std::cerr << "usage error: " << e.what() << '\n';
      return 1;
    }
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
