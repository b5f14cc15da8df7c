#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "smad/common/error.hpp"
#include "smad/eval/eval.hpp"

#ifndef SMAD_VERSION
#define SMAD_VERSION "0.0.0-unknown"
#endif

namespace smad::eval {

using nlohmann::json;

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

// Sample standard deviation; zero for a single value.
void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  mean = 0.0;
  sd = 0.0;
  if (v.empty()) return;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return;
  for (double x : v) sd += (x - mean) * (x - mean);
  sd = std::sqrt(sd / static_cast<double>(v.size() - 1));
}

CohortStats cohort(const std::vector<double>& corr, const std::vector<double>& pesq) {
  CohortStats c;
  c.n = corr.size();
  mean_std(corr, c.corr2d_mean, c.corr2d_std);
  mean_std(pesq, c.pesq_mean, c.pesq_std);
  return c;
}

json svm_json(const SvmSummary& s) {
  return {{"n", s.n},         {"support", s.support},       {"outliers", s.outliers},
          {"rho", s.rho},     {"gamma", s.gamma},           {"kkt_violation", s.kkt_violation},
          {"updates", s.updates}, {"nu_property", s.nu_property}};
}

SvmSummary svm_from_json(const json& j) {
  SvmSummary s;
  s.n = j.at("n");
  s.support = j.at("support");
  s.outliers = j.at("outliers");
  s.rho = j.at("rho");
  s.gamma = j.at("gamma");
  s.kkt_violation = j.at("kkt_violation");
  s.updates = j.at("updates");
  s.nu_property = j.at("nu_property");
  return s;
}

json cohort_json(const CohortStats& c) {
  return {{"n", c.n},
          {"corr2d_mean", c.corr2d_mean},
          {"corr2d_std", c.corr2d_std},
          {"pesq_lite_mean", c.pesq_mean},
          {"pesq_lite_std", c.pesq_std}};
}

}  // namespace

void summarize(EvaluationReport& report) {
  std::vector<double> hc, hp, pc, pp, anomaly, threshold, ridge, ridge_h, ridge_p;
  std::vector<synth::Label> labels;
  std::map<std::string, std::vector<double>> per_patient;
  std::vector<RocCurve> curves;
  report.round_auc.clear();
  std::sort(report.rounds.begin(), report.rounds.end(),
            [](const RoundResult& a, const RoundResult& b) { return a.index < b.index; });
  for (const auto& r : report.rounds) {
    std::vector<double> rs;
    std::vector<synth::Label> rl;
    for (const auto& s : r.subjects) {
      const bool healthy = s.label == synth::Label::Healthy;
      (healthy ? hc : pc).push_back(s.corr2d);
      (healthy ? hp : pp).push_back(s.pesq_lite);
      (healthy ? ridge_h : ridge_p).push_back(s.ridge_corr2d);
      if (!healthy) per_patient[s.subject_id].push_back(s.anomaly);
      anomaly.push_back(s.anomaly);
      threshold.push_back(s.threshold);
      ridge.push_back(s.ridge_anomaly);
      labels.push_back(s.label);
      rs.push_back(s.anomaly);
      rl.push_back(s.label);
    }
    curves.push_back(roc(rs, rl));
    report.round_auc.push_back(auc(curves.back()));
  }
  report.healthy = cohort(hc, hp);
  report.patient = cohort(pc, pp);
  report.pooled_roc = roc(anomaly, labels);
  report.pooled_auc = auc(report.pooled_roc);
  report.threshold_auc = auc(roc(threshold, labels));
  report.ridge_auc = auc(roc(ridge, labels));
  double sd = 0.0;
  mean_std(ridge_h, report.ridge_healthy_corr2d, sd);
  mean_std(ridge_p, report.ridge_patient_corr2d, sd);
  report.patient_mean_anomaly.clear();
  for (const auto& [id, v] : per_patient) mean_std(v, report.patient_mean_anomaly[id], sd);
  report.mean_roc = vertical_average(curves);
}

json report_json(const EvaluationReport& report) {
  json rounds = json::array();
  for (const auto& r : report.rounds) {
    json subjects = json::array();
    for (const auto& s : r.subjects) {
      json crops = json::array();
      for (const auto& c : s.crops) crops.push_back({c.corr2d, c.lsd_db, c.pesq_lite});
      subjects.push_back({{"subject_id", s.subject_id},
                          {"label", synth::label_name(s.label)},
                          {"corr2d", s.corr2d},
                          {"pesq_lite", s.pesq_lite},
                          {"anomaly", s.anomaly},
                          {"threshold", s.threshold},
                          {"ridge_anomaly", s.ridge_anomaly},
                          {"ridge_corr2d", s.ridge_corr2d},
                          {"crops", crops}});
    }
    rounds.push_back({{"index", r.index},
                      {"held_out", r.held_out},
                      {"first_loss", r.first_loss},
                      {"final_loss", r.final_loss},
                      {"train_seconds", r.train_seconds},
                      {"svm", svm_json(r.svm)},
                      {"ridge_svm", svm_json(r.ridge_svm)},
                      {"subjects", subjects}});
  }
  return {{"variant", report.variant},
          {"config", report.config},
          {"summary",
           {{"healthy", cohort_json(report.healthy)},
            {"patient", cohort_json(report.patient)},
            {"pooled_auc", report.pooled_auc},
            {"threshold_auc", report.threshold_auc},
            {"ridge_auc", report.ridge_auc},
            {"ridge_healthy_corr2d", report.ridge_healthy_corr2d},
            {"ridge_patient_corr2d", report.ridge_patient_corr2d},
            {"round_auc", report.round_auc},
            {"patient_mean_anomaly", report.patient_mean_anomaly}}},
          {"rounds", rounds}};
}

EvaluationReport report_from_json(const json& j) {
  EvaluationReport report;
  try {
    report.variant = j.at("variant");
    report.config = j.at("config");
    for (const auto& jr : j.at("rounds")) {
      RoundResult r;
      r.index = jr.at("index");
      r.held_out = jr.at("held_out");
      r.first_loss = jr.at("first_loss");
      r.final_loss = jr.at("final_loss");
      r.train_seconds = jr.at("train_seconds");
      r.svm = svm_from_json(jr.at("svm"));
      r.ridge_svm = svm_from_json(jr.at("ridge_svm"));
      for (const auto& js : jr.at("subjects")) {
        SubjectResult s;
        s.subject_id = js.at("subject_id");
        s.label = synth::parse_label(js.at("label"));
        s.corr2d = js.at("corr2d");
        s.pesq_lite = js.at("pesq_lite");
        s.anomaly = js.at("anomaly");
        s.threshold = js.at("threshold");
        s.ridge_anomaly = js.at("ridge_anomaly");
        s.ridge_corr2d = js.at("ridge_corr2d");
        for (const auto& c : js.at("crops")) s.crops.push_back({c.at(0), c.at(1), c.at(2)});
        r.subjects.push_back(std::move(s));
      }
      report.rounds.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw Error("eval", ErrorCode::BadConfig, std::string("malformed report: ") + e.what());
  }
  if (report.rounds.empty()) throw Error("eval", ErrorCode::BadConfig, "report has no rounds");
  summarize(report);
  return report;
}

json config_json(const LooConfig& cfg) {
  const auto& d = cfg.model.dims;
  json gamma = nullptr;
  if (cfg.detector.svm.gamma) gamma = *cfg.detector.svm.gamma;
  return {{"train",
           {{"variant", translator::variant_name(cfg.train.variant)},
            {"epochs", cfg.train.epochs},
            {"lr", cfg.train.lr},
            {"batch", cfg.train.batch},
            {"crops", cfg.train.crops},
            {"seed", cfg.train.seed}}},
          {"model",
           {{"dims", {d.frames, d.x, d.y, d.z}},
            {"n_mels", cfg.model.n_mels},
            {"n_time", cfg.model.n_time},
            {"leaky_slope", cfg.model.leaky_slope}}},
          {"dsp",
           {{"sample_rate", cfg.mel.sample_rate},
            {"n_fft", cfg.mel.n_fft},
            {"hop", cfg.mel.hop},
            {"n_mels", cfg.mel.n_mels},
            {"n_time", cfg.mel.n_time},
            {"fmin", cfg.mel.fmin},
            {"fmax", cfg.mel.fmax}}},
          {"detector",
           {{"nu", cfg.detector.svm.nu},
            {"gamma", gamma},
            {"kernel", detector::kernel_name(cfg.detector.svm.kernel)},
            {"features", detector::feature_mode_name(cfg.detector.features)},
            {"aggregation", detector::aggregation_name(cfg.detector.aggregation)},
            {"fit", svm_fit_name(cfg.detector.fit)},
            {"holdout_subjects", cfg.detector.holdout_subjects},
            {"tol", cfg.detector.svm.tol},
            {"max_updates", cfg.detector.svm.max_updates}}},
          {"griffin_lim_iterations", cfg.griffin_lim_iterations},
          {"ridge_lambda", cfg.ridge_lambda}};
}

std::string summary_csv(const std::vector<EvaluationReport>& reports) {
  std::string out = "backbone,cohort,n,corr2d_mean,corr2d_std,pesq_lite_mean,pesq_lite_std\n";
  for (const auto& r : reports) {
    for (const auto* c : {&r.healthy, &r.patient}) {
      out += r.variant + (c == &r.healthy ? ",healthy," : ",patient,") + std::to_string(c->n) + "," +
             fmt("%.6f", c->corr2d_mean) + "," + fmt("%.6f", c->corr2d_std) + "," + fmt("%.6f", c->pesq_mean) + "," +
             fmt("%.6f", c->pesq_std) + "\n";
    }
  }
  return out;
}

std::string scores_csv(const std::vector<EvaluationReport>& reports) {
  std::string out = "backbone,round,held_out,subject_id,label,anomaly,threshold,ridge_anomaly,corr2d,pesq_lite\n";
  for (const auto& r : reports) {
    for (const auto& round : r.rounds) {
      for (const auto& s : round.subjects) {
        out += r.variant + "," + std::to_string(round.index) + "," + round.held_out + "," + s.subject_id + "," +
               synth::label_name(s.label) + "," + fmt("%.9f", s.anomaly) + "," + fmt("%.9f", s.threshold) + "," +
               fmt("%.9f", s.ridge_anomaly) + "," + fmt("%.9f", s.corr2d) + "," + fmt("%.9f", s.pesq_lite) + "\n";
      }
    }
  }
  return out;
}

namespace {

std::string metrics_table(const std::vector<EvaluationReport>& reports) {
  std::string out = "backbone,round,subject_id,crop_index,corr2d,lsd_db,pesq_lite\n";
  for (const auto& r : reports) {
    for (const auto& round : r.rounds) {
      for (const auto& s : round.subjects) {
        for (std::size_t k = 0; k < s.crops.size(); ++k) {
          const auto& c = s.crops[k];
          out += r.variant + "," + std::to_string(round.index) + "," + s.subject_id + "," + std::to_string(k) + "," +
                 fmt("%.9f", c.corr2d) + "," + fmt("%.9f", c.lsd_db) + "," + fmt("%.9f", c.pesq_lite) + "\n";
        }
      }
    }
  }
  return out;
}

std::string auc_table(const std::vector<EvaluationReport>& reports) {
  std::string out = "backbone,pooled_auc,mean_round_auc,threshold_auc,ridge_auc\n";
  for (const auto& r : reports) {
    double mean = 0.0, sd = 0.0;
    mean_std(r.round_auc, mean, sd);
    out += r.variant + "," + fmt("%.6f", r.pooled_auc) + "," + fmt("%.6f", mean) + "," + fmt("%.6f", r.threshold_auc) +
           "," + fmt("%.6f", r.ridge_auc) + "\n";
  }
  return out;
}

}  // namespace

std::string roc_svg(const std::vector<EvaluationReport>& reports) {
  constexpr double panel = 320.0, margin = 50.0, plot = panel - 2 * margin + 20.0;
  const double width = panel * static_cast<double>(std::max<std::size_t>(reports.size(), 1));
  const double height = panel + 20.0;
  std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + fmt("%.0f", width) + "\" height=\"" +
       fmt("%.0f", height) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t p = 0; p < reports.size(); ++p) {
    const auto& r = reports[p];
    const double x0 = static_cast<double>(p) * panel + margin, y0 = margin;
    const auto px = [&](double f) { return fmt("%.2f", x0 + f * plot); };
    const auto py = [&](double t) { return fmt("%.2f", y0 + (1.0 - t) * plot); };
    s += "<g id=\"" + r.variant + "\">\n";
    s += "<text x=\"" + px(0.5) + "\" y=\"" + fmt("%.2f", y0 - 18) + "\" text-anchor=\"middle\" font-size=\"13\">" +
         r.variant + "</text>\n";
    s += "<rect x=\"" + px(0) + "\" y=\"" + py(1) + "\" width=\"" + fmt("%.2f", plot) + "\" height=\"" +
         fmt("%.2f", plot) + "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
      const double v = t / 4.0;
      s += "<text x=\"" + px(v) + "\" y=\"" + fmt("%.2f", y0 + plot + 14) + "\" text-anchor=\"middle\">" +
           fmt("%.2f", v) + "</text>\n";
      s += "<text x=\"" + fmt("%.2f", x0 - 6) + "\" y=\"" + py(v) + "\" text-anchor=\"end\" dy=\"4\">" +
           fmt("%.2f", v) + "</text>\n";
    }
    s += "<text x=\"" + px(0.5) + "\" y=\"" + fmt("%.2f", y0 + plot + 30) +
         "\" text-anchor=\"middle\">False positive rate</text>\n";
    s += "<text x=\"" + fmt("%.2f", x0 - 36) + "\" y=\"" + py(0.5) + "\" text-anchor=\"middle\" transform=\"rotate(-90 " +
         fmt("%.2f", x0 - 36) + " " + py(0.5) + ")\">True positive rate</text>\n";
    // Chance line.
    s += "<line id=\"chance-" + r.variant + "\" x1=\"" + px(0) + "\" y1=\"" + py(0) + "\" x2=\"" + px(1) + "\" y2=\"" +
         py(1) + "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
    const auto& m = r.mean_roc;
    if (!m.fpr.empty()) {
      std::string band;
      for (std::size_t i = 0; i < m.fpr.size(); ++i) {
        band += px(m.fpr[i]) + "," + py(std::min(1.0, m.tpr_mean[i] + m.tpr_std[i])) + " ";
      }
      for (std::size_t i = m.fpr.size(); i-- > 0;) {
        band += px(m.fpr[i]) + "," + py(std::max(0.0, m.tpr_mean[i] - m.tpr_std[i])) + " ";
      }
      band.pop_back();
      s += "<polygon points=\"" + band + "\" fill=\"steelblue\" fill-opacity=\"0.25\" stroke=\"none\"/>\n";
      std::string line;
      for (std::size_t i = 0; i < m.fpr.size(); ++i) line += px(m.fpr[i]) + "," + py(m.tpr_mean[i]) + " ";
      line.pop_back();
      s += "<polyline points=\"" + line + "\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\"/>\n";
    }
    s += "<text x=\"" + px(0.95) + "\" y=\"" + py(0.12) + "\" text-anchor=\"end\">AUC = " + fmt("%.3f", r.pooled_auc) +
         "</text>\n";
    s += "<text x=\"" + px(0.95) + "\" y=\"" + py(0.04) + "\" text-anchor=\"end\" fill=\"gray\">chance AUC = 0.5</text>\n";
    s += "</g>\n";
  }
  s += "</svg>\n";
  return s;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("eval", ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw Error("eval", ErrorCode::IoError, "write failed: " + path.string());
}

std::string version_string() { return SMAD_VERSION; }

void render_report(const std::vector<EvaluationReport>& reports, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error("eval", ErrorCode::IoError, "cannot create " + out_dir.string() + ": " + ec.message());
  json all = json::array();
  for (const auto& r : reports) all.push_back(report_json(r));
  write_text(out_dir / "metrics.csv", metrics_table(reports));
  write_text(out_dir / "scores.csv", scores_csv(reports));
  write_text(out_dir / "summary.csv", summary_csv(reports));
  write_text(out_dir / "auc.csv", auc_table(reports));
  write_text(out_dir / "roc.svg", roc_svg(reports));
  write_text(out_dir / "report.json", all.dump(1) + "\n");
}

}  // namespace smad::eval
