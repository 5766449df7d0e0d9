#include "crashformer/report.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>

#include <json.hpp>

#include "binary_io.hpp"
#include "crashformer/error.hpp"

namespace crashformer::eval {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fixed(double v, int digits) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, digits);
  return std::string(buf, res.ptr);
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

json metrics_json(const Metrics& m) {
  return json{{"tp", m.tp},
              {"fp", m.fp},
              {"fn", m.fn},
              {"tn", m.tn},
              {"f1_1", m.f1_1},
              {"f1_0", m.f1_0},
              {"precision_1", m.precision_1},
              {"recall_1", m.recall_1},
              {"precision_0", m.precision_0},
              {"recall_0", m.recall_0}};
}

Metrics metrics_from(const json& j) {
  Metrics m;
  m.tp = j.at("tp").get<std::size_t>();
  m.fp = j.at("fp").get<std::size_t>();
  m.fn = j.at("fn").get<std::size_t>();
  m.tn = j.at("tn").get<std::size_t>();
  m.f1_1 = j.at("f1_1").get<double>();
  m.f1_0 = j.at("f1_0").get<double>();
  m.precision_1 = j.at("precision_1").get<double>();
  m.recall_1 = j.at("recall_1").get<double>();
  m.precision_0 = j.at("precision_0").get<double>();
  m.recall_0 = j.at("recall_0").get<double>();
  return m;
}

// JSON cannot hold infinities; store them as strings.
json improvement_value(double v) { return std::isfinite(v) ? json(v) : json(num(v)); }

double improvement_from(const json& j) {
  if (j.is_string()) return std::stod(j.get<std::string>());
  return j.get<double>();
}

}  // namespace

std::string render_csv(const ExperimentReport& r) {
  std::string out = "arm,f1_1,f1_0,precision_1,recall_1,n\n";
  for (const auto& a : r.arms) {
    out += a.spec.name + "," + num(a.metrics.f1_1) + "," + num(a.metrics.f1_0) + "," + num(a.metrics.precision_1) +
           "," + num(a.metrics.recall_1) + "," + std::to_string(a.metrics.n()) + "\n";
  }
  return out;
}

std::string render_improvements_csv(const ExperimentReport& r) {
  std::string out = "reference,arm,reference_f1_1,arm_f1_1,relative_improvement_percent\n";
  for (const auto& i : r.improvements) {
    out += i.reference + "," + i.arm + "," + num(i.reference_f1_1) + "," + num(i.arm_f1_1) + "," + num(i.percent) + "\n";
  }
  return out;
}

std::string render_svg(const ExperimentReport& r, const std::string& title) {
  const int bar = 36, gap = 12, group = 2 * bar + 3 * gap, left = 60, top = 50, plot_h = 300;
  const int width = left + group * static_cast<int>(std::max<std::size_t>(r.arms.size(), 1)) + 20;
  const int height = top + plot_h + 70;
  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) + "\" height=\"" +
       std::to_string(height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + std::to_string(width / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" +
       xml_escape(title) + "</text>\n";
  for (int t = 0; t <= 4; ++t) {
    const int y = top + plot_h - t * plot_h / 4;
    s += "<line x1=\"" + std::to_string(left) + "\" x2=\"" + std::to_string(width - 10) + "\" y1=\"" +
         std::to_string(y) + "\" y2=\"" + std::to_string(y) + "\" stroke=\"#ddd\"/>\n";
    s += "<text x=\"" + std::to_string(left - 6) + "\" y=\"" + std::to_string(y + 4) + "\" text-anchor=\"end\">" +
         fixed(t * 0.25, 2) + "</text>\n";
  }
  for (std::size_t i = 0; i < r.arms.size(); ++i) {
    const auto& a = r.arms[i];
    const int x0 = left + static_cast<int>(i) * group + gap;
    const double vals[2] = {a.metrics.f1_1, a.metrics.f1_0};
    const char* colors[2] = {"#3b6fb6", "#e0883a"};
    for (int k = 0; k < 2; ++k) {
      const int h = static_cast<int>(std::lround(vals[k] * plot_h));
      const int x = x0 + k * (bar + gap);
      s += "<rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(top + plot_h - h) + "\" width=\"" +
           std::to_string(bar) + "\" height=\"" + std::to_string(h) + "\" fill=\"" + colors[k] + "\"/>\n";
      s += "<text x=\"" + std::to_string(x + bar / 2) + "\" y=\"" + std::to_string(top + plot_h - h - 4) +
           "\" text-anchor=\"middle\" font-size=\"10\">" + fixed(vals[k], 4) + "</text>\n";
    }
    s += "<text x=\"" + std::to_string(x0 + bar + gap / 2) + "\" y=\"" + std::to_string(top + plot_h + 18) +
         "\" text-anchor=\"middle\">" + xml_escape(a.spec.name) + "</text>\n";
  }
  const int ly = height - 22;
  s += "<rect x=\"" + std::to_string(left) + "\" y=\"" + std::to_string(ly - 10) +
       "\" width=\"12\" height=\"12\" fill=\"#3b6fb6\"/><text x=\"" + std::to_string(left + 18) + "\" y=\"" +
       std::to_string(ly) + "\">F1 (label 1)</text>\n";
  s += "<rect x=\"" + std::to_string(left + 120) + "\" y=\"" + std::to_string(ly - 10) +
       "\" width=\"12\" height=\"12\" fill=\"#e0883a\"/><text x=\"" + std::to_string(left + 138) + "\" y=\"" +
       std::to_string(ly) + "\">F1 (label 0)</text>\n";
  s += "</svg>\n";
  return s;
}

std::string report_to_json(const ExperimentReport& r) {
  json j;
  j["kind"] = to_string(r.kind);
  j["provenance"] = r.provenance.empty() ? json::object() : json::parse(r.provenance);
  json arms = json::array();
  for (const auto& a : r.arms) {
    arms.push_back({{"name", a.spec.name},
                    {"model_kind", a.spec.model_kind},
                    {"K", a.spec.K},
                    {"use_img", a.spec.use_img},
                    {"use_demo", a.spec.use_demo},
                    {"metrics", metrics_json(a.metrics)},
                    {"best_epoch", a.best_epoch},
                    {"epochs_run", a.epochs_run},
                    {"best_val_loss", a.best_val_loss}});
  }
  j["arms"] = arms;
  json imps = json::array();
  for (const auto& i : r.improvements) {
    imps.push_back({{"reference", i.reference},
                    {"arm", i.arm},
                    {"reference_f1_1", i.reference_f1_1},
                    {"arm_f1_1", i.arm_f1_1},
                    {"percent", improvement_value(i.percent)}});
  }
  j["improvements"] = imps;
  return j.dump(2) + "\n";
}

ExperimentReport report_from_json(const std::string& text) {
  ExperimentReport r;
  try {
    const auto j = json::parse(text);
    r.kind = parse_experiment_kind(j.at("kind").get<std::string>());
    r.provenance = j.at("provenance").dump();
    for (const auto& a : j.at("arms")) {
      ArmResult ar;
      ar.spec = {a.at("name").get<std::string>(), a.at("model_kind").get<std::string>(), a.at("K").get<int>(),
                 a.at("use_img").get<bool>(), a.at("use_demo").get<bool>()};
      ar.metrics = metrics_from(a.at("metrics"));
      ar.best_epoch = a.at("best_epoch").get<int>();
      ar.epochs_run = a.at("epochs_run").get<int>();
      ar.best_val_loss = a.at("best_val_loss").get<double>();
      r.arms.push_back(ar);
    }
    for (const auto& i : j.at("improvements")) {
      r.improvements.push_back({i.at("reference").get<std::string>(), i.at("arm").get<std::string>(),
                                i.at("reference_f1_1").get<double>(), i.at("arm_f1_1").get<double>(),
                                improvement_from(i.at("percent"))});
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("report.json: ") + e.what());
  }
  return r;
}

void write_report(const ExperimentReport& r, const std::string& dir, const std::string& title) {
  fs::create_directories(dir);
  bin::write_text((fs::path(dir) / "report.csv").string(), render_csv(r));
  bin::write_text((fs::path(dir) / "improvements.csv").string(), render_improvements_csv(r));
  bin::write_text((fs::path(dir) / "report.svg").string(), render_svg(r, title));
  bin::write_text((fs::path(dir) / "report.json").string(), report_to_json(r));
}

Metrics metrics_from_dump(const std::string& arm_dir) {
  const auto labels_path = (fs::path(arm_dir) / "labels.u8").string();
  std::error_code ec;
  const auto n = fs::file_size(labels_path, ec);
  if (ec) throw ValidationError("missing prediction dump in '" + arm_dir + "'");
  const auto labels = bin::read_array<std::uint8_t>(labels_path, n);
  const auto preds = bin::read_array<float>((fs::path(arm_dir) / "preds.f32").string(), 2 * n);
  nn::Tensor probs({n, 2});
  for (std::size_t i = 0; i < 2 * n; ++i) probs[i] = preds[i];
  return f1_per_class(argmax_predictions(probs), labels);
}

ExperimentReport rebuild_report(const std::string& dir) {
  auto r = report_from_json(bin::read_text((fs::path(dir) / "report.json").string()));
  for (auto& a : r.arms) a.metrics = metrics_from_dump((fs::path(dir) / "arms" / a.spec.name).string());
  r.improvements = improvements_over_first(r.arms);
  return r;
}

}  // namespace crashformer::eval
