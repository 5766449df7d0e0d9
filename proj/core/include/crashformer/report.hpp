#pragma once

#include <string>

#include "crashformer/experiment.hpp"

namespace crashformer::eval {

/// `arm,f1_1,f1_0,precision_1,recall_1,n`, one row per arm. Numbers use the
/// shortest round-trip decimal form.
std::string render_csv(const ExperimentReport& r);
/// `reference,arm,reference_f1_1,arm_f1_1,relative_improvement_percent`.
std::string render_improvements_csv(const ExperimentReport& r);
/// Grouped bar chart of F1_1 and F1_0 per arm.
std::string render_svg(const ExperimentReport& r, const std::string& title);
std::string report_to_json(const ExperimentReport& r);
ExperimentReport report_from_json(const std::string& text);

/// Writes report.csv, improvements.csv, report.svg and report.json.
void write_report(const ExperimentReport& r, const std::string& dir, const std::string& title);

/// Recomputes every arm's metrics from its stored prediction dump under
/// dir/arms/<name>/ and re-derives the improvements.
ExperimentReport rebuild_report(const std::string& dir);

/// Arm metrics from a stored dump.
Metrics metrics_from_dump(const std::string& arm_dir);

}  // namespace crashformer::eval
