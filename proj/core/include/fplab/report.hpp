// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fplab {

inline constexpr std::string_view kArmLoraDirect = "lora-direct";
inline constexpr std::string_view kArmLoraTransfer = "lora-transfer";
inline constexpr std::string_view kArmFullDirect = "full-ft-direct";

struct EvalRow {
  std::string model_id;
  std::string fingerprint;  // if | utf | empty when not applicable
  std::string arm;
  std::string attack = "none";
  std::string attack_param;
  // Placement in the table-shaped views.
  std::string row_label;
  std::string column_label;
  double fsr = 0.0;
  std::size_t n = 0;
  std::size_t passes = 0;
  std::string pass_bits;
  std::optional<double> harmless_acc;
  double wall_seconds = 0.0;
  std::string config;

  friend bool operator==(const EvalRow&, const EvalRow&) = default;
};

enum class ReportMetric { Fsr, Harmless };

struct EvalReport {
  std::string name;   // file stem
  std::string title;
  std::string row_header;
  ReportMetric metric = ReportMetric::Fsr;
  // Table columns in display order; labels not listed follow in order of
  // first appearance.
  std::vector<std::string> columns;
  // Rows keep producer order; table rows follow first appearance of
  // row_label.
  std::vector<EvalRow> rows;

  void add(EvalRow row);
  // Checks FSR == passes / n for every FSR row.
  void validate() const;
};

enum class ReportFormat { Csv, Markdown };
ReportFormat parse_report_format(std::string_view text);

// Long-form CSV, one line per row. Header:
// report,model_id,fingerprint,arm,attack,attack_param,row,column,fsr,n,passes,pass_bits,harmless_acc,wall_seconds,config
std::string rows_csv(const EvalReport& report);
// Table-shaped views: first column is row_header, then one column per
// column_label.
std::string table_csv(const EvalReport& report);
std::string table_markdown(const EvalReport& report);

// csv: <name>.csv (table) and <name>_rows.csv (long form) per report.
// md: <name>.md per report. Returns the written paths in order.
std::vector<std::filesystem::path> emit_report(std::span<const EvalReport> reports, ReportFormat format,
                                               const std::filesystem::path& dir);
std::vector<std::filesystem::path> emit_report(std::span<const EvalReport> reports, std::string_view format,
                                               const std::filesystem::path& dir);

struct ArmDelta {
  std::string report;
  std::string metric;  // fsr | toy-harmlessness
  std::string fingerprint;
  std::string attack;
  std::string attack_param;
  double direct = 0.0;
  double transfer = 0.0;
  double delta = 0.0;  // transfer - direct
};

// Pairs every lora-direct row with the lora-transfer row that shares its
// report, fingerprint, attack and parameter.
std::vector<ArmDelta> compare_arms(std::span<const EvalReport> reports);
std::string arm_deltas_csv(const std::vector<ArmDelta>& deltas);
std::string arm_deltas_markdown(const std::vector<ArmDelta>& deltas);

// Lossless JSON form of a report set; the CLI re-emits tables from it.
std::string reports_to_json(std::span<const EvalReport> reports);
std::vector<EvalReport> reports_from_json(std::string_view text);

std::string csv_field(std::string_view s);
std::string format_fixed(double v, int digits);

}  // namespace fplab
