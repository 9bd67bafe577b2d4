// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#include "fplab/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "fplab/errors.hpp"

namespace fplab {

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void EvalReport::add(EvalRow row) { rows.push_back(std::move(row)); }

void EvalReport::validate() const {
  if (metric != ReportMetric::Fsr) return;
  for (const auto& r : rows) {
    if (r.n == 0 || r.passes > r.n || r.fsr != static_cast<double>(r.passes) / static_cast<double>(r.n)) {
      throw ArgumentError("report '" + name + "': row '" + r.row_label + "/" + r.column_label +
                          "' has FSR inconsistent with its pass count");
    }
  }
}

ReportFormat parse_report_format(std::string_view text) {
  if (text == "csv") return ReportFormat::Csv;
  if (text == "md" || text == "markdown") return ReportFormat::Markdown;
  throw ArgumentError("unknown report format '" + std::string(text) + "' (expected csv|md)");
}

std::string rows_csv(const EvalReport& report) {
  std::string out =
      "report,model_id,fingerprint,arm,attack,attack_param,row,column,fsr,n,passes,pass_bits,harmless_acc,"
      "wall_seconds,config\n";
  for (const auto& r : report.rows) {
    const std::string fields[] = {
        report.name,
        r.model_id,
        r.fingerprint,
        r.arm,
        r.attack,
        r.attack_param,
        r.row_label,
        r.column_label,
        report.metric == ReportMetric::Fsr ? format_fixed(r.fsr, 4) : "",
        report.metric == ReportMetric::Fsr ? std::to_string(r.n) : "",
        report.metric == ReportMetric::Fsr ? std::to_string(r.passes) : "",
        r.pass_bits,
        r.harmless_acc ? format_fixed(*r.harmless_acc, 4) : "",
        format_fixed(r.wall_seconds, 3),
        r.config,
    };
    bool first = true;
    for (const auto& f : fields) {
      if (!first) out.push_back(',');
      first = false;
      out += csv_field(f);
    }
    out.push_back('\n');
  }
  return out;
}

namespace {

struct Table {
  std::vector<std::string> rows;
  std::vector<std::string> cols;
  std::map<std::pair<std::string, std::string>, double> cells;
};

Table pivot(const EvalReport& report) {
  Table t;
  auto note = [](std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  };
  for (const auto& c : report.columns) note(t.cols, c);
  for (const auto& r : report.rows) {
    note(t.rows, r.row_label);
    note(t.cols, r.column_label);
    const double v = report.metric == ReportMetric::Fsr ? r.fsr : r.harmless_acc.value_or(std::nan(""));
    t.cells[{r.row_label, r.column_label}] = v;
  }
  return t;
}

std::string percent(double v, ReportMetric m) {
  if (std::isnan(v)) return "-";
  return format_fixed(100.0 * v, m == ReportMetric::Fsr ? 0 : 1) + "%";
}

}  // namespace

std::string table_csv(const EvalReport& report) {
  const Table t = pivot(report);
  std::string out = csv_field(report.row_header);
  for (const auto& c : t.cols) out += "," + csv_field(c);
  out.push_back('\n');
  for (const auto& r : t.rows) {
    out += csv_field(r);
    for (const auto& c : t.cols) {
      out.push_back(',');
      auto it = t.cells.find({r, c});
      if (it != t.cells.end() && !std::isnan(it->second)) out += format_fixed(it->second, 4);
    }
    out.push_back('\n');
  }
  return out;
}

std::string table_markdown(const EvalReport& report) {
  const Table t = pivot(report);
  std::string out;
  if (!report.title.empty()) out += "### " + report.title + "\n\n";
  out += "| " + report.row_header + " |";
  for (const auto& c : t.cols) out += " " + c + " |";
  out += "\n|---|";
  for (std::size_t i = 0; i < t.cols.size(); ++i) out += "---|";
  out.push_back('\n');
  for (const auto& r : t.rows) {
    out += "| " + r + " |";
    for (const auto& c : t.cols) {
      auto it = t.cells.find({r, c});
      out += " " + (it == t.cells.end() ? std::string("-") : percent(it->second, report.metric)) + " |";
    }
    out.push_back('\n');
  }
  return out;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace

std::vector<std::filesystem::path> emit_report(std::span<const EvalReport> reports, ReportFormat format,
                                               const std::filesystem::path& dir) {
  if (reports.empty()) throw ArgumentError("emit_report: empty report set");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create report directory '" + dir.string() + "': " + ec.message());
  std::vector<std::filesystem::path> written;
  for (const auto& r : reports) {
    if (r.name.empty()) throw ArgumentError("emit_report: report without a name");
    r.validate();
    if (format == ReportFormat::Csv) {
      written.push_back(dir / (r.name + ".csv"));
      write_text(written.back(), table_csv(r));
      written.push_back(dir / (r.name + "_rows.csv"));
      write_text(written.back(), rows_csv(r));
    } else {
      written.push_back(dir / (r.name + ".md"));
      write_text(written.back(), table_markdown(r));
    }
  }
  return written;
}

std::vector<std::filesystem::path> emit_report(std::span<const EvalReport> reports, std::string_view format,
                                               const std::filesystem::path& dir) {
  return emit_report(reports, parse_report_format(format), dir);
}

std::vector<ArmDelta> compare_arms(std::span<const EvalReport> reports) {
  bool have_direct = false, have_transfer = false;
  std::vector<ArmDelta> out;
  for (const auto& rep : reports) {
    for (const auto& r : rep.rows) {
      have_direct |= r.arm == kArmLoraDirect;
      have_transfer |= r.arm == kArmLoraTransfer;
    }
  }
  if (!have_direct || !have_transfer) {
    throw ArgumentError(std::string("compare_arms: report set lacks the ") +
                        (have_direct ? "lora-transfer" : "lora-direct") + " arm");
  }
  for (const auto& rep : reports) {
    for (const auto& d : rep.rows) {
      if (d.arm != kArmLoraDirect) continue;
      for (const auto& t : rep.rows) {
        if (t.arm != kArmLoraTransfer || t.fingerprint != d.fingerprint || t.attack != d.attack ||
            t.attack_param != d.attack_param) {
          continue;
        }
        if (rep.metric == ReportMetric::Fsr) {
          out.push_back({rep.name, "fsr", d.fingerprint, d.attack, d.attack_param, d.fsr, t.fsr, t.fsr - d.fsr});
        }
        if (d.harmless_acc && t.harmless_acc) {
          out.push_back({rep.name, "toy-harmlessness", d.fingerprint, d.attack, d.attack_param, *d.harmless_acc,
                         *t.harmless_acc, *t.harmless_acc - *d.harmless_acc});
        }
        break;
      }
    }
  }
  return out;
}

std::string arm_deltas_csv(const std::vector<ArmDelta>& deltas) {
  std::string out = "report,metric,fingerprint,attack,attack_param,direct,transfer,delta\n";
  for (const auto& d : deltas) {
    out += csv_field(d.report) + "," + d.metric + "," + csv_field(d.fingerprint) + "," + csv_field(d.attack) + "," +
           csv_field(d.attack_param) + "," + format_fixed(d.direct, 4) + "," + format_fixed(d.transfer, 4) + "," +
           format_fixed(d.delta, 4) + "\n";
  }
  return out;
}

std::string arm_deltas_markdown(const std::vector<ArmDelta>& deltas) {
  std::string out =
      "| report | metric | fingerprint | attack | parameter | direct | transfer | transfer - direct |\n"
      "|---|---|---|---|---|---|---|---|\n";
  for (const auto& d : deltas) {
    out += "| " + d.report + " | " + d.metric + " | " + d.fingerprint + " | " + d.attack + " | " + d.attack_param +
           " | " + format_fixed(d.direct, 4) + " | " + format_fixed(d.transfer, 4) + " | " +
           format_fixed(d.delta, 4) + " |\n";
  }
  return out;
}

std::string reports_to_json(std::span<const EvalReport> reports) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : reports) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& e : r.rows) {
      nlohmann::json j = {{"model_id", e.model_id},       {"fingerprint", e.fingerprint}, {"arm", e.arm},
                          {"attack", e.attack},           {"attack_param", e.attack_param},
                          {"row", e.row_label},           {"column", e.column_label},    {"fsr", e.fsr},
                          {"n", e.n},                     {"passes", e.passes},          {"pass_bits", e.pass_bits},
                          {"wall_seconds", e.wall_seconds}, {"config", e.config}};
      j["harmless_acc"] = e.harmless_acc ? nlohmann::json(*e.harmless_acc) : nlohmann::json(nullptr);
      rows.push_back(std::move(j));
    }
    out.push_back({{"name", r.name},
                   {"title", r.title},
                   {"row_header", r.row_header},
                   {"metric", r.metric == ReportMetric::Fsr ? "fsr" : "harmless"},
                   {"columns", r.columns},
                   {"rows", std::move(rows)}});
  }
  return out.dump(1) + "\n";
}

std::vector<EvalReport> reports_from_json(std::string_view text) {
  std::vector<EvalReport> out;
  try {
    for (const auto& j : nlohmann::json::parse(text)) {
      EvalReport r;
      r.name = j.at("name");
      r.title = j.at("title");
      r.row_header = j.at("row_header");
      r.metric = j.at("metric") == "fsr" ? ReportMetric::Fsr : ReportMetric::Harmless;
      r.columns = j.at("columns").get<std::vector<std::string>>();
      for (const auto& x : j.at("rows")) {
        EvalRow e;
        e.model_id = x.at("model_id");
        e.fingerprint = x.at("fingerprint");
        e.arm = x.at("arm");
        e.attack = x.at("attack");
        e.attack_param = x.at("attack_param");
        e.row_label = x.at("row");
        e.column_label = x.at("column");
        e.fsr = x.at("fsr");
        e.n = x.at("n");
        e.passes = x.at("passes");
        e.pass_bits = x.at("pass_bits");
        if (!x.at("harmless_acc").is_null()) e.harmless_acc = x.at("harmless_acc").get<double>();
        e.wall_seconds = x.at("wall_seconds");
        e.config = x.at("config");
        r.rows.push_back(std::move(e));
      }
      out.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report json: ") + e.what());
  }
  return out;
}

}  // namespace fplab
