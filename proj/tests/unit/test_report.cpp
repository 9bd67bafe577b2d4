// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "fplab/errors.hpp"
#include "fplab/report.hpp"

using namespace fplab;

namespace {

EvalRow fsr_row(std::string arm, std::string fp, std::string row, std::string col, std::size_t passes,
                std::size_t n = 20) {
  EvalRow r;
  r.model_id = "m/" + arm + "/" + fp + "/" + row;
  r.fingerprint = fp;
  r.arm = std::move(arm);
  r.row_label = std::move(row);
  r.column_label = std::move(col);
  r.n = n;
  r.passes = passes;
  r.fsr = static_cast<double>(passes) / static_cast<double>(n);
  r.pass_bits = std::string(passes, '1') + std::string(n - passes, '0');
  return r;
}

EvalReport merge_report() {
  EvalReport rep;
  rep.name = "merge_task";
  rep.title = "Merged";
  rep.row_header = "alpha1:alpha2";
  rep.columns = {"if-direct", "if-transfer"};
  for (int i = 9; i >= 1; --i) {
    const std::string label = "0." + std::to_string(i) + ":0." + std::to_string(10 - i);
    auto d = fsr_row(std::string(kArmLoraDirect), "if", label, "if-direct", 2 * static_cast<std::size_t>(i));
    d.attack = "merge-task";
    d.attack_param = label;
    auto t = fsr_row(std::string(kArmLoraTransfer), "if", label, "if-transfer", static_cast<std::size_t>(i));
    t.attack = "merge-task";
    t.attack_param = label;
    rep.add(d);
    rep.add(t);
  }
  return rep;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

}  // namespace

TEST(Report, TableCsvLayout) {
  const auto rep = merge_report();
  const auto csv = table_csv(rep);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "alpha1:alpha2,if-direct,if-transfer");
  std::getline(in, line);
  EXPECT_EQ(line, "0.9:0.1,0.9000,0.4500");
  int rows = 1;
  std::string last;
  while (std::getline(in, line)) {
    ++rows;
    last = line;
  }
  EXPECT_EQ(rows, 9);
  EXPECT_EQ(last, "0.1:0.9,0.1000,0.0500");
}

TEST(Report, MarkdownLayout) {
  const auto md = table_markdown(merge_report());
  EXPECT_EQ(md.rfind("### Merged\n\n| alpha1:alpha2 | if-direct | if-transfer |\n|---|---|---|\n| 0.9:0.1 | 90% | 45% |\n", 0),
            0u)
      << md;
}

TEST(Report, MissingCellsAreBlank) {
  EvalReport rep;
  rep.name = "x";
  rep.row_header = "r";
  rep.add(fsr_row("a", "if", "r1", "c1", 1));
  rep.add(fsr_row("a", "if", "r2", "c2", 1));
  EXPECT_EQ(table_csv(rep), "r,c1,c2\nr1,0.0500,\nr2,,0.0500\n");
  EXPECT_NE(table_markdown(rep).find("| r1 | 5% | - |"), std::string::npos);
}

TEST(Report, CsvQuoting) {
  EXPECT_EQ(csv_field("plain"), "plain");
  EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
  EXPECT_EQ(format_fixed(0.05, 4), "0.0500");
}

TEST(Report, ValidateCatchesInconsistentFsr) {
  auto rep = merge_report();
  EXPECT_NO_THROW(rep.validate());
  rep.rows[3].fsr += 0.05;
  EXPECT_THROW(rep.validate(), ArgumentError);
}

TEST(Report, EmitIsByteStable) {
  const auto dir = std::filesystem::temp_directory_path() / "fplab_report_test";
  std::filesystem::remove_all(dir);
  const std::vector<EvalReport> reps{merge_report()};
  const auto a = emit_report(reps, "csv", dir / "a");
  const auto b = emit_report(reps, ReportFormat::Csv, dir / "b");
  ASSERT_EQ(a.size(), 2u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(slurp(a[i]), slurp(b[i]));
  EXPECT_EQ(emit_report(reps, "md", dir / "c").size(), 1u);
  EXPECT_THROW(emit_report(std::vector<EvalReport>{}, "csv", dir), ArgumentError);
  EXPECT_THROW(emit_report(reps, "xlsx", dir), ArgumentError);
  std::filesystem::remove_all(dir);
}

TEST(Report, RowsCsvHasOneLinePerRow) {
  const auto rep = merge_report();
  const auto csv = rows_csv(rep);
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), rep.rows.size() + 1);
  EXPECT_EQ(csv.rfind("report,model_id,fingerprint,arm,", 0), 0u);
}

TEST(Report, CompareArmsPairsDirectWithTransfer) {
  const std::vector<EvalReport> reps{merge_report()};
  const auto d = compare_arms(reps);
  ASSERT_EQ(d.size(), 9u);
  EXPECT_EQ(d[0].attack_param, "0.9:0.1");
  EXPECT_DOUBLE_EQ(d[0].direct, 0.9);
  EXPECT_DOUBLE_EQ(d[0].transfer, 0.45);
  EXPECT_DOUBLE_EQ(d[0].delta, 0.45 - 0.9);
  EXPECT_EQ(arm_deltas_csv(d).rfind("report,metric,fingerprint,attack,attack_param,direct,transfer,delta\n", 0), 0u);

  EvalReport only_direct;
  only_direct.name = "x";
  only_direct.add(fsr_row(std::string(kArmLoraDirect), "if", "r", "c", 1));
  EXPECT_THROW(compare_arms(std::vector<EvalReport>{only_direct}), ArgumentError);
}

TEST(Report, JsonRoundTrip) {
  auto rep = merge_report();
  rep.rows[0].harmless_acc = 0.42;
  rep.rows[1].config = "a=\"1\",b";
  const std::vector<EvalReport> reps{rep};
  const auto back = reports_from_json(reports_to_json(reps));
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].rows, rep.rows);
  EXPECT_EQ(back[0].columns, rep.columns);
  EXPECT_EQ(back[0].title, rep.title);
  EXPECT_THROW(reports_from_json("[{\"name\": 3}]"), FormatError);
  EXPECT_THROW(reports_from_json("not json"), FormatError);
}
