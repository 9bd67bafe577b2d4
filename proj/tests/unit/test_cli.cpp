// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

// Drives the built `fplab` binary and checks exit codes and outputs.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "fplab/checkpoint.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = FPLAB_CLI_PATH;
const std::string kSmoke = std::string(FPLAB_SOURCE_DIR) + "/configs/smoke.yaml";

struct Run {
  int code = -1;
  std::string out;
};

Run run_cli(const std::string& args) {
  const fs::path log = fs::temp_directory_path() / "fplab_cli_stdout.txt";
  const std::string cmd = "'" + kCli + "' " + args + " > '" + log.string() + "' 2>/dev/null";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream f(log);
  std::stringstream s;
  s << f.rdbuf();
  r.out = s.str();
  return r;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    run_dir_ = fs::temp_directory_path() / "fplab_cli_run";
    fs::remove_all(run_dir_);
    const auto r = run_cli("pipeline run --fresh --config '" + kSmoke + "' --out '" + run_dir_.string() + "'");
    ASSERT_EQ(r.code, 0) << r.out;
  }
  static void TearDownTestSuite() { fs::remove_all(run_dir_); }

  static std::string art(const std::string& name) { return "'" + (run_dir_ / "artifacts" / name).string() + "'"; }
  static fs::path run_dir_;
};

fs::path Cli::run_dir_;

}  // namespace

TEST_F(Cli, UsageErrorsAreConfigErrors) {
  EXPECT_EQ(run_cli("").code, 2);
  EXPECT_EQ(run_cli("--help").code, 0);
  EXPECT_EQ(run_cli("frobnicate").code, 2);
  EXPECT_EQ(run_cli("pipeline dry-run").code, 2);
  EXPECT_EQ(run_cli("pipeline dry-run --config /nonexistent.yaml").code, 2);
  EXPECT_EQ(run_cli("pipeline dry-run --config '" + kSmoke + "' --format xml").code, 2);
}

TEST_F(Cli, DryRunPrintsThePlan) {
  const auto r = run_cli("pipeline dry-run --config '" + kSmoke + "'");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out.rfind("gen-data\n", 0), 0u);
  EXPECT_NE(r.out.find("\nattack:merge\nreport\n"), std::string::npos) << r.out;
}

TEST_F(Cli, RunWroteManifestAndReports) {
  EXPECT_TRUE(fs::exists(run_dir_ / "manifest.json"));
  const auto csv = run_cli("report --run '" + run_dir_.string() + "'");
  ASSERT_EQ(csv.code, 0);
  EXPECT_NE(csv.out.find("report,metric,fingerprint"), std::string::npos);
  const auto md = run_cli("report --format md --run '" + run_dir_.string() + "'");
  ASSERT_EQ(md.code, 0);
  EXPECT_NE(md.out.find("|---|"), std::string::npos);
  EXPECT_EQ(run_cli("report --run /nonexistent/run").code, 5);
}

TEST_F(Cli, CrossFamilyTransferIsHomologyExit) {
  const std::string out = (run_dir_ / "x.ckpt").string();
  EXPECT_EQ(run_cli("transfer --adapter " + art("adapter-if-base.ckpt") + " --model " + art("base-fam-b.ckpt") +
                  " --out '" + out + "'")
                .code,
            3);
  EXPECT_FALSE(fs::exists(out));
  EXPECT_EQ(run_cli("transfer --adapter " + art("adapter-if-base.ckpt") + " --model " + art("down-caps.ckpt") +
                  " --out '" + out + "'")
                .code,
            0);
  EXPECT_TRUE(fs::exists(out));
  EXPECT_EQ(run_cli("stack --adapter " + art("adapter-if-base.ckpt") + " --adapter " + art("adapter-utf-base.ckpt") +
                  " --model " + art("base-fam-b.ckpt") + " --out '" + out + "'")
                .code,
            3);
}

TEST_F(Cli, IoErrorsExitFive) {
  const fs::path junk = run_dir_ / "junk.ckpt";
  std::ofstream(junk) << "definitely not a checkpoint";
  EXPECT_EQ(run_cli("eval fsr --config '" + kSmoke + "' --fingerprint if --model '" + junk.string() + "'").code, 5);
  EXPECT_EQ(run_cli("eval fsr --config '" + kSmoke + "' --fingerprint if --model /nonexistent.ckpt").code, 5);
}

TEST_F(Cli, EvalAndAttacksRun) {
  const auto fsr = run_cli("eval fsr --config '" + kSmoke + "' --fingerprint if --model " + art("down-reverse.ckpt") +
                         " --adapter " + art("adapter-if-direct.ckpt"));
  EXPECT_EQ(fsr.code, 0) << fsr.out;
  EXPECT_EQ(run_cli("eval fsr --config '" + kSmoke + "' --fingerprint nope --model " + art("down-reverse.ckpt")).code,
            2);
  const std::string out = (run_dir_ / "attacked.ckpt").string();
  EXPECT_EQ(run_cli("attack prune --model " + art("arm-if-full-ft-direct.ckpt") + " --config '" + kSmoke +
                  "' --strategy l2 --ratio 0.1 --out '" + out + "'")
                .code,
            0);
  EXPECT_TRUE(fs::exists(out));
  EXPECT_EQ(run_cli("attack prune --model " + art("arm-if-full-ft-direct.ckpt") + " --config '" + kSmoke +
                  "' --strategy l2 --ratio 1.5 --out '" + out + "'")
                .code,
            2);
  EXPECT_EQ(run_cli("attack merge --config '" + kSmoke + "' --expert1 " + art("arm-if-full-ft-direct.ckpt") +
                  " --expert2 " + art("down-caps.ckpt") + " --base " + art("base-fam-a.ckpt") +
                  " --method ties --alpha 0.6 --out '" + out + "'")
                .code,
            0);
  EXPECT_EQ(run_cli("attack merge --config '" + kSmoke + "' --expert1 " + art("arm-if-full-ft-direct.ckpt") +
                  " --expert2 " + art("base-fam-b.ckpt") + " --base " + art("base-fam-a.ckpt") + " --out '" + out +
                  "'")
                .code,
            3);
}

TEST_F(Cli, DivergenceExitsFour) {
  const fs::path cfg = run_dir_ / "diverge.yaml";
  std::ifstream in(kSmoke);
  std::stringstream s;
  s << in.rdbuf();
  std::string text = s.str();
  const std::string from = "pretrain: {base_lr: 3.0e-3";
  text.replace(text.find(from), from.size(), "pretrain: {base_lr: 1.0e+30");
  std::ofstream(cfg) << text;
  EXPECT_EQ(run_cli("pretrain --config '" + cfg.string() + "' --family fam-a --out '" + (run_dir_ / "p.ckpt").string() +
                  "'")
                .code,
            4);
}

TEST_F(Cli, StageCommandsReproducePipelineArtifacts) {
  const fs::path p = run_dir_ / "base.ckpt";
  ASSERT_EQ(run_cli("pretrain --config '" + kSmoke + "' --family fam-a --out '" + p.string() + "'").code, 0);
  EXPECT_EQ(fplab::read_checkpoint(p), fplab::read_checkpoint(run_dir_ / "artifacts" / "base-fam-a.ckpt"));
}
