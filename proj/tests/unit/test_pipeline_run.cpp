// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "fplab/errors.hpp"
#include "fplab/pipeline.hpp"

using namespace fplab;
namespace fs = std::filesystem;

namespace {

const fs::path kSmoke = fs::path(FPLAB_SOURCE_DIR) / "configs" / "smoke.yaml";

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("fplab_run_" + name);
  fs::remove_all(p);
  return p;
}

PipelineConfig smoke_into(const fs::path& out) {
  auto cfg = load_pipeline_config(kSmoke);
  cfg.out_dir = out;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

}  // namespace

TEST(PipelineRun, FreshRunsAreReproducible) {
  const auto a = scratch("a"), b = scratch("b");
  PipelineOptions fresh;
  fresh.resume = false;
  const auto ra = run_pipeline(smoke_into(a), fresh);
  const auto rb = run_pipeline(smoke_into(b), fresh);
  EXPECT_TRUE(ra.manifest.complete);
  EXPECT_EQ(ra.manifest.content_hashes, rb.manifest.content_hashes);
  EXPECT_EQ(ra.manifest.digest(), rb.manifest.digest());
  EXPECT_FALSE(ra.manifest.content_hashes.empty());

  std::vector<std::string> ran;
  for (const auto& s : ra.manifest.stages) ran.push_back(s.name);
  EXPECT_EQ(ran, plan_stages(smoke_into(a)));

  // The manifest on disk round-trips.
  const auto disk = RunManifest::from_json(slurp(a / "manifest.json"));
  EXPECT_EQ(disk.content_hashes, ra.manifest.content_hashes);
  EXPECT_TRUE(disk.complete);
  for (const char* f : {"effectiveness.csv", "baseline.csv", "homology.csv", "arm_deltas.csv", "merge_task.md"}) {
    EXPECT_TRUE(fs::exists(a / "reports" / f)) << f;
  }
  EXPECT_EQ(slurp(a / "reports" / "effectiveness.csv"), slurp(b / "reports" / "effectiveness.csv"));
  fs::remove_all(b);

  // Resume after losing some artifacts: cached stages are reused, the missing
  // ones rebuilt, and every hash is unchanged.
  fs::remove(a / "artifacts" / "down-caps.ckpt");
  for (const auto& e : fs::directory_iterator(a / "artifacts")) {
    if (e.path().filename().string().rfind("adapter-utf", 0) == 0) fs::remove(e.path());
  }
  const auto rc = run_pipeline(smoke_into(a));
  EXPECT_EQ(rc.manifest.content_hashes, ra.manifest.content_hashes);
  bool any_cached = false;
  for (const auto& s : rc.manifest.stages) {
    any_cached |= s.cached;
    if (s.name == "derive:caps") EXPECT_FALSE(s.cached);
  }
  EXPECT_TRUE(any_cached);
  fs::remove_all(a);
}

TEST(PipelineRun, SeedChangesArtifacts) {
  const auto a = scratch("seed");
  auto cfg = smoke_into(a);
  cfg.seed = 8;
  PipelineOptions fresh;
  fresh.resume = false;
  const auto r8 = run_pipeline(cfg, fresh);
  cfg.seed = 7;
  const auto r7 = run_pipeline(cfg, fresh);
  EXPECT_NE(r8.manifest.digest(), r7.manifest.digest());
  fs::remove_all(a);
}

TEST(PipelineRun, FailureLeavesIncompleteManifest) {
  const auto a = scratch("fail");
  auto cfg = smoke_into(a);
  cfg.families[0].pretrain.base_lr = 1e30;
  PipelineOptions fresh;
  fresh.resume = false;
  try {
    run_pipeline(cfg, fresh);
    FAIL() << "expected PipelineError";
  } catch (const PipelineError& e) {
    try {
      std::rethrow_if_nested(e);
      FAIL() << "expected a nested cause";
    } catch (const DivergenceError&) {
    }
  }
  const auto man = RunManifest::from_json(slurp(a / "manifest.json"));
  EXPECT_FALSE(man.complete);
  EXPECT_EQ(man.failed_stage, "pretrain:fam-a");
  EXPECT_FALSE(man.error.empty());
  fs::remove_all(a);
}
