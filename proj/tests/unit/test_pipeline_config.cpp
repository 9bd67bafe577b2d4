// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <string>

#include <gtest/gtest.h>

#include "fplab/errors.hpp"
#include "fplab/pipeline.hpp"

using namespace fplab;

namespace {

const std::string kDesk = std::string(FPLAB_SOURCE_DIR) + "/configs/desk.yaml";

const char* kMinimal = R"(
seed: 3
families:
  - {id: a, model: {d_model: 16, n_layers: 1, n_heads: 2, d_ff: 32}}
downstreams:
  - {id: d, family: a, task: copy}
fingerprints:
  - {id: if, style: if}
target_downstream: d
)";

std::string with(std::string extra) { return std::string(kMinimal) + extra; }

void expect_config_error(const std::string& text, const std::string& needle) {
  try {
    parse_pipeline_config(text);
    ADD_FAILURE() << "expected ConfigError mentioning '" << needle << "'";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
  }
}

}  // namespace

TEST(PipelineConfig, DeskConfigParses) {
  const auto cfg = load_pipeline_config(kDesk);
  EXPECT_EQ(cfg.seed, 2026u);
  ASSERT_EQ(cfg.families.size(), 2u);
  EXPECT_EQ(cfg.families[0].model.d_model, 64);
  EXPECT_EQ(cfg.families[1].model.d_model, 48);
  EXPECT_EQ(cfg.target_downstream, "reverse");
  EXPECT_EQ(cfg.lora.rank, 4);
  EXPECT_EQ(cfg.arms.size(), 3u);
  ASSERT_TRUE(cfg.attacks.finetune && cfg.attacks.prune && cfg.attacks.merge);
  EXPECT_EQ(cfg.attacks.finetune->datasets.size(), 6u);
  EXPECT_EQ(cfg.attacks.prune->entries.size(), 4u);
  EXPECT_EQ(cfg.attacks.merge->methods.size(), 4u);
  EXPECT_EQ(cfg.attacks.merge->alphas.size(), 9u);
  EXPECT_EQ(cfg.attacks.merge->alphas.front(), 0.9);
}

TEST(PipelineConfig, DefaultsOfAMinimalConfig) {
  const auto cfg = parse_pipeline_config(kMinimal);
  EXPECT_EQ(cfg.arms, (std::vector<std::string>{"lora-direct", "lora-transfer"}));
  EXPECT_DOUBLE_EQ(cfg.full_inject.base_lr, cfg.inject.base_lr / 10.0);
  EXPECT_FALSE(cfg.attacks.finetune);
  EXPECT_EQ(cfg.source_text, kMinimal);
}

TEST(PipelineConfig, RejectsBadInput) {
  expect_config_error(with("bogus_key: 1\n"), "bogus_key");
  expect_config_error(with("lora: {rank: 4, alhpa: 8}\n"), "alhpa");
  expect_config_error(with("arms: [lora-direct]\n"), "lora-transfer");
  expect_config_error(with("arms: [lora-direct, lora-transfer, magic]\n"), "magic");
  expect_config_error(R"(
families: [{id: a}, {id: a}]
fingerprints: [{id: if, style: if}]
target_downstream: d
)", "duplicate");
  expect_config_error(R"(
families: [{id: a}]
downstreams: [{id: d, family: zz, task: copy}]
fingerprints: [{id: if, style: if}]
target_downstream: d
)", "zz");
  expect_config_error(R"(
families: [{id: a}]
downstreams: [{id: d, family: a, task: sort}]
fingerprints: [{id: if, style: if}]
target_downstream: d
)", "sort");
  expect_config_error(with("attacks: {merge: {partner: d, alphas: [1.0]}}\n"), "alpha");
  expect_config_error(with("attacks: {prune: {strategies: [{strategy: l1, ratio: 1.0}]}}\n"), "ratio");
  expect_config_error(with("attacks: {finetune: {datasets: [Reddit]}}\n"), "Reddit");
  expect_config_error("[1, 2]", "mapping");
  expect_config_error("a: [unclosed", "");
  EXPECT_THROW(load_pipeline_config("/nonexistent/config.yaml"), ConfigError);
}

TEST(PipelineConfig, PlanListsEveryStageOnce) {
  const auto cfg = load_pipeline_config(kDesk);
  const auto plan = plan_stages(cfg);
  EXPECT_EQ(plan.front(), "gen-data");
  EXPECT_EQ(plan.back(), "report");
  auto sorted = plan;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(std::adjacent_find(sorted.begin(), sorted.end()), sorted.end());
  for (const char* s : {"pretrain:fam-a", "pretrain:fam-b", "derive:reverse", "derive:caps", "inject:if:base",
                        "arm:utf:full-ft-direct", "stacking", "homology", "attack:finetune", "attack:prune",
                        "attack:merge"}) {
    EXPECT_NE(std::find(plan.begin(), plan.end(), s), plan.end()) << s;
  }
  // Pretraining precedes derivation which precedes injection.
  auto pos = [&](const char* s) { return std::find(plan.begin(), plan.end(), s) - plan.begin(); };
  EXPECT_LT(pos("pretrain:fam-a"), pos("derive:reverse"));
  EXPECT_LT(pos("derive:reverse"), pos("inject:if:base"));

  const auto minimal = plan_stages(parse_pipeline_config(kMinimal));
  EXPECT_EQ(std::find(minimal.begin(), minimal.end(), "attack:merge"), minimal.end());
}
