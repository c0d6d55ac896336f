#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mgt/config.hpp"
#include "mgt/errors.hpp"
#include "mgt/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

mgt::Config tiny_config() {
  mgt::Config c;
  c.train_dialogs = 90;
  c.valid_dialogs = 30;
  c.test_dialogs = 30;
  c.k = 5;
  c.levels = 3;
  c.epochs = 2;
  c.emb_dim = 6;
  c.hidden = 8;
  c.truncation = 50;
  c.probe_epochs = 3;
  c.finetune_epochs = 1;
  c.bootstrap_iterations = 200;
  c.seed = 11;
  return c;
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("mgt_pipeline_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// One complete run shared by the read-only tests.
const fs::path& completed_run() {
  static const fs::path dir = [] {
    fs::path d = fresh_dir("complete");
    mgt::Pipeline p(d, tiny_config());
    mgt::StageOptions opts;
    opts.finetune = true;
    p.run_all(opts);
    return d;
  }();
  return dir;
}

}  // namespace

TEST(Pipeline, StageNames) {
  EXPECT_EQ(std::string(mgt::stage_name(mgt::Stage::train_baseline)), "train-baseline");
  EXPECT_EQ(mgt::parse_stage("build-buckets"), mgt::Stage::build_buckets);
  EXPECT_FALSE(mgt::parse_stage("train").has_value());
  EXPECT_EQ(mgt::all_stages().size(), 7u);
}

TEST(Pipeline, StageOrderIsEnforced) {
  mgt::Pipeline p(fresh_dir("order"), tiny_config());
  try {
    p.run(mgt::Stage::train_baseline);
    FAIL() << "expected StageOrderError";
  } catch (const mgt::StageOrderError& e) {
    EXPECT_NE(std::string(e.what()).find("generate"), std::string::npos) << e.what();
  }
  p.run(mgt::Stage::generate);
  EXPECT_THROW(p.run(mgt::Stage::train_mgt), mgt::StageOrderError);
}

TEST(Pipeline, FullRunProducesReports) {
  const auto& dir = completed_run();
  for (const char* rel : {"reports/metrics.txt", "reports/summary.txt", "reports/eval_metrics.txt",
                          "reports/probe_metrics.txt", "baseline/vanilla.bundle", "mgt/mgt.bundle",
                          "buckets/similarity.txt", "buckets/levels_example.txt", "data/vocab.txt"}) {
    EXPECT_TRUE(fs::exists(dir / rel)) << rel;
  }
  const std::string metrics = slurp(dir / "reports/metrics.txt");
  for (const char* key : {"retrieval.baseline.mrr", "retrieval.mgt.mrr", "retrieval.vanilla.mrr",
                          "significance.mgt_vs_baseline.p", "negatives.level_3.mean_cosine",
                          "probe.sweep.rho_bow", "probe.transfer.mgt.abstract.f1",
                          "probe.finetune.baseline.bow.f1"}) {
    EXPECT_NE(metrics.find(key), std::string::npos) << key;
  }
  mgt::Pipeline reopened(dir, tiny_config());
  EXPECT_NO_THROW(reopened.verify());
}

TEST(Pipeline, CompletedStagesAreNotRerun) {
  const auto& dir = completed_run();
  mgt::StageOptions opts;
  opts.finetune = true;
  mgt::Pipeline p(dir, tiny_config());
  const auto before = fs::last_write_time(dir / "mgt/mgt.bundle");
  EXPECT_FALSE(p.run(mgt::Stage::train_mgt, opts));
  EXPECT_FALSE(p.run(mgt::Stage::report, opts));
  EXPECT_EQ(fs::last_write_time(dir / "mgt/mgt.bundle"), before);
}

TEST(Pipeline, ConfigDriftIsRejected) {
  const auto& dir = completed_run();
  auto changed = tiny_config();
  changed.levels = 4;
  try {
    mgt::Pipeline p(dir, changed);
    FAIL() << "expected DriftError";
  } catch (const mgt::DriftError& e) {
    EXPECT_NE(std::string(e.what()).find("L (3 -> 4)"), std::string::npos) << e.what();
  }
}

TEST(Pipeline, TamperedArtifactIsDetected) {
  auto dir = fresh_dir("tamper");
  mgt::Pipeline p(dir, tiny_config());
  p.run(mgt::Stage::generate);
  p.run(mgt::Stage::train_baseline);
  {
    std::ofstream out(dir / "baseline/best.ckpt", std::ios::app | std::ios::binary);
    out << "x";
  }
  EXPECT_THROW(p.verify(), mgt::IntegrityError);
  EXPECT_THROW(p.run(mgt::Stage::build_buckets), mgt::IntegrityError);
}

TEST(Pipeline, ChangedOptionsRerunAndInvalidateDownstream) {
  auto dir = fresh_dir("options");
  fs::copy(completed_run(), dir, fs::copy_options::recursive);
  mgt::Pipeline p(dir, tiny_config());
  mgt::StageOptions only_mgt;
  only_mgt.ensemble_modes = {mgt::EnsembleMode::mgt};
  EXPECT_TRUE(p.run(mgt::Stage::evaluate, only_mgt));
  EXPECT_FALSE(p.manifest().stages.at("probe").complete);
  EXPECT_FALSE(p.manifest().stages.at("report").complete);
  EXPECT_THROW(p.run(mgt::Stage::report, only_mgt), mgt::StageOrderError);
  const std::string eval = slurp(dir / "reports/eval_metrics.txt");
  EXPECT_EQ(eval.find("retrieval.vanilla.mrr"), std::string::npos);
}

TEST(Pipeline, IdenticalSeedsGiveIdenticalReports) {
  auto a = fresh_dir("det_a");
  auto b = fresh_dir("det_b");
  auto config = tiny_config();
  config.probe_epochs = 2;
  mgt::Pipeline(a, config).run_all();
  mgt::Pipeline(b, config).run_all();
  EXPECT_EQ(slurp(a / "reports/metrics.txt"), slurp(b / "reports/metrics.txt"));
  EXPECT_EQ(slurp(a / "reports/summary.txt"), slurp(b / "reports/summary.txt"));
  EXPECT_EQ(slurp(a / "mgt/mgt.bundle"), slurp(b / "mgt/mgt.bundle"));
}
