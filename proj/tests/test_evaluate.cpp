#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "crossview/checkpoint.hpp"
#include "crossview/errors.hpp"
#include "crossview/evaluate.hpp"
#include "crossview/synthetic.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace crossview;
using testsupport::TempDir;

namespace {

// One shared 2-category dataset: few hue buckets keep the classifier oracle's
// early stop quick, which dominates this suite's runtime.
const TempDir& shared_dir() {
  static TempDir dir("evaluate_suite");
  return dir;
}

const DatasetManifest& shared_data() {
  static DatasetManifest m = make_synthetic_dataset(60, 505, 64, shared_dir() / "ds", "train", 2);
  return m;
}

std::filesystem::path shared_manifest() {
  shared_data();  // ensure the files exist
  return shared_dir() / "ds" / "manifest.jsonl";
}

int count_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  int n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

}  // namespace

TEST_CASE("self-evaluation scores ground truth perfectly") {
  TempDir out("evaluate_self");
  EvaluateOptions opts;
  opts.manifest = shared_manifest();
  opts.out_dir = out / "report";
  opts.self_eval = true;
  opts.oracle_seed = 11;

  const MetricReport report = evaluate(opts);

  CHECK(report.n_images == 60);
  CHECK(report.n_classes == 2);
  CHECK(report.ssim == 1.0);
  CHECK(report.acc_top1_all == 100.0);
  CHECK(report.acc_top1_conf == 100.0);
  CHECK(report.acc_top5_all == 100.0);
  CHECK(report.acc_top5_conf == 100.0);
  CHECK(report.kl_mean >= 0.0);
  CHECK(std::isfinite(report.kl_mean));
  CHECK(report.inception_all >= 1.0);
  CHECK(report.inception_all <= 2.0);
  // Identical images have zero error, which the metrics report as +inf.
  CHECK(std::isinf(report.psnr));
  CHECK(report.psnr_inf_count == 60);
  CHECK(std::isinf(report.sharp_diff));
  CHECK(report.sharp_inf_count == 60);
  // Ground-truth seg maps quantize back to themselves exactly.
  CHECK(report.has_seg);
  CHECK(report.seg_per_class_acc == 1.0);
  CHECK(report.seg_miou == 1.0);

  CHECK(std::filesystem::exists(opts.out_dir / "report.json"));
  CHECK(std::filesystem::exists(opts.out_dir / "per_image.csv"));
  CHECK(count_lines(opts.out_dir / "per_image.csv") == 61);  // header + one row each

  const std::string csv = testsupport::slurp(opts.out_dir / "per_image.csv");
  CHECK(csv.rfind("id,ssim,psnr,sharp_diff\n", 0) == 0);
  CHECK(csv.find("inf") != std::string::npos);

  // The written report parses and carries the +inf sentinel as null.
  const auto j = nlohmann::json::parse(testsupport::slurp(opts.out_dir / "report.json"));
  CHECK(j["psnr"].is_null());
  CHECK(j["psnr_inf_count"] == 60);
  CHECK(j["ssim"] == 1.0);

  // Same options, fresh run: identical numbers.
  EvaluateOptions again = opts;
  again.out_dir = out / "report2";
  CHECK(evaluate(again).to_json() == report.to_json());
}

TEST_CASE("evaluating an untrained checkpoint produces a sane report") {
  TempDir out("evaluate_ckpt");
  TrainConfig cfg = TrainConfig::defaults_for(64);
  cfg.arch = TrainArch::kFork;
  cfg.seed = 41;
  cfg.out_dir = out / "run";
  Trainer trainer(cfg, shared_data());
  save_checkpoint(trainer.snapshot(), out / "epoch_0.ckpt");

  EvaluateOptions opts;
  opts.checkpoint = out / "epoch_0.ckpt";
  opts.manifest = shared_manifest();
  opts.out_dir = out / "report";
  opts.oracle_seed = 11;
  opts.write_images = true;

  const MetricReport report = evaluate(opts);
  CHECK(report.n_images == 60);
  CHECK(report.ssim > -1.0);
  CHECK(report.ssim < 1.0);
  CHECK(report.acc_top1_all >= 0.0);
  CHECK(report.acc_top1_all <= 100.0);
  CHECK(report.has_seg);  // fork emits a seg head
  CHECK(report.seg_miou >= 0.0);
  CHECK(report.seg_miou <= 1.0);

  CHECK(std::filesystem::exists(opts.out_dir / "report.json"));
  const auto& first_id = shared_data().entries.front().id;
  CHECK(std::filesystem::exists(opts.out_dir / "images" / ("gen_" + first_id + ".png")));
  CHECK(std::filesystem::exists(opts.out_dir / "images" / ("gen_seg_" + first_id + ".png")));
}

TEST_CASE("evaluate rejects unusable inputs before any heavy work") {
  TempDir out("evaluate_bad");

  EvaluateOptions missing;
  missing.manifest = out / "nope.jsonl";
  missing.out_dir = out / "r";
  missing.self_eval = true;
  CHECK_THROWS_AS(evaluate(missing), IoError);

  // A manifest with no rows.
  {
    std::filesystem::create_directories(out / "empty");
    std::ofstream(out / "empty" / "manifest.jsonl");
  }
  EvaluateOptions empty;
  empty.manifest = out / "empty" / "manifest.jsonl";
  empty.out_dir = out / "r2";
  empty.self_eval = true;
  CHECK_THROWS_AS(evaluate(empty), EmptySetError);

  // Too few oracle-training entries to hold out 20%.
  make_synthetic_dataset(4, 77, 64, out / "tiny", "train", 2);
  EvaluateOptions small;
  small.manifest = out / "tiny" / "manifest.jsonl";
  small.out_dir = out / "r3";
  small.self_eval = true;
  CHECK_THROWS_AS(evaluate(small), ConfigError);
}
