// Drives the installed command-line binary as a subprocess. The binary path
// arrives via the CROSSVIEW_CLI_PATH compile definition.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crossview/checkpoint.hpp"
#include "crossview/dataset.hpp"
#include "crossview/image.hpp"
#include "crossview/montage.hpp"
#include "crossview/png_io.hpp"
#include "crossview/synthetic.hpp"
#include "crossview/trainer.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace crossview;
using testsupport::TempDir;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

CliResult run_cli(const std::string& args, const std::filesystem::path& scratch) {
  const std::filesystem::path capture = scratch / "cli_capture.txt";
  const std::string cmd =
      std::string(CROSSVIEW_CLI_PATH) + " " + args + " > \"" + capture.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  CliResult r;
  if (WIFEXITED(status)) r.exit_code = WEXITSTATUS(status);
  r.output = testsupport::slurp(capture);
  return r;
}

}  // namespace

TEST_CASE("synth-data renders a loadable, reproducible dataset") {
  TempDir dir("cli_synth");
  const auto a = run_cli("synth-data --n 4 --seed 7 --size 64 --out \"" + (dir / "a").string() +
                             "\"",
                         dir.path());
  CAPTURE(a.output);
  REQUIRE(a.exit_code == 0);
  CHECK(a.output.find("manifest.jsonl") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "a" / "manifest.jsonl"));
  CHECK(std::filesystem::exists(dir / "a" / "meta.json"));
  CHECK(std::filesystem::exists(dir / "a" / "palette.json"));

  const DatasetManifest loaded = load_manifest(dir / "a" / "manifest.jsonl");
  CHECK(loaded.entries.size() == 4);
  CHECK(loaded.resolution == 64);

  // Same seed, fresh directory: byte-identical artifacts.
  const auto b = run_cli("synth-data --n 4 --seed 7 --size 64 --out \"" + (dir / "b").string() +
                             "\"",
                         dir.path());
  REQUIRE(b.exit_code == 0);
  CHECK(testsupport::slurp(dir / "a" / "manifest.jsonl") ==
        testsupport::slurp(dir / "b" / "manifest.jsonl"));
  CHECK(testsupport::slurp(dir.path() / "a" / loaded.entries[0].aerial) ==
        testsupport::slurp(dir.path() / "b" / loaded.entries[0].aerial));
}

TEST_CASE("synth-data rejects bad arguments") {
  TempDir dir("cli_synth_bad");
  CHECK(run_cli("synth-data --n 4 --size 100 --out \"" + (dir / "x").string() + "\"", dir.path())
            .exit_code == 2);
  // Missing required --out is a parse error.
  CHECK(run_cli("synth-data --n 4", dir.path()).exit_code != 0);
}

TEST_CASE("train runs from a JSON config and resumes from checkpoints") {
  TempDir dir("cli_train");
  make_synthetic_dataset(4, 19, 64, dir / "ds", "train", 4);
  const std::string manifest = (dir / "ds" / "manifest.jsonl").string();

  auto write_config = [&](const std::string& name, int epochs, const std::string& out_tag) {
    nlohmann::json j;
    j["resolution"] = 64;
    j["arch"] = "baseline";
    j["epochs"] = epochs;
    j["batch_size"] = 4;
    j["seed"] = 5;
    j["sample_count"] = 2;
    j["out_dir"] = (dir / out_tag).string();
    j["data"] = manifest;
    std::ofstream(dir / name) << j.dump();
    return (dir / name).string();
  };

  const std::string cfg1 = write_config("one.json", 1, "run1");
  const auto r1 = run_cli("train --config \"" + cfg1 + "\"", dir.path());
  CAPTURE(r1.output);
  REQUIRE(r1.exit_code == 0);
  CHECK(std::filesystem::exists(dir / "run1" / "checkpoints" / "epoch_1.ckpt"));
  CHECK(std::filesystem::exists(dir / "run1" / "config.json"));
  CHECK(r1.output.find("run1") != std::string::npos);

  const std::string cfg2 = write_config("two.json", 2, "run2");
  const auto r2 = run_cli("train --config \"" + cfg2 + "\" --resume \"" +
                              (dir / "run1" / "checkpoints" / "epoch_1.ckpt").string() + "\"",
                          dir.path());
  CAPTURE(r2.output);
  REQUIRE(r2.exit_code == 0);
  // Resumed at epoch 1, so only epoch 2 runs.
  CHECK(std::filesystem::exists(dir / "run2" / "checkpoints" / "epoch_2.ckpt"));
  CHECK_FALSE(std::filesystem::exists(dir / "run2" / "checkpoints" / "epoch_1.ckpt"));
}

TEST_CASE("train rejects missing inputs with a usage error") {
  TempDir dir("cli_train_bad");
  CHECK(run_cli("train --config \"" + (dir / "nope.json").string() + "\"", dir.path())
            .exit_code == 2);

  // A config without any dataset reference.
  std::ofstream(dir / "nodata.json") << R"({"resolution":64,"epochs":1})";
  CHECK(run_cli("train --config \"" + (dir / "nodata.json").string() + "\"", dir.path())
            .exit_code == 2);
}

TEST_CASE("grid passes a single image through untouched") {
  TempDir dir("cli_grid_one");
  const auto data = make_synthetic_dataset(2, 23, 64, dir / "ds", "train", 4);
  const auto src = dir.path() / "ds" / data.entries[0].aerial;

  const auto r = run_cli("grid --images \"" + src.string() + "\" --out \"" +
                             (dir / "sheet.png").string() + "\"",
                         dir.path());
  CAPTURE(r.output);
  REQUIRE(r.exit_code == 0);
  CHECK(images_equal(read_png(src), read_png(dir / "sheet.png")));
}

TEST_CASE("grid tiles manifest rows exactly like the library call") {
  TempDir dir("cli_grid_manifest");
  const auto data = make_synthetic_dataset(3, 29, 64, dir / "ds", "train", 4);
  const Palette palette = dataset_palette(data);

  const auto r = run_cli("grid --manifest \"" + (dir / "ds" / "manifest.jsonl").string() +
                             "\" --count 2 --direction a2g --out \"" +
                             (dir / "sheet.png").string() + "\"",
                         dir.path());
  CAPTURE(r.output);
  REQUIRE(r.exit_code == 0);

  std::vector<std::vector<Image>> rows;
  for (std::size_t i = 0; i < 2; ++i) {
    const PairedSample s = load_sample(data, i, palette);
    rows.push_back({s.aerial, s.ground});
  }
  const Image expected = labeled_grid({"input", "truth"}, rows);
  CHECK(images_equal(expected, read_png(dir / "sheet.png")));
}

TEST_CASE("grid adds method columns from generated-image directories") {
  TempDir dir("cli_grid_method");
  const auto data = make_synthetic_dataset(2, 31, 64, dir / "ds", "train", 4);
  std::filesystem::create_directories(dir / "gen");
  for (const auto& e : data.entries) {
    std::filesystem::copy_file(dir.path() / "ds" / e.aerial,
                               dir.path() / "gen" / ("gen_" + e.id + ".png"));
  }

  const auto r = run_cli("grid --manifest \"" + (dir / "ds" / "manifest.jsonl").string() +
                             "\" --count 2 --method ours=\"" + (dir / "gen").string() +
                             "\" --out \"" + (dir / "sheet.png").string() + "\"",
                         dir.path());
  CAPTURE(r.output);
  REQUIRE(r.exit_code == 0);
  // Three labeled columns now: input | truth | ours.
  const Image two_col = labeled_grid(
      {"input", "truth"},
      {{load_sample(data, 0, dataset_palette(data)).aerial,
        load_sample(data, 0, dataset_palette(data)).ground}});
  const Image sheet = read_png(dir / "sheet.png");
  CHECK(sheet.width > two_col.width);
}

TEST_CASE("grid errors are usage errors") {
  TempDir dir("cli_grid_bad");
  CHECK(run_cli("grid --manifest \"" + (dir / "nope.jsonl").string() + "\" --out \"" +
                    (dir / "s.png").string() + "\"",
                dir.path())
            .exit_code == 2);
  CHECK(run_cli("grid --out \"" + (dir / "s.png").string() + "\"", dir.path()).exit_code == 2);
}

TEST_CASE("knn writes ranked neighbor records and a contact sheet") {
  TempDir dir("cli_knn");
  const auto data = make_synthetic_dataset(4, 37, 64, dir / "ds", "train", 4);

  TrainConfig cfg = TrainConfig::defaults_for(64);
  cfg.seed = 21;
  cfg.out_dir = dir / "run";
  Trainer trainer(cfg, data);
  save_checkpoint(trainer.snapshot(), dir / "model.ckpt");

  const std::string manifest = (dir / "ds" / "manifest.jsonl").string();
  const auto r = run_cli("knn --checkpoint \"" + (dir / "model.ckpt").string() +
                             "\" --manifest \"" + manifest + "\" --train-manifest \"" + manifest +
                             "\" --k 2 --count 3 --out \"" + (dir / "knn").string() + "\"",
                         dir.path());
  CAPTURE(r.output);
  REQUIRE(r.exit_code == 0);
  CHECK(std::filesystem::exists(dir / "knn" / "knn.png"));

  std::ifstream jsonl(dir / "knn" / "knn.jsonl");
  std::string line;
  int rows = 0;
  while (std::getline(jsonl, line)) {
    const auto rec = nlohmann::json::parse(line);
    CHECK(rec["neighbors"].size() == 2);
    CHECK(rec["neighbors"][0]["distance"].get<double>() <=
          rec["neighbors"][1]["distance"].get<double>());
    ++rows;
  }
  CHECK(rows == 3);
}

TEST_CASE("evaluate and knn surface missing files as usage errors") {
  TempDir dir("cli_eval_bad");
  CHECK(run_cli("evaluate --manifest \"" + (dir / "nope.jsonl").string() + "\" --out \"" +
                    (dir / "r").string() + "\" --self-eval",
                dir.path())
            .exit_code == 2);
  // --checkpoint is required unless --self-eval is given.
  CHECK(run_cli("evaluate --manifest \"" + (dir / "nope.jsonl").string() + "\" --out \"" +
                    (dir / "r").string() + "\"",
                dir.path())
            .exit_code == 2);
  CHECK(run_cli("knn --checkpoint \"" + (dir / "no.ckpt").string() + "\" --manifest \"" +
                    (dir / "no.jsonl").string() + "\" --train-manifest \"" +
                    (dir / "no.jsonl").string() + "\" --out \"" + (dir / "k").string() + "\"",
                dir.path())
            .exit_code == 2);
}

TEST_CASE("unknown subcommands fail") {
  TempDir dir("cli_unknown");
  CHECK(run_cli("frobnicate", dir.path()).exit_code != 0);
  CHECK(run_cli("", dir.path()).exit_code != 0);
}
