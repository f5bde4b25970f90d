// crossview: one binary for the whole pipeline.
//
//   synth-data   render a paired synthetic dataset
//   train        fit a model from a JSON config
//   evaluate     generate from a checkpoint and score against ground truth
//   grid         tile images (or manifest rows + method outputs) into a sheet
//   knn          L1 nearest-neighbor lookups for generated images
//
// Exit codes: 0 success, 2 usage/input error, 1 runtime failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "crossview/checkpoint.hpp"
#include "crossview/errors.hpp"
#include "crossview/evaluate.hpp"
#include "crossview/montage.hpp"
#include "crossview/png_io.hpp"
#include "crossview/retrieval.hpp"
#include "crossview/runtime.hpp"
#include "crossview/synthetic.hpp"
#include "crossview/trainer.hpp"

namespace fs = std::filesystem;
using namespace crossview;

namespace {

constexpr int kUsageExit = 2;
constexpr int kRuntimeExit = 1;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void require_exists(const fs::path& path, const char* what) {
  if (!fs::exists(path)) {
    throw ConfigError(std::string(what) + " not found: " + path.string());
  }
}

int run_synth_data(int n, std::uint64_t seed, int size, const std::string& out,
                   const std::string& split, int categories) {
  const DatasetManifest manifest =
      make_synthetic_dataset(n, seed, size, out, split, categories);
  std::cout << (fs::path(out) / "manifest.jsonl").string() << "\n";
  (void)manifest;
  return 0;
}

int run_train(const std::string& config_path, const std::string& data_override,
              const std::string& resume) {
  require_exists(config_path, "config");
  const std::string text = read_file(config_path);
  const TrainConfig config = TrainConfig::from_json(text);

  std::string data_path = data_override;
  if (data_path.empty()) {
    // The config file may carry the manifest path alongside the trainer keys.
    const auto j = nlohmann::json::parse(text);
    if (j.contains("data")) data_path = j["data"].get<std::string>();
  }
  if (data_path.empty()) {
    throw ConfigError("no dataset: pass --data or put a \"data\" key in the config");
  }
  require_exists(data_path, "dataset manifest");

  Trainer trainer(config, load_manifest(data_path));
  if (!resume.empty()) {
    require_exists(resume, "checkpoint");
    trainer.load(resume);
  }
  trainer.run();
  std::cout << config.out_dir.string() << "\n";
  return 0;
}

int run_evaluate(const EvaluateOptions& options) {
  if (!options.self_eval) require_exists(options.checkpoint, "checkpoint");
  require_exists(options.manifest, "manifest");
  if (options.oracle_manifest) require_exists(*options.oracle_manifest, "oracle manifest");
  const MetricReport report = evaluate(options);
  std::cout << report.to_json() << "\n";
  return 0;
}

int run_grid(const std::vector<std::string>& images, const std::string& manifest_path,
             int count, const std::vector<std::string>& methods, const std::string& dir_name,
             const std::string& out) {
  if (!images.empty()) {
    // Free-form mode: one row of tiles, no labels. A single input is a
    // passthrough copy.
    std::vector<Image> row;
    for (const std::string& p : images) {
      require_exists(p, "image");
      row.push_back(read_png(p));
    }
    write_png(out, tile_grid({row}, row.size() == 1 ? 0 : 2));
    std::cout << out << "\n";
    return 0;
  }

  require_exists(manifest_path, "manifest");
  const DatasetManifest manifest = load_manifest(manifest_path);
  const Direction dir = direction_from_name(dir_name);
  const Palette palette = dataset_palette(manifest);
  const std::size_t rows_n =
      std::min<std::size_t>(count > 0 ? count : manifest.entries.size(),
                            manifest.entries.size());

  std::vector<std::string> labels = {"input", "truth"};
  std::vector<std::pair<std::string, fs::path>> method_dirs;
  for (const std::string& m : methods) {
    const auto eq = m.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--method wants name=dir, got '" + m + "'");
    }
    method_dirs.emplace_back(m.substr(0, eq), m.substr(eq + 1));
    require_exists(method_dirs.back().second, "method dir");
    labels.push_back(method_dirs.back().first);
  }

  std::vector<std::vector<Image>> grid;
  for (std::size_t i = 0; i < rows_n; ++i) {
    const PairedSample s = load_sample(manifest, i, palette);
    std::vector<Image> row;
    row.push_back(dir == Direction::kA2G ? s.aerial : s.ground);
    row.push_back(dir == Direction::kA2G ? s.ground : s.aerial);
    for (const auto& [name, d] : method_dirs) {
      const fs::path p = d / ("gen_" + s.id + ".png");
      require_exists(p, "generated image");
      row.push_back(read_png(p));
    }
    grid.push_back(std::move(row));
  }
  write_png(out, labeled_grid(labels, grid));
  std::cout << out << "\n";
  return 0;
}

int run_knn(const std::string& checkpoint, const std::string& manifest_path,
            const std::string& train_manifest_path, int k, int count, int downsample,
            const std::string& out_dir) {
  require_exists(checkpoint, "checkpoint");
  require_exists(manifest_path, "manifest");
  require_exists(train_manifest_path, "training manifest");

  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const TrainConfig cfg = TrainConfig::from_json(ckpt.config_json);
  DatasetManifest test = load_manifest(manifest_path);
  if (count > 0 && static_cast<std::size_t>(count) < test.entries.size()) {
    test.entries.resize(static_cast<std::size_t>(count));
  }
  const GenerationResult gen = generate(ckpt, test);

  // Neighbor pool: the training images from the synthesized view.
  const DatasetManifest train = load_manifest(train_manifest_path);
  const Palette palette = dataset_palette(train);
  std::vector<std::string> pool_ids;
  std::vector<Image> pool;
  for (std::size_t i = 0; i < train.entries.size(); ++i) {
    const PairedSample s = load_sample(train, i, palette);
    pool_ids.push_back(s.id);
    pool.push_back(cfg.direction == Direction::kA2G ? s.ground : s.aerial);
  }

  fs::create_directories(out_dir);
  std::ofstream jsonl(fs::path(out_dir) / "knn.jsonl");
  if (!jsonl) throw IoError("knn: cannot write knn.jsonl");

  const Palette test_palette = dataset_palette(test);
  std::vector<std::vector<Image>> grid;
  for (std::size_t i = 0; i < gen.images.size(); ++i) {
    const std::vector<Neighbor> hits = knn_l1(gen.images[i], pool_ids, pool, k, downsample);
    nlohmann::ordered_json rec;
    rec["id"] = gen.ids[i];
    rec["neighbors"] = nlohmann::ordered_json::array();
    for (const Neighbor& nb : hits) {
      rec["neighbors"].push_back({{"id", nb.id}, {"distance", nb.distance}});
    }
    jsonl << rec.dump() << "\n";

    const PairedSample s = load_sample(test, i, test_palette);
    std::vector<Image> row;
    row.push_back(cfg.direction == Direction::kA2G ? s.aerial : s.ground);
    row.push_back(gen.images[i]);
    for (const Neighbor& nb : hits) {
      const auto it = std::find(pool_ids.begin(), pool_ids.end(), nb.id);
      row.push_back(pool[static_cast<std::size_t>(it - pool_ids.begin())]);
    }
    grid.push_back(std::move(row));
  }
  std::vector<std::string> labels = {"query", "generated"};
  for (int r = 1; r <= k; ++r) labels.push_back("nn-" + std::to_string(r));
  write_png(fs::path(out_dir) / "knn.png", labeled_grid(labels, grid));
  std::cout << (fs::path(out_dir) / "knn.jsonl").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  init_runtime();
  CLI::App app{"cross-view image synthesis pipeline"};
  app.require_subcommand(1);

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "render a paired synthetic dataset");
  int synth_n = 64, synth_size = 64, synth_categories = 8;
  std::uint64_t synth_seed = 1;
  std::string synth_out, synth_split = "train";
  synth->add_option("--n", synth_n, "number of scene pairs")->required();
  synth->add_option("--seed", synth_seed, "master seed");
  synth->add_option("--size", synth_size, "image side in px (64 or 256)");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--split", synth_split, "split tag written to meta.json");
  synth->add_option("--categories", synth_categories, "number of scene categories");

  // train
  auto* train = app.add_subcommand("train", "train a model from a JSON config");
  std::string train_config, train_data, train_resume;
  train->add_option("--config", train_config, "JSON config file")->required();
  train->add_option("--data", train_data, "training manifest (overrides config's data key)");
  train->add_option("--resume", train_resume, "checkpoint to resume from");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "score generated images against ground truth");
  EvaluateOptions eval_opts;
  std::string eval_ckpt, eval_manifest, eval_out, eval_oracle, eval_dir = "a2g";
  eval->add_option("--checkpoint", eval_ckpt, "trained checkpoint");
  eval->add_option("--manifest", eval_manifest, "evaluation manifest")->required();
  eval->add_option("--out", eval_out, "output directory")->required();
  eval->add_option("--oracle-manifest", eval_oracle,
                   "manifest for classifier-oracle training (default: evaluation manifest)");
  eval->add_option("--oracle-seed", eval_opts.oracle_seed, "classifier-oracle seed");
  eval->add_flag("--self-eval", eval_opts.self_eval,
                 "score ground truth against itself (pipeline check)");
  eval->add_option("--direction", eval_dir, "a2g|g2a (self-eval only)");
  eval->add_flag("--write-images", eval_opts.write_images, "also dump generated PNGs");

  // grid
  auto* grid = app.add_subcommand("grid", "tile images into a labeled sheet");
  std::vector<std::string> grid_images, grid_methods;
  std::string grid_manifest, grid_out, grid_dir = "a2g";
  int grid_count = 4;
  grid->add_option("--images", grid_images, "free-form tiles for a single unlabeled row");
  grid->add_option("--manifest", grid_manifest, "manifest supplying input|truth columns");
  grid->add_option("--count", grid_count, "rows to draw from the manifest");
  grid->add_option("--method", grid_methods, "name=dir of generated images (repeatable)");
  grid->add_option("--direction", grid_dir, "a2g|g2a");
  grid->add_option("--out", grid_out, "output PNG")->required();

  // knn
  auto* knn = app.add_subcommand("knn", "L1 nearest neighbors of generated images");
  std::string knn_ckpt, knn_manifest, knn_train, knn_out;
  int knn_k = 3, knn_count = 0, knn_down = 1;
  knn->add_option("--checkpoint", knn_ckpt, "trained checkpoint")->required();
  knn->add_option("--manifest", knn_manifest, "query manifest")->required();
  knn->add_option("--train-manifest", knn_train, "neighbor-pool manifest")->required();
  knn->add_option("--k", knn_k, "neighbors per query");
  knn->add_option("--count", knn_count, "limit queries to the first N entries");
  knn->add_option("--downsample", knn_down, "shrink factor before distances");
  knn->add_option("--out", knn_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      return run_synth_data(synth_n, synth_seed, synth_size, synth_out, synth_split,
                            synth_categories);
    }
    if (train->parsed()) return run_train(train_config, train_data, train_resume);
    if (eval->parsed()) {
      eval_opts.checkpoint = eval_ckpt;
      eval_opts.manifest = eval_manifest;
      eval_opts.out_dir = eval_out;
      if (!eval_oracle.empty()) eval_opts.oracle_manifest = eval_oracle;
      eval_opts.direction = direction_from_name(eval_dir);
      if (!eval_opts.self_eval && eval_ckpt.empty()) {
        throw ConfigError("evaluate: --checkpoint is required unless --self-eval is set");
      }
      return run_evaluate(eval_opts);
    }
    if (grid->parsed()) {
      if (grid_images.empty() && grid_manifest.empty()) {
        throw ConfigError("grid: pass --images or --manifest");
      }
      return run_grid(grid_images, grid_manifest, grid_count, grid_methods, grid_dir,
                      grid_out);
    }
    if (knn->parsed()) {
      return run_knn(knn_ckpt, knn_manifest, knn_train, knn_k, knn_count, knn_down, knn_out);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeExit;
  }
  return 0;
}
