#include <cstdint>
#include <fstream>
#include <vector>

#include "crossview/checkpoint.hpp"
#include "crossview/errors.hpp"
#include "crossview/rng.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace crossview;
using testsupport::TempDir;

namespace {

Checkpoint sample_checkpoint() {
  Checkpoint c;
  c.epoch = 12;
  c.config_json = R"({"arch":"fork","resolution":64})";
  c.counters["opt_g.t"] = 384;
  c.counters["opt_d.t"] = 384;
  auto rng = make_rng(901);
  c.add("g.enc0.weight", randn<float>({8, 3, 4, 4}, rng));
  c.add("g.enc0.bias", randn<float>({8}, rng));
  c.add("stats.double", randn<double>({5}, rng));
  return c;
}

}  // namespace

TEST_CASE("checkpoints round-trip bit-exactly") {
  TempDir dir("ckpt");
  Checkpoint c = sample_checkpoint();
  const auto path = dir / "model.ckpt";
  save_checkpoint(c, path);

  Checkpoint back = load_checkpoint(path);
  CHECK(back.epoch == 12);
  CHECK(back.config_json == c.config_json);
  CHECK(back.counters.at("opt_g.t") == 384);
  CHECK(back.counters.at("opt_d.t") == 384);
  REQUIRE(back.arrays.size() == 3);

  // Typed fetch reproduces the exact bits.
  Tensor<float> w = back.tensor<float>("g.enc0.weight");
  CHECK(w.shape() == std::vector<std::int64_t>{8, 3, 4, 4});
  CHECK(bit_hash(w) == bit_hash(c.tensor<float>("g.enc0.weight")));
  Tensor<double> d = back.tensor<double>("stats.double");
  CHECK(bit_hash(d) == bit_hash(c.tensor<double>("stats.double")));

  // Saving the loaded copy reproduces identical file bytes.
  const auto path2 = dir / "model2.ckpt";
  save_checkpoint(back, path2);
  CHECK(testsupport::slurp(path) == testsupport::slurp(path2));
}

TEST_CASE("find and typed fetch enforce names and dtypes") {
  Checkpoint c = sample_checkpoint();
  CHECK(c.find("g.enc0.weight") != nullptr);
  CHECK(c.find("g.enc0.weight")->dtype == "f32");
  CHECK(c.find("nope") == nullptr);
  CHECK_THROWS_AS(c.tensor<float>("nope"), CheckpointError);
  // dtype mismatch: stored as f32, asked as f64.
  CHECK_THROWS_AS(c.tensor<double>("g.enc0.weight"), CheckpointError);
  CHECK_THROWS_AS(c.tensor<float>("stats.double"), CheckpointError);
}

TEST_CASE("loading rejects missing, corrupt and truncated files") {
  TempDir dir("ckpt_bad");
  // A file that cannot be opened is an I/O failure, not a corrupt archive.
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);

  // Wrong magic.
  {
    std::ofstream out(dir / "bad_magic.ckpt", std::ios::binary);
    out << "NOTACKPT the rest does not matter";
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "bad_magic.ckpt"), CheckpointError);

  // Valid file truncated mid-payload.
  Checkpoint c = sample_checkpoint();
  save_checkpoint(c, dir / "full.ckpt");
  std::string bytes = testsupport::slurp(dir / "full.ckpt");
  REQUIRE(bytes.size() > 64);
  {
    std::ofstream out(dir / "cut.ckpt", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 40));
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "cut.ckpt"), CheckpointError);

  // Truncated inside the JSON header as well.
  {
    std::ofstream out(dir / "cut_header.ckpt", std::ios::binary);
    out.write(bytes.data(), 16);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "cut_header.ckpt"), CheckpointError);
}

TEST_CASE("empty checkpoints and overwrite both work") {
  TempDir dir("ckpt_more");
  Checkpoint empty;
  save_checkpoint(empty, dir / "empty.ckpt");
  Checkpoint back = load_checkpoint(dir / "empty.ckpt");
  CHECK(back.epoch == 0);
  CHECK(back.arrays.empty());
  CHECK(back.counters.empty());

  // Overwriting an existing file replaces it cleanly.
  Checkpoint c = sample_checkpoint();
  save_checkpoint(c, dir / "empty.ckpt");
  CHECK(load_checkpoint(dir / "empty.ckpt").epoch == 12);
}
