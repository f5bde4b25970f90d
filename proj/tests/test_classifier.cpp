#include <cmath>
#include <memory>
#include <vector>

#include "crossview/classifier.hpp"
#include "crossview/errors.hpp"
#include "crossview/metrics.hpp"
#include "crossview/rng.hpp"
#include "crossview/synthetic.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace crossview;
using testsupport::TempDir;

namespace {

// Two trivially separable classes: red-ish vs blue-ish constants plus noise.
void color_blob_data(std::mt19937_64& rng, int n_per_class, std::vector<Image>& images,
                     std::vector<int>& labels) {
  std::uniform_int_distribution<int> noise(-16, 16);
  for (int cls = 0; cls < 2; ++cls) {
    for (int i = 0; i < n_per_class; ++i) {
      Image img(32, 32, 3, PixelRange::Byte);
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
          img.at(y, x, 0) = static_cast<float>(std::clamp((cls == 0 ? 200 : 40) + noise(rng), 0, 255));
          img.at(y, x, 1) = static_cast<float>(std::clamp(90 + noise(rng), 0, 255));
          img.at(y, x, 2) = static_cast<float>(std::clamp((cls == 0 ? 40 : 200) + noise(rng), 0, 255));
        }
      images.push_back(std::move(img));
      labels.push_back(cls);
    }
  }
}

}  // namespace

TEST_CASE("constructor and predict validate their inputs") {
  CHECK_THROWS_AS(SceneClassifier(1, 7), ConfigError);
  SceneClassifier model(4, 7);
  CHECK(model.n_classes() == 4);
  CHECK_THROWS_AS(model.predict({}), EmptySetError);
}

TEST_CASE("untrained predictions are valid distributions") {
  SceneClassifier model(5, 11);
  auto rng = make_rng(1201);
  std::vector<Image> images;
  for (int i = 0; i < 3; ++i) images.push_back(testsupport::random_byte_image(rng, 64, 64));
  PredMatrix preds = model.predict(images);
  REQUIRE(preds.shape() == std::vector<std::int64_t>{3, 5});
  check_pred_matrix(preds);  // rows sum to one, entries nonnegative
}

TEST_CASE("prediction is deterministic and batch-size independent") {
  SceneClassifier model(3, 13);
  auto rng = make_rng(1202);
  std::vector<Image> images;
  for (int i = 0; i < 5; ++i) images.push_back(testsupport::random_byte_image(rng, 32, 32));
  PredMatrix a = model.predict(images);
  PredMatrix b = model.predict(images);
  CHECK(bit_hash(a) == bit_hash(b));
  // Predicting one-by-one matches the batched rows (eval-phase BN).
  for (std::size_t i = 0; i < images.size(); ++i) {
    PredMatrix row = model.predict({images[i]});
    for (std::int64_t j = 0; j < 3; ++j)
      CHECK(row[j] == doctest::Approx(a[static_cast<std::int64_t>(i) * 3 + j]).epsilon(1e-6));
  }
}

TEST_CASE("train_step validates labels and reduces the loss") {
  SceneClassifier model(2, 17);
  auto rng = make_rng(1203);
  std::vector<Image> images;
  std::vector<int> labels;
  color_blob_data(rng, 16, images, labels);

  std::vector<int> bad_labels = labels;
  bad_labels[0] = 2;
  CHECK_THROWS_AS(model.train_step(images, bad_labels, rng), RangeError);
  bad_labels[0] = -1;
  CHECK_THROWS_AS(model.train_step(images, bad_labels, rng), RangeError);
  CHECK_THROWS_AS(model.train_step(images, std::vector<int>(3, 0), rng), ShapeError);

  const double first = model.train_step(images, labels, rng);
  double last = first;
  for (int step = 0; step < 30; ++step) last = model.train_step(images, labels, rng);
  CHECK(first == doctest::Approx(std::log(2.0)).epsilon(0.35));  // near-chance start
  CHECK(last < 0.5 * first);
  CHECK(model.accuracy(images, labels) == doctest::Approx(1.0));
}

TEST_CASE("accuracy counts top-1 hits") {
  SceneClassifier model(2, 19);
  auto rng = make_rng(1204);
  std::vector<Image> images;
  std::vector<int> labels;
  color_blob_data(rng, 8, images, labels);
  for (int step = 0; step < 40; ++step) model.train_step(images, labels, rng);
  CHECK(model.accuracy(images, labels) == 1.0);
  // Deliberately wrong labels give the complement.
  std::vector<int> flipped;
  for (int l : labels) flipped.push_back(1 - l);
  CHECK(model.accuracy(images, flipped) == 0.0);
}

TEST_CASE("oracle training rejects hopeless data quickly") {
  TempDir dir("oracle_reject");
  // Scene images with shuffled category labels cannot be classified: the
  // gate must throw rather than hand back a weak oracle.
  auto manifest = make_synthetic_dataset(20, 31, 64, dir / "ds", "train", 4);
  auto rng = make_rng(1205);
  std::vector<int> cats;
  for (auto& e : manifest.entries) cats.push_back(e.category);
  std::shuffle(cats.begin(), cats.end(), rng);
  // Derangement-ish shuffle: ensure a good fraction of labels moved.
  for (std::size_t i = 0; i < cats.size(); ++i) manifest.entries[i].category = cats[i];

  CHECK_THROWS_AS(
      train_classifier_oracle(manifest, 7, View::kGround, /*epochs=*/1, /*min_steps=*/8),
      OracleRejectedError);
}

TEST_CASE("oracle training validates the manifest metadata") {
  TempDir dir("oracle_meta");
  auto manifest = make_synthetic_dataset(8, 37, 64, dir / "ds", "train", 4);

  DatasetManifest tiny = manifest;
  tiny.entries.resize(4);
  CHECK_THROWS_AS(train_classifier_oracle(tiny, 7), ConfigError);

  DatasetManifest no_cats = manifest;
  no_cats.n_categories = 0;
  CHECK_THROWS_AS(train_classifier_oracle(no_cats, 7), ConfigError);

  DatasetManifest unlabeled = manifest;
  unlabeled.entries[2].category = -1;
  CHECK_THROWS_AS(train_classifier_oracle(unlabeled, 7), ConfigError);
}

TEST_CASE("oracle training is deterministic for a fixed seed") {
  TempDir dir("oracle_det");
  auto manifest = make_synthetic_dataset(30, 41, 64, dir / "ds", "train", 2);

  auto run = [&]() {
    try {
      auto model = train_classifier_oracle(manifest, 5, View::kGround, 1, /*min_steps=*/12);
      return std::unique_ptr<SceneClassifier>(std::move(model));
    } catch (const OracleRejectedError&) {
      return std::unique_ptr<SceneClassifier>();
    }
  };
  auto m1 = run();
  auto m2 = run();
  REQUIRE((m1 == nullptr) == (m2 == nullptr));
  if (m1 && m2) {
    std::vector<Image> probe;
    auto rng = make_rng(1206);
    for (int i = 0; i < 4; ++i) probe.push_back(testsupport::random_byte_image(rng, 64, 64));
    CHECK(bit_hash(m1->predict(probe)) == bit_hash(m2->predict(probe)));
  }
}
