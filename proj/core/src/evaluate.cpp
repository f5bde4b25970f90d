#include "crossview/evaluate.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "crossview/checkpoint.hpp"
#include "crossview/classifier.hpp"
#include "crossview/errors.hpp"
#include "crossview/png_io.hpp"
#include "crossview/synthetic.hpp"

namespace crossview {

namespace {

/// Stable text form for the CSV: enough digits to round-trip a double, and a
/// bare "inf" for the +infinity sentinel.
std::string csv_number(double v) {
  if (std::isinf(v)) return "inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double finite_mean(const std::vector<double>& values, int* inf_count) {
  double sum = 0.0;
  int finite = 0;
  *inf_count = 0;
  for (double v : values) {
    if (std::isfinite(v)) {
      sum += v;
      ++finite;
    } else {
      ++*inf_count;
    }
  }
  if (finite == 0) return std::numeric_limits<double>::infinity();
  return sum / finite;
}

}  // namespace

MetricReport evaluate(const EvaluateOptions& options) {
  namespace fs = std::filesystem;
  const DatasetManifest manifest = load_manifest(options.manifest);
  if (manifest.entries.empty()) throw EmptySetError("evaluate: empty manifest");
  const Palette palette = dataset_palette(manifest);

  Direction dir = options.direction;
  GenerationResult gen;
  bool has_seg = false;
  if (options.self_eval) {
    gen.ids.reserve(manifest.entries.size());
  } else {
    const Checkpoint ckpt = load_checkpoint(options.checkpoint);
    const TrainConfig cfg = TrainConfig::from_json(ckpt.config_json);
    dir = cfg.direction;
    gen = generate(ckpt, manifest);
    has_seg = !gen.segs.empty();
  }

  // Ground truth for the chosen direction.
  std::vector<Image> targets;
  std::vector<SegMap> target_segs;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    PairedSample s = load_sample(manifest, i, palette);
    targets.push_back(dir == Direction::kA2G ? std::move(s.ground) : std::move(s.aerial));
    target_segs.push_back(dir == Direction::kA2G ? std::move(s.ground_seg)
                                                 : std::move(s.aerial_seg));
    if (options.self_eval) gen.ids.push_back(s.id);
  }
  if (options.self_eval) {
    gen.images = targets;
    for (const SegMap& m : target_segs) gen.segs.push_back(palette.colorize(m));
    has_seg = true;
  }
  if (gen.images.size() != targets.size()) {
    throw ShapeError("evaluate: generated set and manifest disagree in size");
  }

  // Classifier oracle; its >= 90% held-out gate runs before any
  // classifier-based metric.
  const View target_view = dir == Direction::kA2G ? View::kGround : View::kAerial;
  const DatasetManifest oracle_source =
      options.oracle_manifest ? load_manifest(*options.oracle_manifest) : manifest;
  const std::unique_ptr<SceneClassifier> oracle =
      train_classifier_oracle(oracle_source, options.oracle_seed, target_view);

  MetricReport report;
  report.n_images = static_cast<int>(gen.images.size());
  report.n_classes = oracle->n_classes();

  const PredMatrix gen_preds = oracle->predict(gen.images);
  const PredMatrix real_preds = oracle->predict(targets);
  const int c = oracle->n_classes();

  report.inception_all = inception_score(gen_preds);
  report.inception_top1 = inception_score(topk_smooth(gen_preds, 1));
  // With five or fewer classes every class is already in the top five, so
  // the smoothed variant degenerates to the raw score.
  report.inception_top5 =
      c > 5 ? inception_score(topk_smooth(gen_preds, 5)) : report.inception_all;
  const int k5 = std::min(5, c);
  report.acc_top1_all = topk_accuracy(real_preds, gen_preds, 1, false);
  report.acc_top1_conf = topk_accuracy(real_preds, gen_preds, 1, true);
  report.acc_top5_all = topk_accuracy(real_preds, gen_preds, k5, false);
  report.acc_top5_conf = topk_accuracy(real_preds, gen_preds, k5, true);
  std::tie(report.kl_mean, report.kl_std) = kl_model_data(gen_preds, real_preds);

  fs::create_directories(options.out_dir);
  std::ofstream csv(options.out_dir / "per_image.csv");
  if (!csv) throw IoError("evaluate: cannot write per_image.csv");
  csv << "id,ssim,psnr,sharp_diff\n";

  std::vector<double> ssims, psnrs, sharps;
  for (std::size_t i = 0; i < gen.images.size(); ++i) {
    const double s = ssim(gen.images[i], targets[i]);
    const double p = psnr(gen.images[i], targets[i]);
    const double d = sharpness_difference(gen.images[i], targets[i]);
    ssims.push_back(s);
    psnrs.push_back(p);
    sharps.push_back(d);
    csv << gen.ids[i] << ',' << csv_number(s) << ',' << csv_number(p) << ','
        << csv_number(d) << "\n";
  }
  int dummy = 0;
  report.ssim = finite_mean(ssims, &dummy);
  report.psnr = finite_mean(psnrs, &report.psnr_inf_count);
  report.sharp_diff = finite_mean(sharps, &report.sharp_inf_count);

  if (has_seg) {
    // The common structural classes; soil/void is background and skipped.
    const std::vector<int> classes = {kSky, kRoad, kBuilding, kVegetation};
    double acc_sum = 0.0, iou_sum = 0.0;
    int scored = 0;
    for (std::size_t i = 0; i < gen.segs.size(); ++i) {
      const SegMap pred = palette.quantize(gen.segs[i]);
      try {
        const SegScores s = seg_scores(pred, target_segs[i], classes);
        acc_sum += s.per_class_acc;
        iou_sum += s.miou;
        ++scored;
      } catch (const EmptySetError&) {
        // No evaluated class in this ground-truth map; skip the pair.
      }
    }
    if (scored == 0) {
      throw EmptySetError("evaluate: no image had any evaluated segmentation class");
    }
    report.has_seg = true;
    report.seg_per_class_acc = acc_sum / scored;
    report.seg_miou = iou_sum / scored;
  }

  {
    std::ofstream out(options.out_dir / "report.json");
    if (!out) throw IoError("evaluate: cannot write report.json");
    out << report.to_json() << "\n";
  }
  if (options.write_images && !options.self_eval) {
    write_generated(gen, options.out_dir / "images");
  }
  return report;
}

}  // namespace crossview
