#include "crossview/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "crossview/errors.hpp"
#include "crossview/montage.hpp"
#include "crossview/png_io.hpp"
#include "crossview/rng.hpp"

namespace crossview {

std::string train_arch_name(TrainArch a) {
  switch (a) {
    case TrainArch::kBaseline: return "baseline";
    case TrainArch::kFork: return "fork";
    case TrainArch::kXSeq: return "xseq";
  }
  return "baseline";
}

TrainArch train_arch_from_name(const std::string& name) {
  if (name == "baseline") return TrainArch::kBaseline;
  if (name == "fork") return TrainArch::kFork;
  if (name == "xseq") return TrainArch::kXSeq;
  throw ConfigError("unknown arch '" + name + "' (want baseline|fork|xseq)");
}

std::string direction_name(Direction d) { return d == Direction::kA2G ? "a2g" : "g2a"; }

Direction direction_from_name(const std::string& name) {
  if (name == "a2g") return Direction::kA2G;
  if (name == "g2a") return Direction::kG2A;
  throw ConfigError("unknown direction '" + name + "' (want a2g|g2a)");
}

TrainConfig TrainConfig::defaults_for(int resolution) {
  TrainConfig c;
  c.resolution = resolution;
  if (resolution == 256) {
    c.epochs = 35;
    c.batch_size = 4;
    c.jitter = 30;
  } else {
    c.epochs = 100;
    c.batch_size = 16;
    c.jitter = 8;
  }
  return c;
}

void TrainConfig::validate() const {
  if (resolution != 64 && resolution != 256) throw ConfigError("config: resolution must be 64 or 256");
  if (epochs < 0) throw ConfigError("config: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  if (lr <= 0) throw ConfigError("config: lr must be > 0");
  if (lambda < 0) throw ConfigError("config: lambda must be >= 0");
  if (real_label <= 0 || real_label > 1) throw ConfigError("config: real_label must be in (0,1]");
  if (jitter < 0) throw ConfigError("config: jitter must be >= 0");
  if (checkpoint_keep < 0) throw ConfigError("config: checkpoint_keep must be >= 0");
  if (sample_count < 0) throw ConfigError("config: sample_count must be >= 0");
}

std::string TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["arch"] = train_arch_name(arch);
  j["direction"] = direction_name(direction);
  j["resolution"] = resolution;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["lr"] = lr;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["lambda"] = lambda;
  j["real_label"] = real_label;
  j["seed"] = seed;
  j["out_dir"] = out_dir.string();
  j["augment"] = augment;
  j["jitter"] = jitter;
  j["unet_skips"] = unet_skips;
  j["non_saturating"] = non_saturating;
  j["checkpoint_keep"] = checkpoint_keep;
  j["sample_count"] = sample_count;
  j["paranoid_checks"] = paranoid_checks;
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  TrainConfig base;
  if (j.contains("resolution")) base = defaults_for(j["resolution"].get<int>());
  TrainConfig c = base;
  if (j.contains("arch")) c.arch = train_arch_from_name(j["arch"].get<std::string>());
  if (j.contains("direction")) c.direction = direction_from_name(j["direction"].get<std::string>());
  if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
  if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
  if (j.contains("lr")) c.lr = j["lr"].get<double>();
  if (j.contains("beta1")) c.beta1 = j["beta1"].get<double>();
  if (j.contains("beta2")) c.beta2 = j["beta2"].get<double>();
  if (j.contains("lambda")) c.lambda = j["lambda"].get<double>();
  if (j.contains("real_label")) c.real_label = j["real_label"].get<double>();
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
  if (j.contains("augment")) c.augment = j["augment"].get<bool>();
  if (j.contains("jitter")) c.jitter = j["jitter"].get<int>();
  if (j.contains("unet_skips")) c.unet_skips = j["unet_skips"].get<bool>();
  if (j.contains("non_saturating")) c.non_saturating = j["non_saturating"].get<bool>();
  if (j.contains("checkpoint_keep")) c.checkpoint_keep = j["checkpoint_keep"].get<int>();
  if (j.contains("sample_count")) c.sample_count = j["sample_count"].get<int>();
  if (j.contains("paranoid_checks")) c.paranoid_checks = j["paranoid_checks"].get<bool>();
  c.validate();
  return c;
}

namespace {

using F = float;

Arch generator_arch(TrainArch a) { return a == TrainArch::kFork ? Arch::kFork : Arch::kBaseline; }

template <typename T>
void axpy_into(Tensor<T>& acc, double alpha, const Tensor<T>& g) {
  if (!acc.same_shape(g)) throw ShapeError("axpy_into: shape mismatch");
  for (std::int64_t i = 0; i < acc.numel(); ++i) {
    acc[i] = static_cast<T>(acc[i] + alpha * g[i]);
  }
}

/// Mean BCE of a score vector against one target, with gradient.
double bce_mean(const Tensor<F>& scores, double target, Tensor<F>* d_scores) {
  const std::int64_t n = scores.numel();
  const double inv_n = 1.0 / static_cast<double>(n);
  if (d_scores) *d_scores = Tensor<F>(scores.shape());
  double loss = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double s = std::clamp(static_cast<double>(scores[i]), kScoreClamp, 1.0 - kScoreClamp);
    loss += inv_n * bce(s, target);
    if (d_scores) {
      (*d_scores)[i] = static_cast<F>(inv_n * (-target / s + (1.0 - target) / (1.0 - s)));
    }
  }
  return loss;
}

std::uint64_t fold_hash(std::uint64_t acc, std::uint64_t h) {
  acc ^= h + 0x9e3779b97f4a7c15ull + (acc << 6) + (acc >> 2);
  return acc;
}

}  // namespace

struct Trainer::Impl {
  TrainConfig cfg;
  DatasetManifest data;
  Palette palette;
  std::vector<std::optional<PairedSample>> cache;

  NetworkSpec gspec;
  std::unique_ptr<Generator<F>> g1;
  std::unique_ptr<Discriminator<F>> d1;
  std::unique_ptr<Generator<F>> g2;        // xseq
  std::unique_ptr<Discriminator<F>> d2;    // xseq
  std::unique_ptr<Adam<F>> opt_g;          // g1 (+ g2) jointly
  std::unique_ptr<Adam<F>> opt_d1;
  std::unique_ptr<Adam<F>> opt_d2;

  std::ofstream log;
  std::int64_t global_step = 0;

  const PairedSample& sample(std::size_t i) {
    auto& slot = cache[i];
    if (!slot) slot = load_sample(data, i, palette);
    return *slot;
  }

  std::vector<Param<F>*> gen_params() {
    auto p = g1->params();
    if (g2) {
      auto p2 = g2->params();
      p.insert(p.end(), p2.begin(), p2.end());
    }
    return p;
  }

  std::vector<Param<F>*> dis_params() {
    auto p = d1->params();
    if (d2) {
      auto p2 = d2->params();
      p.insert(p.end(), p2.begin(), p2.end());
    }
    return p;
  }

  std::uint64_t checksum(const std::vector<Param<F>*>& params) const {
    std::uint64_t acc = 0xcbf29ce484222325ull;
    for (const Param<F>* p : params) acc = fold_hash(acc, bit_hash(p->value));
    return acc;
  }

  /// Learned parameters only. The cross-phase paranoid asserts use this:
  /// forwarding the opposite network in train mode legitimately moves its
  /// BN running stats, but must never move anything the optimizers own.
  std::uint64_t checksum_trainable(const std::vector<Param<F>*>& params) const {
    std::uint64_t acc = 0xcbf29ce484222325ull;
    for (const Param<F>* p : params) {
      if (p->trainable) acc = fold_hash(acc, bit_hash(p->value));
    }
    return acc;
  }

  struct Batch {
    Tensor<F> cond;
    Tensor<F> target;
    Tensor<F> target_seg;
    std::vector<std::string> ids;
  };

  Batch make_batch(const std::vector<std::size_t>& indices, std::mt19937_64& rng,
                   bool with_augment) {
    std::vector<Image> cond_imgs, target_imgs, seg_imgs;
    Batch b;
    for (std::size_t idx : indices) {
      PairedSample s = sample(idx);
      if (with_augment) s = augment(s, rng, cfg.jitter);
      const bool a2g = cfg.direction == Direction::kA2G;
      cond_imgs.push_back(a2g ? s.aerial : s.ground);
      target_imgs.push_back(a2g ? s.ground : s.aerial);
      seg_imgs.push_back(palette.colorize(a2g ? s.ground_seg : s.aerial_seg));
      b.ids.push_back(s.id);
    }
    b.cond = to_nchw<F>(cond_imgs);
    b.target = to_nchw<F>(target_imgs);
    b.target_seg = to_nchw<F>(seg_imgs);
    return b;
  }

  /// One D update on (cond, real) vs (cond, fake); fake stays detached
  /// because no generator backward is invoked.
  double update_discriminator(Discriminator<F>& d, Adam<F>& opt, const Tensor<F>& cond,
                              const Tensor<F>& real, const Tensor<F>& fake,
                              const ForwardCtx& ctx) {
    opt.zero_grad();
    Tensor<F> d_scores;
    const Tensor<F> real_s = d.forward(cond, real, ctx);
    const double loss_real = bce_mean(real_s, cfg.real_label, &d_scores);
    d.backward(d_scores);
    const Tensor<F> fake_s = d.forward(cond, fake, ctx);
    const double loss_fake = bce_mean(fake_s, 0.0, &d_scores);
    d.backward(d_scores);
    opt.step();
    return loss_real + loss_fake;
  }

  LossReport step(const Batch& batch, std::mt19937_64& rng) {
    ForwardCtx ctx{Phase::kTrain, &rng};
    LossComponents parts;

    auto g1_out = g1->forward(batch.cond, ctx);
    typename Generator<F>::Output g2_out;
    if (g2) g2_out = g2->forward(g1_out.image, ctx);

    const std::uint64_t g_before = cfg.paranoid_checks ? checksum_trainable(gen_params()) : 0;

    parts.d_loss =
        update_discriminator(*d1, *opt_d1, batch.cond, batch.target, g1_out.image, ctx);
    if (d2) {
      // Stage-2 pair per the chained objective: conditioning is the
      // generated image, candidate is the (real|generated) seg map.
      parts.d2_loss =
          update_discriminator(*d2, *opt_d2, g1_out.image, batch.target_seg, g2_out.image, ctx);
    }

    if (cfg.paranoid_checks && checksum_trainable(gen_params()) != g_before) {
      throw TrainingDivergedError("paranoid check failed: D update touched generator params");
    }
    const std::uint64_t d_before = cfg.paranoid_checks ? checksum_trainable(dis_params()) : 0;

    // Generator update.
    opt_g->zero_grad();
    Tensor<F> d_scores;
    const Tensor<F> fake_s1 = d1->forward(batch.cond, g1_out.image, ctx);
    parts.g_gan = gan_loss_generator(fake_s1, cfg.non_saturating, &d_scores);
    auto [d1_cond, d1_cand] = d1->backward(d_scores);
    (void)d1_cond;

    Tensor<F> dl1_img;
    parts.g_l1_image = l1_loss(g1_out.image, batch.target, &dl1_img);

    Tensor<F> d_image = d1_cand;
    axpy_into(d_image, cfg.lambda, dl1_img);

    if (cfg.arch == TrainArch::kBaseline) {
      g1->backward(d_image);
    } else if (cfg.arch == TrainArch::kFork) {
      Tensor<F> dl1_seg;
      parts.g_l1_seg = l1_loss(g1_out.seg, batch.target_seg, &dl1_seg);
      Tensor<F> d_seg(dl1_seg.shape());
      axpy_into(d_seg, cfg.lambda, dl1_seg);
      g1->backward(d_image, d_seg);
    } else {
      const Tensor<F> fake_s2 = d2->forward(g1_out.image, g2_out.image, ctx);
      parts.g2_gan = gan_loss_generator(fake_s2, cfg.non_saturating, &d_scores);
      auto [d2_cond, d2_cand] = d2->backward(d_scores);

      Tensor<F> dl1_seg;
      parts.g2_l1_seg = l1_loss(g2_out.image, batch.target_seg, &dl1_seg);
      Tensor<F> d_stage2 = d2_cand;
      axpy_into(d_stage2, cfg.lambda, dl1_seg);
      const Tensor<F> d_from_g2 = g2->backward(d_stage2);

      // I_g' feeds three paths: D1's candidate, G2's input, D2's
      // conditioning — plus the direct L1 term already in d_image.
      axpy_into(d_image, 1.0, d_from_g2);
      axpy_into(d_image, 1.0, d2_cond);
      g1->backward(d_image);
    }
    opt_g->step();

    if (cfg.paranoid_checks && checksum_trainable(dis_params()) != d_before) {
      throw TrainingDivergedError("paranoid check failed: G update touched discriminator params");
    }

    switch (cfg.arch) {
      case TrainArch::kBaseline: return objective_baseline(parts, cfg.lambda);
      case TrainArch::kFork: return objective_fork(parts, cfg.lambda);
      case TrainArch::kXSeq: return objective_xseq(parts, cfg.lambda);
    }
    return objective_baseline(parts, cfg.lambda);
  }
};

Trainer::Trainer(TrainConfig config, DatasetManifest data) : config_(std::move(config)) {
  config_.validate();
  if (data.split != "train") throw ConfigError("trainer: manifest split must be 'train'");
  if (data.resolution != 0 && data.resolution != config_.resolution) {
    throw ConfigError("trainer: manifest resolution " + std::to_string(data.resolution) +
                      " does not match config " + std::to_string(config_.resolution));
  }
  if (data.entries.empty()) throw ConfigError("trainer: empty manifest");

  impl_ = std::make_unique<Impl>();
  impl_->cfg = config_;
  impl_->palette = dataset_palette(data);
  impl_->data = std::move(data);
  impl_->cache.resize(impl_->data.entries.size());

  impl_->gspec = NetworkSpec::make(generator_arch(config_.arch), config_.resolution,
                                   config_.unet_skips);
  NetworkSpec dspec = NetworkSpec::make(Arch::kBaseline, config_.resolution, false);

  auto rng = make_rng(mix_seed(config_.seed, 0xC0DEull));
  impl_->g1 = std::make_unique<Generator<F>>(impl_->gspec, "g1");
  initialize(impl_->g1->params(), rng);
  impl_->d1 = std::make_unique<Discriminator<F>>(dspec, 3, 3, "d1");
  initialize(impl_->d1->params(), rng);
  if (config_.arch == TrainArch::kXSeq) {
    impl_->g2 = std::make_unique<Generator<F>>(
        NetworkSpec::make(Arch::kBaseline, config_.resolution, config_.unet_skips), "g2");
    initialize(impl_->g2->params(), rng);
    impl_->d2 = std::make_unique<Discriminator<F>>(dspec, 3, 3, "d2");
    initialize(impl_->d2->params(), rng);
  }

  impl_->opt_g = std::make_unique<Adam<F>>(impl_->gen_params(), config_.lr, config_.beta1,
                                           config_.beta2);
  impl_->opt_d1 = std::make_unique<Adam<F>>(impl_->d1->params(), config_.lr, config_.beta1,
                                            config_.beta2);
  if (impl_->d2) {
    impl_->opt_d2 = std::make_unique<Adam<F>>(impl_->d2->params(), config_.lr, config_.beta1,
                                              config_.beta2);
  }
}

Trainer::~Trainer() = default;

Checkpoint Trainer::snapshot() const {
  Checkpoint ckpt;
  ckpt.epoch = epoch_;
  ckpt.config_json = config_.to_json();
  for (Param<F>* p : impl_->gen_params()) ckpt.add(p->name, p->value);
  for (Param<F>* p : impl_->dis_params()) ckpt.add(p->name, p->value);
  auto dump_opt = [&](Adam<F>& opt, const std::string& tag) {
    for (const auto& slot : opt.slots()) {
      ckpt.add(tag + ".m." + *slot.name, *slot.m);
      ckpt.add(tag + ".v." + *slot.name, *slot.v);
    }
    ckpt.counters[tag + ".t"] = opt.t();
  };
  dump_opt(*impl_->opt_g, "adam_g");
  dump_opt(*impl_->opt_d1, "adam_d1");
  if (impl_->opt_d2) dump_opt(*impl_->opt_d2, "adam_d2");
  return ckpt;
}

void Trainer::load(const std::filesystem::path& ckpt_path) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  TrainConfig saved;
  try {
    saved = TrainConfig::from_json(ckpt.config_json);
  } catch (const ConfigError& e) {
    throw ArchMismatchError(std::string("checkpoint config unreadable: ") + e.what());
  }
  if (saved.arch != config_.arch || saved.resolution != config_.resolution ||
      saved.direction != config_.direction || saved.unet_skips != config_.unet_skips) {
    throw ArchMismatchError("checkpoint was written by arch=" + train_arch_name(saved.arch) +
                            "/res=" + std::to_string(saved.resolution) + "/dir=" +
                            direction_name(saved.direction) + ", requested arch=" +
                            train_arch_name(config_.arch) + "/res=" +
                            std::to_string(config_.resolution) + "/dir=" +
                            direction_name(config_.direction));
  }
  auto restore = [&](const std::vector<Param<F>*>& params) {
    for (Param<F>* p : params) {
      const Tensor<F> t = [&] {
        try {
          return ckpt.tensor<F>(p->name);
        } catch (const CheckpointError& e) {
          throw ArchMismatchError(e.what());
        }
      }();
      if (!t.same_shape(p->value)) {
        throw ArchMismatchError("checkpoint: shape mismatch for '" + p->name + "'");
      }
      p->value = t;
    }
  };
  restore(impl_->gen_params());
  restore(impl_->dis_params());
  auto restore_opt = [&](Adam<F>& opt, const std::string& tag) {
    for (auto& slot : opt.slots()) {
      *slot.m = ckpt.tensor<F>(tag + ".m." + *slot.name);
      *slot.v = ckpt.tensor<F>(tag + ".v." + *slot.name);
    }
    const auto it = ckpt.counters.find(tag + ".t");
    if (it == ckpt.counters.end()) throw ArchMismatchError("checkpoint: missing " + tag + ".t");
    opt.set_t(it->second);
  };
  restore_opt(*impl_->opt_g, "adam_g");
  restore_opt(*impl_->opt_d1, "adam_d1");
  if (impl_->opt_d2) restore_opt(*impl_->opt_d2, "adam_d2");
  epoch_ = ckpt.epoch;
  impl_->global_step = static_cast<std::int64_t>(impl_->opt_g->t());
}

LossReport Trainer::step_batch(const std::vector<std::size_t>& indices, std::mt19937_64& rng) {
  const auto batch = impl_->make_batch(indices, rng, config_.augment);
  return impl_->step(batch, rng);
}

std::uint64_t Trainer::params_checksum(char side) const {
  return impl_->checksum(side == 'g' ? impl_->gen_params() : impl_->dis_params());
}

namespace {

void append_log(std::ofstream& log, const nlohmann::ordered_json& rec) {
  log << rec.dump() << "\n";
  log.flush();
}

bool report_finite(const LossReport& r) {
  for (double v : {r.d_loss, r.g_gan, r.g_l1_image, r.g_l1_seg, r.d2_loss, r.g2_gan,
                   r.g2_l1_seg, r.total_g}) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace

void Trainer::run() {
  namespace fs = std::filesystem;
  fs::create_directories(config_.out_dir);
  fs::create_directories(config_.out_dir / "checkpoints");
  fs::create_directories(config_.out_dir / "samples");
  {
    std::ofstream cfg_out(config_.out_dir / "config.json");
    cfg_out << config_.to_json() << "\n";
  }
  std::ofstream log(config_.out_dir / "log.jsonl", std::ios::app);
  if (!log) throw IoError("trainer: cannot open log.jsonl");

  const std::size_t n = impl_->data.entries.size();
  for (int ep = epoch_; ep < config_.epochs; ++ep) {
    auto rng = make_rng(mix_seed(config_.seed, static_cast<std::uint64_t>(ep)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    std::size_t pos = 0;
    int step_in_epoch = 0;
    double sum_d = 0.0, sum_g = 0.0;
    while (pos < n) {
      const std::size_t take = std::min<std::size_t>(config_.batch_size, n - pos);
      if (take < 2 && n >= 2) break;  // leftover single sample starves batch norm
      std::vector<std::size_t> indices(order.begin() + static_cast<std::ptrdiff_t>(pos),
                                       order.begin() + static_cast<std::ptrdiff_t>(pos + take));
      pos += take;

      const auto batch = impl_->make_batch(indices, rng, config_.augment);
      const LossReport report = impl_->step(batch, rng);
      ++impl_->global_step;

      nlohmann::ordered_json rec = nlohmann::ordered_json::parse(report.to_json());
      rec["epoch"] = ep;
      rec["step"] = step_in_epoch;
      rec["global_step"] = impl_->global_step;
      if (!report_finite(report)) {
        rec["event"] = "diverged";
        append_log(log, rec);
        throw TrainingDivergedError("non-finite loss at epoch " + std::to_string(ep) +
                                    " step " + std::to_string(step_in_epoch));
      }
      append_log(log, rec);
      sum_d += report.d_loss + report.d2_loss;
      sum_g += report.total_g;
      ++step_in_epoch;
    }

    epoch_ = ep + 1;
    const fs::path ckpt_path =
        config_.out_dir / "checkpoints" / ("epoch_" + std::to_string(epoch_) + ".ckpt");
    save_checkpoint(snapshot(), ckpt_path);
    if (config_.checkpoint_keep > 0) {
      const int stale = epoch_ - config_.checkpoint_keep;
      if (stale >= 1) {
        fs::remove(config_.out_dir / "checkpoints" /
                   ("epoch_" + std::to_string(stale) + ".ckpt"));
      }
    }

    if (config_.sample_count > 0) {
      // cond | generated | target preview rows from the head of the manifest.
      const std::size_t rows_n = std::min<std::size_t>(config_.sample_count, n);
      std::vector<std::size_t> indices(rows_n);
      std::iota(indices.begin(), indices.end(), std::size_t{0});
      const auto batch = impl_->make_batch(indices, rng, /*with_augment=*/false);
      ForwardCtx ectx{Phase::kEval, nullptr};
      auto out1 = impl_->g1->forward(batch.cond, ectx);
      std::vector<std::vector<Image>> grid;
      for (std::size_t r = 0; r < rows_n; ++r) {
        std::vector<Image> row;
        row.push_back(image_from_nchw(batch.cond, static_cast<std::int64_t>(r)));
        row.push_back(image_from_nchw(out1.image, static_cast<std::int64_t>(r)));
        row.push_back(image_from_nchw(batch.target, static_cast<std::int64_t>(r)));
        grid.push_back(std::move(row));
      }
      const Image sheet = labeled_grid({"input", "generated", "truth"}, grid);
      write_png(config_.out_dir / "samples" / ("epoch_" + std::to_string(epoch_) + ".png"),
                sheet);
    }

    const double mean_d = step_in_epoch > 0 ? sum_d / step_in_epoch : 0.0;
    const double mean_g = step_in_epoch > 0 ? sum_g / step_in_epoch : 0.0;
    nlohmann::ordered_json epoch_rec;
    epoch_rec["event"] = "epoch_end";
    epoch_rec["epoch"] = ep;
    epoch_rec["mean_d_loss"] = mean_d;
    epoch_rec["mean_total_g"] = mean_g;
    epoch_rec["checkpoint"] = ckpt_path.string();
    append_log(log, epoch_rec);
    std::printf("epoch %d/%d  d %.4f  g %.4f\n", epoch_, config_.epochs, mean_d, mean_g);
    std::fflush(stdout);
  }
}

void train(const TrainConfig& config, const DatasetManifest& data) {
  Trainer trainer(config, data);
  trainer.run();
}

GenerationResult generate(const Checkpoint& ckpt, const DatasetManifest& manifest,
                          std::optional<Direction> direction_override) {
  const TrainConfig cfg = TrainConfig::from_json(ckpt.config_json);
  if (manifest.resolution != 0 && manifest.resolution != cfg.resolution) {
    throw ArchMismatchError("generate: manifest resolution " +
                            std::to_string(manifest.resolution) +
                            " does not match checkpoint resolution " +
                            std::to_string(cfg.resolution));
  }
  const Direction dir = direction_override.value_or(cfg.direction);

  const NetworkSpec gspec =
      NetworkSpec::make(generator_arch(cfg.arch), cfg.resolution, cfg.unet_skips);
  Generator<F> g1(gspec, "g1");
  std::unique_ptr<Generator<F>> g2;
  if (cfg.arch == TrainArch::kXSeq) {
    g2 = std::make_unique<Generator<F>>(
        NetworkSpec::make(Arch::kBaseline, cfg.resolution, cfg.unet_skips), "g2");
  }
  auto restore = [&](Generator<F>& g) {
    for (Param<F>* p : g.params()) {
      const Tensor<F> t = [&] {
        try {
          return ckpt.tensor<F>(p->name);
        } catch (const CheckpointError& e) {
          throw ArchMismatchError(e.what());
        }
      }();
      if (!t.same_shape(p->value)) {
        throw ArchMismatchError("generate: shape mismatch for '" + p->name + "'");
      }
      p->value = t;
    }
  };
  restore(g1);
  if (g2) restore(*g2);

  const Palette palette = dataset_palette(manifest);
  GenerationResult out;
  ForwardCtx ctx{Phase::kEval, nullptr};
  const std::size_t batch_cap = 16;
  for (std::size_t pos = 0; pos < manifest.entries.size(); pos += batch_cap) {
    const std::size_t take = std::min(batch_cap, manifest.entries.size() - pos);
    std::vector<Image> cond_imgs;
    for (std::size_t i = 0; i < take; ++i) {
      const PairedSample s = load_sample(manifest, pos + i, palette);
      cond_imgs.push_back(dir == Direction::kA2G ? s.aerial : s.ground);
      out.ids.push_back(s.id);
    }
    const Tensor<F> cond = to_nchw<F>(cond_imgs);
    auto o1 = g1.forward(cond, ctx);
    typename Generator<F>::Output o2;
    if (g2) o2 = g2->forward(o1.image, ctx);
    for (std::size_t i = 0; i < take; ++i) {
      out.images.push_back(image_from_nchw(o1.image, static_cast<std::int64_t>(i)));
      if (cfg.arch == TrainArch::kFork) {
        out.segs.push_back(image_from_nchw(o1.seg, static_cast<std::int64_t>(i)));
      } else if (cfg.arch == TrainArch::kXSeq) {
        out.segs.push_back(image_from_nchw(o2.image, static_cast<std::int64_t>(i)));
      }
    }
  }
  return out;
}

void write_generated(const GenerationResult& result, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  for (std::size_t i = 0; i < result.ids.size(); ++i) {
    write_png(out_dir / ("gen_" + result.ids[i] + ".png"), result.images[i]);
    if (!result.segs.empty()) {
      write_png(out_dir / ("gen_seg_" + result.ids[i] + ".png"), result.segs[i]);
    }
  }
}

}  // namespace crossview
