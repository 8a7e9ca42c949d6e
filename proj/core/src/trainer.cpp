// Copyright (c) the nlrc authors. All rights reserved.
//
// Use of this source code is governed by the Apache-2.0 license
// that can be found in the LICENSE file.

#include "nlrc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <ostream>
#include <random>
#include <stdexcept>

#include "nlrc/lossy.hpp"

namespace nlrc {

namespace {

constexpr double kLn2 = 0.693147180559945309417;

// Independent draw streams; adding or skipping one kind of draw never
// shifts the others.
enum DrawPurpose : uint64_t {
  kDrawImage = 1,
  kDrawAugment = 2,
  kDrawCrop = 3,
  kDrawTau = 4,
};

uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::mt19937_64 draw_stream(uint64_t seed, uint64_t step, uint64_t purpose, uint64_t sample) {
  uint64_t k = splitmix64(seed);
  k = splitmix64(k ^ (step + 1));
  k = splitmix64(k ^ (purpose << 32 | sample));
  return std::mt19937_64(k);
}

void fnv64(uint64_t& h, const void* data, size_t n) {
  const uint8_t* p = static_cast<const uint8_t*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
}

double logistic_cdf(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Residuals of one image against the fixed base codec.
ResidualPlane lossy_residual(const Image& x, Image* xt_out) {
  const BlockTransformConfig cfg;
  auto [payload, xt] = encode_lossy(x, cfg);
  (void)payload;
  ResidualPlane r = compute_residual(x, xt);
  if (xt_out) *xt_out = std::move(xt);
  return r;
}

}  // namespace

uint64_t TrainConfig::hash() const {
  uint64_t h = 14695981039346656037ull;
  fnv64(h, &patch_size, sizeof(patch_size));
  fnv64(h, &batch_size, sizeof(batch_size));
  fnv64(h, &steps, sizeof(steps));
  fnv64(h, &lr, sizeof(lr));
  fnv64(h, &lr_decay, sizeof(lr_decay));
  fnv64(h, &decay_fraction, sizeof(decay_fraction));
  fnv64(h, &adam_beta1, sizeof(adam_beta1));
  fnv64(h, &adam_beta2, sizeof(adam_beta2));
  fnv64(h, &adam_eps, sizeof(adam_eps));
  const uint8_t aug = augment ? 1 : 0;
  fnv64(h, &aug, 1);
  fnv64(h, &augment_min, sizeof(augment_min));
  fnv64(h, &augment_max, sizeof(augment_max));
  fnv64(h, &seed, sizeof(seed));
  fnv64(h, dataset_dir.data(), dataset_dir.size());
  return h;
}

double lr_at(const TrainConfig& cfg, uint64_t step) {
  const uint64_t tail = static_cast<uint64_t>(cfg.decay_fraction * cfg.steps);
  const uint64_t cut = cfg.steps > tail ? cfg.steps - tail : 0;
  return step >= cut ? cfg.lr * cfg.lr_decay : cfg.lr;
}

TrainMetrics train_step(const std::vector<Image>& patches, const std::vector<int>& taus,
                        const TrainConfig& cfg, uint64_t step_index, ModelWeights* w,
                        AdamState* opt) {
  if (patches.empty() || patches.size() != taus.size()) {
    throw std::invalid_argument("train_step: batch and tau list must match and be non-empty");
  }

  GradientSet total = zero_like_model();
  double main_sum = 0.0, bias_sum = 0.0;
  const double bscale = 1.0 / static_cast<double>(patches.size());
  for (size_t i = 0; i < patches.size(); ++i) {
    Image xt;
    const ResidualPlane r = lossy_residual(patches[i], &xt);
    TrainStepGradients g = train_losses_backward(xt, r, taus[i], *w);
    const double pscale = bscale / (3.0 * patches[i].width * patches[i].height);
    main_sum += g.main_bits * pscale;
    bias_sum += g.bias_bits * pscale;
    for (auto& [name, t] : total.tensors()) {
      const Tensor& src = g.grads.t(name);
      double* dst = t.data();
      const double* sp = src.data();
      for (size_t j = 0; j < t.size(); ++j) dst[j] += sp[j] * pscale;
    }
  }
  if (!std::isfinite(main_sum) || !std::isfinite(bias_sum)) {
    throw std::runtime_error("train_step: non-finite loss at step " + std::to_string(step_index) +
                             " (main=" + std::to_string(main_sum) +
                             " bias=" + std::to_string(bias_sum) + ")");
  }

  const double lr = lr_at(cfg, step_index);
  const double t = static_cast<double>(step_index) + 1.0;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, t);
  for (auto& [name, wt] : w->tensors()) {
    double* wp = wt.data();
    double* mp = opt->m.t(name).data();
    double* vp = opt->v.t(name).data();
    const double* gp = total.t(name).data();
    for (size_t j = 0; j < wt.size(); ++j) {
      mp[j] = cfg.adam_beta1 * mp[j] + (1.0 - cfg.adam_beta1) * gp[j];
      vp[j] = cfg.adam_beta2 * vp[j] + (1.0 - cfg.adam_beta2) * gp[j] * gp[j];
      const double mhat = mp[j] / bc1;
      const double vhat = vp[j] / bc2;
      wp[j] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }

  TrainMetrics m;
  m.step = step_index;
  m.main_bits = main_sum;
  m.bias_bits = bias_sum;
  m.lr = lr;
  return m;
}

std::vector<Image> load_corpus(const std::string& dir) {
  std::vector<std::filesystem::path> paths;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (ext == ".ppm" || ext == ".png") paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<Image> images;
  images.reserve(paths.size());
  for (const auto& p : paths) images.push_back(load_image(p.string()));
  if (images.empty()) throw std::invalid_argument("load_corpus: no images found in " + dir);
  return images;
}

Trainer::Trainer(const TrainConfig& cfg, std::vector<Image> corpus)
    : cfg_(cfg), corpus_(std::move(corpus)) {
  if (corpus_.empty()) throw std::invalid_argument("trainer: empty corpus");
  for (const Image& img : corpus_) {
    if (img.width < cfg_.patch_size || img.height < cfg_.patch_size) {
      throw std::invalid_argument("trainer: corpus image smaller than patch size");
    }
  }
  w_ = init_model_weights(cfg_.seed);
  opt_.m = zero_like_model();
  opt_.v = zero_like_model();
}

Trainer::Trainer(const TrainConfig& cfg, std::vector<Image> corpus,
                 const CheckpointData& checkpoint)
    : Trainer(cfg, std::move(corpus)) {
  if (checkpoint.config_hash != cfg_.hash()) {
    throw std::invalid_argument("trainer: checkpoint was produced by a different config");
  }
  w_ = checkpoint.weights;
  opt_.m.tensors() = checkpoint.adam_m;
  opt_.v.tensors() = checkpoint.adam_v;
  step_ = checkpoint.step;
}

TrainMetrics Trainer::step() {
  std::vector<Image> batch;
  std::vector<int> taus;
  batch.reserve(cfg_.batch_size);
  taus.reserve(cfg_.batch_size);
  const uint32_t p = cfg_.patch_size;
  for (uint32_t i = 0; i < cfg_.batch_size; ++i) {
    auto img_rng = draw_stream(cfg_.seed, step_, kDrawImage, i);
    const size_t idx =
        std::uniform_int_distribution<size_t>(0, corpus_.size() - 1)(img_rng);
    const Image* src = &corpus_[idx];
    Image scaled;
    if (cfg_.augment) {
      auto aug_rng = draw_stream(cfg_.seed, step_, kDrawAugment, i);
      double f = std::uniform_real_distribution<double>(cfg_.augment_min,
                                                        cfg_.augment_max)(aug_rng);
      // Never shrink below the crop size.
      const double floor_f = (p + 0.5) / std::min(src->width, src->height);
      f = std::clamp(f, std::min(1.0, std::max(cfg_.augment_min, floor_f)), 1.0);
      if (f < 1.0) {
        scaled = downscale_bicubic(*src, f);
        src = &scaled;
      }
    }
    auto crop_rng = draw_stream(cfg_.seed, step_, kDrawCrop, i);
    const uint32_t x0 =
        std::uniform_int_distribution<uint32_t>(0, src->width - p)(crop_rng);
    const uint32_t y0 =
        std::uniform_int_distribution<uint32_t>(0, src->height - p)(crop_rng);
    batch.push_back(crop(*src, x0, y0, p, p));
    auto tau_rng = draw_stream(cfg_.seed, step_, kDrawTau, i);
    taus.push_back(std::uniform_int_distribution<int>(1, kMaxTau)(tau_rng));
  }
  TrainMetrics m = train_step(batch, taus, cfg_, step_, &w_, &opt_);
  ++step_;
  return m;
}

void Trainer::run(std::ostream* csv) {
  while (step_ < cfg_.steps) {
    const TrainMetrics m = step();
    if (csv) {
      csv->precision(17);
      (*csv) << m.step << ',' << m.main_bits << ',' << m.bias_bits << ',' << m.lr << '\n';
    }
  }
}

CheckpointData Trainer::checkpoint() const {
  CheckpointData ck;
  ck.weights = w_;
  ck.adam_m = opt_.m.tensors();
  ck.adam_v = opt_.v.tensors();
  ck.step = step_;
  ck.seed = cfg_.seed;
  ck.config_hash = cfg_.hash();
  return ck;
}

CheckpointData train(const TrainConfig& cfg) {
  Trainer t(cfg, load_corpus(cfg.dataset_dir));
  t.run(nullptr);
  return t.checkpoint();
}

double heldout_residual_bpsp(const std::vector<Image>& images, const ModelWeights& w) {
  if (images.empty()) throw std::invalid_argument("heldout_residual_bpsp: no images");
  double bits = 0.0, subpix = 0.0;
  for (const Image& x : images) {
    Image xt;
    const ResidualPlane r = lossy_residual(x, &xt);
    const FeatureMap u = extract_feature(xt, w);
    const ContextMap ctx = extract_context(r, w);
    bits += nll_bits(r, u, ctx, w, std::nullopt);
    subpix += 3.0 * x.width * x.height;
  }
  return bits / subpix;
}

double baseline_logistic_bpsp(const std::vector<Image>& images) {
  if (images.empty()) throw std::invalid_argument("baseline_logistic_bpsp: no images");
  std::vector<ResidualPlane> planes;
  planes.reserve(images.size());
  double sq = 0.0, n = 0.0;
  for (const Image& x : images) {
    planes.push_back(lossy_residual(x, nullptr));
    for (int16_t v : planes.back().v) {
      sq += static_cast<double>(v) * v;
      n += 1.0;
    }
  }
  const double s = std::max(std::sqrt(3.0 * sq / n) / std::acos(-1.0), 1e-3);
  double bits = 0.0;
  for (const ResidualPlane& r : planes) {
    for (int16_t v : r.v) {
      const double hi = v == kResidualMax ? 1.0 : logistic_cdf((v + 0.5) / s);
      const double lo = v == kResidualMin ? 0.0 : logistic_cdf((v - 0.5) / s);
      bits += -std::log(std::max(hi - lo, 1e-300)) / kLn2;
    }
  }
  return bits / n;
}

}  // namespace nlrc
