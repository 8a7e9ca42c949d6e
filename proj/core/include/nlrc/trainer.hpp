// Copyright (c) the nlrc authors. All rights reserved.
//
// Use of this source code is governed by the Apache-2.0 license
// that can be found in the LICENSE file.

#ifndef NLRC_TRAINER_HPP_
#define NLRC_TRAINER_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "nlrc/image.hpp"
#include "nlrc/model.hpp"
#include "nlrc/weights.hpp"

namespace nlrc {

struct TrainConfig {
  uint32_t patch_size = 32;
  uint32_t batch_size = 16;
  uint64_t steps = 2000;
  double lr = 1e-4;
  double lr_decay = 0.1;          // multiplier for the schedule tail
  double decay_fraction = 0.125;  // fraction of steps run at the decayed rate
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool augment = true;  // random bicubic downscale before cropping
  double augment_min = 0.6;
  double augment_max = 1.0;
  uint64_t seed = 0;
  std::string dataset_dir;

  // Identity of everything that shapes the trajectory; stored in
  // checkpoints so a resume against different settings fails loudly.
  uint64_t hash() const;
};

// Step-indexed learning rate: cfg.lr, dropping to lr * lr_decay for the
// final decay_fraction of cfg.steps.
double lr_at(const TrainConfig& cfg, uint64_t step);

// Adam first/second moments, one tensor set each, all zeros at start.
struct AdamState {
  GradientSet m;
  GradientSet v;
};

struct TrainMetrics {
  uint64_t step = 0;
  double main_bits = 0.0;  // per-subpixel, batch mean
  double bias_bits = 0.0;  // per-subpixel, batch mean
  double lr = 0.0;
};

// One Adam update from explicit patches and per-sample taus (both sized
// batch).  Gradients of the two losses are summed with weight one each;
// the bias loss reaches only the tau-conditioned tensors.  Throws on
// non-finite loss.
TrainMetrics train_step(const std::vector<Image>& patches, const std::vector<int>& taus,
                        const TrainConfig& cfg, uint64_t step_index, ModelWeights* w,
                        AdamState* opt);

// Loads every .ppm/.png under dir, sorted by filename; throws if none.
std::vector<Image> load_corpus(const std::string& dir);

// Deterministic training loop.  Batch composition at a given step depends
// only on (seed, step, draw purpose), so disabling augmentation or
// resuming mid-run never shifts any other random choice.
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, std::vector<Image> corpus);
  Trainer(const TrainConfig& cfg, std::vector<Image> corpus, const CheckpointData& checkpoint);

  // Samples one batch and applies one update.
  TrainMetrics step();

  // Runs until cfg.steps, appending one CSV row per step to csv when
  // given ("step,main_bits,bias_bits,lr").
  void run(std::ostream* csv);

  const ModelWeights& weights() const { return w_; }
  uint64_t current_step() const { return step_; }
  CheckpointData checkpoint() const;

 private:
  TrainConfig cfg_;
  std::vector<Image> corpus_;
  ModelWeights w_;
  AdamState opt_;
  uint64_t step_ = 0;
};

// load_corpus + fresh Trainer + full run; the one-call variant.
CheckpointData train(const TrainConfig& cfg);

// Mean lossless-path model bits per subpixel over images: true residuals
// against the plain estimator with true-residual context.
double heldout_residual_bpsp(const std::vector<Image>& images, const ModelWeights& w);

// Reference rate for the same residuals under a zero-mean discrete
// logistic whose scale is moment-matched to the corpus (variance
// pi^2 s^2 / 3).  A trained model must beat this.
double baseline_logistic_bpsp(const std::vector<Image>& images);

}  // namespace nlrc

#endif  // NLRC_TRAINER_HPP_
