// Copyright (c) the nlrc authors. All rights reserved.
//
// Use of this source code is governed by the Apache-2.0 license
// that can be found in the LICENSE file.

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "nlrc/image.hpp"
#include "nlrc/trainer.hpp"
#include "nlrc/weights.hpp"
#include "testutil.hpp"

using nlrc::AdamState;
using nlrc::Image;
using nlrc::ModelWeights;
using nlrc::TrainConfig;
using nlrc::Trainer;
using nlrc::TrainMetrics;

namespace {

TrainConfig tiny_config(uint32_t steps) {
  TrainConfig cfg;
  cfg.patch_size = 12;
  cfg.batch_size = 2;
  cfg.steps = steps;
  cfg.seed = 77;
  return cfg;
}

std::vector<Image> tiny_corpus() { return testutil::mixed_corpus(3, 1, 0, 24, 900); }

bool same_tensors(const ModelWeights& a, const ModelWeights& b) {
  return a.fingerprint() == b.fingerprint();
}

}  // namespace

TEST_CASE("learning rate schedule drops for the configured tail") {
  TrainConfig cfg;
  cfg.steps = 2000;
  CHECK(nlrc::lr_at(cfg, 0) == doctest::Approx(1e-4));
  CHECK(nlrc::lr_at(cfg, 1749) == doctest::Approx(1e-4));
  CHECK(nlrc::lr_at(cfg, 1750) == doctest::Approx(1e-5));
  CHECK(nlrc::lr_at(cfg, 1999) == doctest::Approx(1e-5));
}

TEST_CASE("config hash separates every trajectory-shaping field") {
  const TrainConfig base = tiny_config(10);
  const uint64_t h0 = base.hash();
  CHECK(h0 == tiny_config(10).hash());

  TrainConfig c;
  c = base;
  c.patch_size = 16;
  CHECK(c.hash() != h0);
  c = base;
  c.batch_size = 3;
  CHECK(c.hash() != h0);
  c = base;
  c.steps = 11;
  CHECK(c.hash() != h0);
  c = base;
  c.lr = 2e-4;
  CHECK(c.hash() != h0);
  c = base;
  c.seed = 78;
  CHECK(c.hash() != h0);
  c = base;
  c.augment = false;
  CHECK(c.hash() != h0);
  c = base;
  c.dataset_dir = "elsewhere";
  CHECK(c.hash() != h0);
}

TEST_CASE("zero learning rate leaves the weights untouched") {
  TrainConfig cfg = tiny_config(4);
  cfg.lr = 0.0;
  ModelWeights w = nlrc::init_model_weights(cfg.seed);
  const nlrc::Sha256 before = w.fingerprint();
  AdamState opt{nlrc::zero_like_model(), nlrc::zero_like_model()};
  const std::vector<Image> patches{testutil::synth_natural(12, 12, 1000)};
  const TrainMetrics m = nlrc::train_step(patches, {2}, cfg, 0, &w, &opt);
  CHECK(m.main_bits > 0.0);
  CHECK(w.fingerprint() == before);
}

TEST_CASE("seeded runs are bit-reproducible") {
  const TrainConfig cfg = tiny_config(5);
  Trainer a(cfg, tiny_corpus());
  Trainer b(cfg, tiny_corpus());
  std::ostringstream csv_a, csv_b;
  a.run(&csv_a);
  b.run(&csv_b);
  const std::string rows = csv_a.str();
  CHECK(rows == csv_b.str());
  CHECK(same_tensors(a.weights(), b.weights()));
  CHECK(rows.rfind("0,", 0) == 0);  // first row is step 0
  CHECK(std::count(rows.begin(), rows.end(), '\n') == 5);
  CHECK(std::count(rows.begin(), rows.end(), ',') == 15);
}

TEST_CASE("identity augmentation equals no augmentation") {
  TrainConfig with = tiny_config(4);
  with.augment = true;
  with.augment_min = 1.0;
  with.augment_max = 1.0;
  TrainConfig without = tiny_config(4);
  without.augment = false;

  Trainer a(with, tiny_corpus());
  Trainer b(without, tiny_corpus());
  for (int i = 0; i < 4; ++i) {
    const TrainMetrics ma = a.step();
    const TrainMetrics mb = b.step();
    CHECK(ma.main_bits == mb.main_bits);
    CHECK(ma.bias_bits == mb.bias_bits);
  }
  CHECK(same_tensors(a.weights(), b.weights()));
}

TEST_CASE("augmentation below identity changes the batch but stays deterministic") {
  TrainConfig cfg = tiny_config(3);
  cfg.augment_min = 0.6;
  cfg.augment_max = 0.8;
  Trainer a(cfg, tiny_corpus());
  Trainer b(cfg, tiny_corpus());
  for (int i = 0; i < 3; ++i) CHECK(a.step().main_bits == b.step().main_bits);
}

TEST_CASE("checkpoint resume reproduces the uninterrupted run") {
  testutil::TempDir tmp("trainer");
  const TrainConfig cfg = tiny_config(6);

  Trainer full(cfg, tiny_corpus());
  for (int i = 0; i < 6; ++i) full.step();

  Trainer half(cfg, tiny_corpus());
  for (int i = 0; i < 3; ++i) half.step();
  nlrc::save_checkpoint_file(half.checkpoint(), tmp.file("mid.nlck"));

  const nlrc::CheckpointData loaded = nlrc::load_checkpoint_file(tmp.file("mid.nlck"));
  CHECK(loaded.step == 3);
  Trainer resumed(cfg, tiny_corpus(), loaded);
  CHECK(resumed.current_step() == 3);
  for (int i = 0; i < 3; ++i) resumed.step();

  CHECK(same_tensors(full.weights(), resumed.weights()));
}

TEST_CASE("resume refuses a checkpoint from a different configuration") {
  const TrainConfig cfg = tiny_config(6);
  Trainer t(cfg, tiny_corpus());
  t.step();
  const nlrc::CheckpointData ck = t.checkpoint();
  TrainConfig other = cfg;
  other.lr = 5e-4;
  CHECK_THROWS(Trainer(other, tiny_corpus(), ck));
}

TEST_CASE("the bias objective never moves shared or plain tensors") {
  // Two updates from the same state differing only in the drawn taus:
  // every non-conditional tensor must move identically, and the
  // conditional ones must not.
  const TrainConfig cfg = tiny_config(4);
  const std::vector<Image> patches{testutil::synth_natural(12, 12, 1100),
                                   testutil::synth_natural(12, 12, 1101)};

  ModelWeights w1 = nlrc::init_model_weights(3);
  ModelWeights w2 = w1;
  AdamState o1{nlrc::zero_like_model(), nlrc::zero_like_model()};
  AdamState o2{nlrc::zero_like_model(), nlrc::zero_like_model()};
  nlrc::train_step(patches, {1, 4}, cfg, 0, &w1, &o1);
  nlrc::train_step(patches, {5, 2}, cfg, 0, &w2, &o2);

  bool cond_differs = false;
  for (const auto& [name, t1] : w1.tensors()) {
    const nlrc::Tensor& t2 = w2.t(name);
    if (name.rfind("cond.", 0) == 0) {
      for (size_t i = 0; i < t1.size(); ++i) cond_differs |= t1[i] != t2[i];
    } else {
      CAPTURE(name);
      bool equal = true;
      for (size_t i = 0; i < t1.size(); ++i) equal &= t1[i] == t2[i];
      CHECK(equal);
    }
  }
  CHECK(cond_differs);
}

TEST_CASE("non-finite losses abort with a diagnostic") {
  const TrainConfig cfg = tiny_config(4);
  ModelWeights w = nlrc::init_model_weights(cfg.seed);
  w.t("plain.fc1.w")[0] = std::numeric_limits<double>::quiet_NaN();
  AdamState opt{nlrc::zero_like_model(), nlrc::zero_like_model()};
  const std::vector<Image> patches{testutil::synth_natural(12, 12, 1200)};
  CHECK_THROWS_AS(nlrc::train_step(patches, {1}, cfg, 0, &w, &opt), std::runtime_error);
}

TEST_CASE("overfitting one patch decreases the smoothed loss monotonically") {
  TrainConfig cfg;
  cfg.patch_size = 8;
  cfg.batch_size = 1;
  cfg.steps = 200;
  cfg.seed = 9;
  const Image patch = nlrc::crop(testutil::synth_natural(16, 16, 1300), 4, 4, 8, 8);

  ModelWeights w = nlrc::init_model_weights(cfg.seed);
  AdamState opt{nlrc::zero_like_model(), nlrc::zero_like_model()};
  std::vector<double> loss(cfg.steps);
  for (uint64_t s = 0; s < cfg.steps; ++s) {
    loss[s] = nlrc::train_step({patch}, {static_cast<int>(s % 5) + 1}, cfg, s, &w, &opt).main_bits;
  }

  std::vector<double> ma;
  double window = 0.0;
  for (size_t i = 0; i < loss.size(); ++i) {
    window += loss[i];
    if (i >= 50) window -= loss[i - 50];
    if (i >= 49) ma.push_back(window / 50.0);
  }
  REQUIRE(ma.size() == cfg.steps - 49);
  for (size_t i = 1; i < ma.size(); ++i) {
    CAPTURE(i);
    CHECK(ma[i] < ma[i - 1]);
  }
  CHECK(loss.back() < loss.front());
}

TEST_CASE("corpus loading and reference rates") {
  testutil::TempDir tmp("corpus");

  SUBCASE("loads ppm and png sorted by name") {
    nlrc::save_image(testutil::synth_natural(16, 16, 1400), tmp.file("b.ppm"));
    nlrc::save_image(testutil::synth_natural(18, 16, 1401), tmp.file("a.png"));
    nlrc::save_image(testutil::synth_natural(20, 16, 1402), tmp.file("c.ppm"));
    const std::vector<Image> corpus = nlrc::load_corpus(tmp.path());
    REQUIRE(corpus.size() == 3);
    CHECK(corpus[0].width == 18);  // a.png
    CHECK(corpus[1].width == 16);  // b.ppm
    CHECK(corpus[2].width == 20);  // c.ppm
  }
  SUBCASE("empty directory is an error") { CHECK_THROWS(nlrc::load_corpus(tmp.path())); }
  SUBCASE("patch larger than the smallest image is rejected") {
    TrainConfig cfg = tiny_config(1);
    cfg.patch_size = 64;
    CHECK_THROWS(Trainer(cfg, tiny_corpus()));
  }
  SUBCASE("moment-matched logistic reference behaves at the extremes") {
    // Constant images: the base codec is exact, residuals vanish, and the
    // reference rate collapses toward zero.
    const std::vector<Image> flat{nlrc::make_image(16, 16, 90), nlrc::make_image(16, 16, 201)};
    CHECK(nlrc::baseline_logistic_bpsp(flat) <= 0.01);
    // Noise: residuals are wide, the reference rate is several bits.
    const std::vector<Image> noisy{testutil::synth_noise(16, 16, 1500)};
    CHECK(nlrc::baseline_logistic_bpsp(noisy) >= 4.0);
    // An untrained model evaluates to something finite and positive.
    const ModelWeights w = nlrc::init_model_weights(1);
    const double bpsp = nlrc::heldout_residual_bpsp(noisy, w);
    CHECK(std::isfinite(bpsp));
    CHECK(bpsp > 0.0);
  }
}
