// Copyright (c) the nlrc authors. All rights reserved.
//
// Use of this source code is governed by the Apache-2.0 license
// that can be found in the LICENSE file.

// Command-line front end for the near-lossless codec: encode/decode with a
// selectable error bound, reconstruction verification, desk-scale model
// training, rate-curve sweeps, and an embedded property self-test.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nlrc/coder.hpp"
#include "nlrc/image.hpp"
#include "nlrc/lossy.hpp"
#include "nlrc/model.hpp"
#include "nlrc/pipeline.hpp"
#include "nlrc/quantizer.hpp"
#include "nlrc/trainer.hpp"
#include "nlrc/weights.hpp"

namespace {

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in),
                              std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path);
}

int run_encode(const std::string& input, const std::string& output, int tau,
               const std::string& weights_path, bool no_bias) {
  const nlrc::Image x = nlrc::load_image(input);
  const nlrc::ModelWeights w = nlrc::load_weights(weights_path);
  const nlrc::EncodeResult res = nlrc::encode(x, tau, w, !no_bias);
  write_file(output, res.container.serialize());
  std::cout << "tau=" << tau << "\n"
            << "bias_correction=" << (res.container.flags & 1) << "\n"
            << "bpsp_total=" << res.report.bpsp_total << "\n"
            << "bpsp_lossy=" << res.report.bpsp_lossy << "\n"
            << "bpsp_residual=" << res.report.bpsp_residual << "\n"
            << "psnr_lossy=" << res.report.psnr_lossy << "\n"
            << "linf=" << res.report.linf << "\n";
  return 0;
}

int run_decode(const std::string& input, const std::string& output,
               const std::string& weights_path) {
  const nlrc::CodedContainer c = nlrc::CodedContainer::parse(read_file(input));
  const nlrc::ModelWeights w = nlrc::load_weights(weights_path);
  const nlrc::Image xhat = nlrc::decode(c, w);
  nlrc::save_image(xhat, output);
  return 0;
}

int run_verify(const std::string& orig, const std::string& recon, int tau) {
  const nlrc::VerifyReport rep =
      nlrc::verify(nlrc::load_image(orig), nlrc::load_image(recon), tau);
  std::cout << "linf=" << rep.linf << "\n"
            << "psnr=" << rep.psnr << "\n"
            << "pass=" << (rep.pass ? 1 : 0) << "\n";
  return rep.pass ? 0 : 1;
}

int run_train(const std::string& dataset, const std::string& out,
              const std::string& csv_path, uint64_t seed, uint64_t steps,
              uint32_t patch_size) {
  nlrc::TrainConfig cfg;
  cfg.dataset_dir = dataset;
  cfg.seed = seed;
  cfg.steps = steps;
  cfg.patch_size = patch_size;
  nlrc::Trainer trainer(cfg, nlrc::load_corpus(dataset));
  if (csv_path.empty()) {
    trainer.run(nullptr);
  } else {
    std::ofstream csv(csv_path);
    if (!csv) throw std::runtime_error("cannot open " + csv_path + " for writing");
    csv << "step,main_bits,bias_bits,lr\n";
    trainer.run(&csv);
  }
  nlrc::save_checkpoint_file(trainer.checkpoint(), out);
  std::cout << "steps=" << trainer.current_step() << "\n"
            << "checkpoint=" << out << "\n";
  return 0;
}

int run_rate_curve(const std::string& corpus_dir, const std::string& weights_path,
                   const std::string& csv_path) {
  const nlrc::ModelWeights w = nlrc::load_weights(weights_path);
  std::vector<std::filesystem::path> paths;
  for (const auto& entry : std::filesystem::directory_iterator(corpus_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (ext == ".ppm" || ext == ".png") paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw std::runtime_error("rate-curve: no images in " + corpus_dir);

  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot open " + csv_path + " for writing");
  csv.precision(10);
  csv << "image,tau,mode,decodable,bpsp_lossy,bpsp_residual,bpsp_total,linf,psnr\n";
  auto row = [&](const std::string& id, int tau, const char* mode, bool decodable,
                 double bl, double br, double bt, int linf, double p) {
    csv << id << ',' << tau << ',' << mode << ',' << (decodable ? 1 : 0) << ',' << bl << ','
        << br << ',' << bt << ',' << linf << ',' << p << '\n';
  };
  for (const auto& path : paths) {
    const std::string id = path.stem().string();
    const nlrc::Image x = nlrc::load_image(path.string());
    const double subpix = 3.0 * x.width * x.height;
    {
      const nlrc::EncodeResult res = nlrc::encode(x, 0, w, false);
      row(id, 0, "lossless", true, res.report.bpsp_lossy, res.report.bpsp_residual,
          res.report.bpsp_total, res.report.linf, nlrc::psnr(x, res.reconstruction));
    }
    for (int tau = 1; tau <= nlrc::kMaxTau; ++tau) {
      const nlrc::EncodeResult unc = nlrc::encode(x, tau, w, false);
      const nlrc::EncodeResult cor = nlrc::encode(x, tau, w, true);
      const double recon_psnr = nlrc::psnr(x, unc.reconstruction);
      row(id, tau, "uncorrected", true, unc.report.bpsp_lossy, unc.report.bpsp_residual,
          unc.report.bpsp_total, unc.report.linf, recon_psnr);
      row(id, tau, "corrected", true, cor.report.bpsp_lossy, cor.report.bpsp_residual,
          cor.report.bpsp_total, cor.report.linf, nlrc::psnr(x, cor.reconstruction));
      const double ideal_bpsp = nlrc::ideal_instrumented_bits(x, tau, w) / subpix;
      row(id, tau, "ideal", false, unc.report.bpsp_lossy, ideal_bpsp,
          unc.report.bpsp_lossy + ideal_bpsp, unc.report.linf, recon_psnr);
    }
  }
  std::cout << "rows_written_to=" << csv_path << "\n";
  return 0;
}

// ---- selftest ------------------------------------------------------------

bool check_quantizer() {
  for (int tau = 0; tau <= nlrc::kMaxTau; ++tau) {
    for (int r = nlrc::kResidualMin; r <= nlrc::kResidualMax; ++r) {
      const int q = nlrc::quantize_residual(r, tau);
      if (std::abs(r - q) > tau) return false;
      if (nlrc::quantize_residual(q, tau) != q) return false;
    }
  }
  return nlrc::quantized_alphabet(0).size() == 511 && nlrc::quantized_alphabet(1).size() == 171 &&
         nlrc::quantized_alphabet(2).size() == 103;
}

bool check_pmf_quantization() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> pmf(nlrc::kResidualCount);
    double sum = 0.0;
    for (double& p : pmf) {
      p = uni(rng);
      if (trial % 3 == 1 && uni(rng) < 0.9) p = 0.0;  // sparse shapes too
      sum += p;
    }
    if (sum == 0.0) pmf[trial % pmf.size()] = sum = 1.0;
    for (double& p : pmf) p /= sum;
    const double h0 = nlrc::entropy_bits(pmf);
    for (int tau = 0; tau <= nlrc::kMaxTau; ++tau) {
      const std::vector<double> q = nlrc::quantize_pmf(pmf, tau);
      double qsum = 0.0;
      for (double p : q) qsum += p;
      if (std::abs(qsum - 1.0) > 1e-12) return false;
      if (nlrc::entropy_bits(q) > h0 + 1e-9) return false;
    }
  }
  return true;
}

bool check_coder() {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> uni(0.001, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const size_t n = 2 + rng() % 300;
    std::vector<nlrc::FreqTable> tables;
    for (int t = 0; t < 8; ++t) {
      std::vector<double> pmf(n);
      double s = 0.0;
      for (double& p : pmf) s += (p = uni(rng));
      for (double& p : pmf) p /= s;
      tables.push_back(nlrc::build_freq_table(pmf));
    }
    std::vector<size_t> syms(500);
    nlrc::ByteSink sink;
    nlrc::RangeEncoder enc(sink);
    for (size_t i = 0; i < syms.size(); ++i) {
      syms[i] = rng() % n;
      enc.encode(tables[i % tables.size()], syms[i]);
    }
    enc.finish();
    const std::vector<uint8_t> bytes = sink.take();
    nlrc::ByteSource src(bytes.data(), bytes.size());
    nlrc::RangeDecoder dec(src);
    for (size_t i = 0; i < syms.size(); ++i) {
      if (dec.decode(tables[i % tables.size()]) != syms[i]) return false;
    }
  }
  return true;
}

// Central finite differences against reverse mode on a handful of entries
// spanning the shared, plain, and conditional tensors.
bool check_gradients(const nlrc::ModelWeights& base) {
  std::mt19937_64 rng(23);
  nlrc::Image xt = nlrc::make_image(6, 6, 0);
  for (uint8_t& p : xt.pixels) p = static_cast<uint8_t>(rng() % 256);
  nlrc::ResidualPlane r(6, 6);
  for (int16_t& v : r.v) v = static_cast<int16_t>(static_cast<int>(rng() % 61) - 30);
  const int tau = 2;
  const nlrc::ResidualPlane rq = nlrc::quantize_residual_plane(r, tau);

  const auto plain_loss = [&](const nlrc::ModelWeights& w) {
    const nlrc::FeatureMap u = nlrc::extract_feature(xt, w);
    return nlrc::nll_bits(r, u, nlrc::extract_context(r, w), w, std::nullopt);
  };
  const auto cond_loss = [&](const nlrc::ModelWeights& w) {
    const nlrc::FeatureMap u = nlrc::extract_feature(xt, w);
    return nlrc::nll_bits(r, rq, u, nlrc::extract_context(rq, w), w, tau);
  };

  const auto probe = [&](nlrc::LossKind kind, const std::string& tensor, size_t idx) {
    const nlrc::BackwardResult bw = nlrc::backward(kind, xt, r, rq, tau, base);
    const double analytic = bw.grads.t(tensor)[idx];
    nlrc::ModelWeights wp = base;
    const double h = 1e-3;
    wp.t(tensor)[idx] += h;
    const double up = kind == nlrc::LossKind::kPlainNll ? plain_loss(wp) : cond_loss(wp);
    wp.t(tensor)[idx] -= 2 * h;
    const double dn = kind == nlrc::LossKind::kPlainNll ? plain_loss(wp) : cond_loss(wp);
    const double fd = (up - dn) / (2 * h);
    const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-8});
    return std::abs(fd - analytic) / denom < 1e-3;
  };

  return probe(nlrc::LossKind::kPlainNll, "feat.conv1.w", 5) &&
         probe(nlrc::LossKind::kPlainNll, "ctx.conv.w", 1) &&
         probe(nlrc::LossKind::kPlainNll, "plain.fc2.w", 77) &&
         probe(nlrc::LossKind::kPlainNll, "plain.sg.b", 4) &&
         probe(nlrc::LossKind::kCondNll, "cond.mu.w", 130) &&
         probe(nlrc::LossKind::kCondNll, "cond.fc1.s", (tau - 1) * nlrc::kTrunkChannels + 9);
}

// Context features at (y, x) must not change when every raster-later
// value (and the current pixel) changes.  A corrupted causality mask in
// the weights makes this fail.
bool check_causality(const nlrc::ModelWeights& w) {
  std::mt19937_64 rng(31);
  const uint32_t n = 12;
  nlrc::ResidualPlane r(n, n);
  for (int16_t& v : r.v) v = static_cast<int16_t>(static_cast<int>(rng() % 511) - 255);
  const nlrc::ContextMap full = nlrc::extract_context(r, w);
  double at[nlrc::kFeatureChannels];
  for (uint32_t y = 0; y < n; ++y) {
    for (uint32_t x = 0; x < n; ++x) {
      nlrc::ResidualPlane scrambled = r;
      for (uint32_t yy = 0; yy < n; ++yy) {
        for (uint32_t xx = 0; xx < n; ++xx) {
          if (yy > y || (yy == y && xx >= x)) {
            for (int c = 0; c < 3; ++c) {
              scrambled.set(yy, xx, c, 255 - scrambled.at(yy, xx, c));
            }
          }
        }
      }
      nlrc::context_features_at(scrambled, w, y, x, at);
      const double* fp = full.v.data() + (static_cast<size_t>(y) * full.w + x) * full.c;
      if (std::memcmp(at, fp, sizeof(at)) != 0) return false;
    }
  }
  return true;
}

// Freshly initialized modulation is scale 1 / shift 0, so the
// conditional estimator must produce bit-identical output for every tau.
bool check_conditioning_identity() {
  const nlrc::ModelWeights w = nlrc::init_model_weights(0);
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  double u64[nlrc::kFeatureChannels], c64[nlrc::kFeatureChannels];
  for (int trial = 0; trial < 5; ++trial) {
    for (int i = 0; i < nlrc::kFeatureChannels; ++i) {
      u64[i] = uni(rng);
      c64[i] = uni(rng);
    }
    nlrc::PixelParams first, other;
    nlrc::estimate_params_at(u64, c64, w, 1, &first);
    for (int tau = 2; tau <= nlrc::kMaxTau; ++tau) {
      nlrc::estimate_params_at(u64, c64, w, tau, &other);
      if (std::memcmp(&first, &other, sizeof(first)) != 0) return false;
    }
  }
  return true;
}

int run_selftest(const std::string& weights_path) {
  nlrc::ModelWeights w;
  if (weights_path.empty()) {
    w = nlrc::init_model_weights(1);
  } else {
    w = nlrc::load_weights(weights_path);
  }
  struct Check {
    const char* name;
    bool ok;
  };
  const Check checks[] = {
      {"quantizer-exhaustive", check_quantizer()},
      {"pmf-quantization", check_pmf_quantization()},
      {"coder-roundtrip", check_coder()},
      {"gradient-spot-check", check_gradients(w)},
      {"context-causality", check_causality(w)},
      {"conditioning-identity", check_conditioning_identity()},
  };
  bool all = true;
  for (const Check& c : checks) {
    std::cout << c.name << ": " << (c.ok ? "ok" : "FAIL") << "\n";
    all = all && c.ok;
  }
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"l-infinity bounded near-lossless image codec"};
  app.require_subcommand(1);

  std::string in_path, out_path, weights_path, csv_path, recon_path, dataset_dir;
  int tau = 0;
  bool no_bias = false;
  uint64_t seed = 0, steps = 2000;
  uint32_t patch_size = 32;
  int exit_code = 0;

  CLI::App* enc = app.add_subcommand("encode", "Compress an image into a container file");
  enc->add_option("input", in_path, "PNG or PPM input image")->required();
  enc->add_option("--tau", tau, "error bound, 0 (lossless) to 5")
      ->required()
      ->check(CLI::Range(0, 5));
  enc->add_option("--weights", weights_path, "model weights or checkpoint file")->required();
  enc->add_option("--out", out_path, "output container path")->required();
  enc->add_flag("--no-bias-correction", no_bias,
                "code tau>0 with the plain estimator instead of the conditioned one");
  enc->callback([&] { exit_code = run_encode(in_path, out_path, tau, weights_path, no_bias); });

  CLI::App* dec = app.add_subcommand("decode", "Reconstruct the image from a container file");
  dec->add_option("input", in_path, "container file")->required();
  dec->add_option("--weights", weights_path, "model weights or checkpoint file")->required();
  dec->add_option("--out", out_path, "output image path (.ppm/.png)")->required();
  dec->callback([&] { exit_code = run_decode(in_path, out_path, weights_path); });

  CLI::App* ver = app.add_subcommand("verify", "Check a reconstruction against the original");
  ver->add_option("original", in_path)->required();
  ver->add_option("reconstruction", recon_path)->required();
  ver->add_option("--tau", tau, "claimed error bound")->required()->check(CLI::Range(0, 5));
  ver->callback([&] { exit_code = run_verify(in_path, recon_path, tau); });

  CLI::App* tr = app.add_subcommand("train", "Train model weights on an image directory");
  tr->add_option("dataset", dataset_dir, "directory of .ppm/.png training images")->required();
  tr->add_option("--out", out_path, "checkpoint output path")->required();
  tr->add_option("--csv", csv_path, "per-step metrics CSV");
  tr->add_option("--seed", seed, "RNG seed");
  tr->add_option("--steps", steps, "optimization steps");
  tr->add_option("--patch-size", patch_size, "training crop size")->check(CLI::Range(8, 256));
  tr->callback([&] {
    exit_code = run_train(dataset_dir, out_path, csv_path, seed, steps, patch_size);
  });

  CLI::App* rc = app.add_subcommand("rate-curve",
                                    "Sweep tau and estimator modes over a corpus, write CSV");
  rc->add_option("corpus", dataset_dir, "directory of .ppm/.png images")->required();
  rc->add_option("--weights", weights_path, "model weights or checkpoint file")->required();
  rc->add_option("--csv", csv_path, "output CSV path")->required();
  rc->callback([&] { exit_code = run_rate_curve(dataset_dir, weights_path, csv_path); });

  CLI::App* st = app.add_subcommand("selftest", "Run embedded property checks");
  st->add_option("--weights", weights_path,
                 "check these weights instead of a fresh initialization");
  st->callback([&] { exit_code = run_selftest(weights_path); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return exit_code;
}
