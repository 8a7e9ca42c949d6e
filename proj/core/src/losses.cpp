// Copyright (c) the nlrc authors. All rights reserved.
//
// Use of this source code is governed by the Apache-2.0 license
// that can be found in the LICENSE file.

#include <cmath>
#include <stdexcept>

#include "model_detail.hpp"
#include "nlrc/model.hpp"

namespace nlrc {

namespace {

constexpr double kLn2 = 0.693147180559945309417;
constexpr double kTinyMass = 1e-300;
constexpr int kH = 3 * kMixtureK;
constexpr int kT = kTrunkChannels;

double channel_shift(const PixelParams& p, int c, int q1, int q2) {
  if (c == 1) return p.beta[0] * q1;
  if (c == 2) return p.beta[1] * q1 + p.beta[2] * q2;
  return 0.0;
}

// Negative log2 mass of one channel target, plus (optionally) gradients
// w.r.t. the post-modulation estimator outputs for this pixel.
struct ChannelGrads {
  double ap[kH];  // mixture-weight logits
  double am[kH];  // means
  double asg[kH];  // sigma values (pre softplus-chain)
  double ab[3];   // coupling coefficients
};

double channel_loss(const PixelParams& pp, int c, int v, int q1, int q2, ChannelGrads* g) {
  const double shift = channel_shift(pp, c, q1, q2);
  double fa[kMixtureK], fb[kMixtureK], da[kMixtureK], db[kMixtureK];
  double az[kMixtureK], bz[kMixtureK];
  double p = 0.0;
  for (int k = 0; k < kMixtureK; ++k) {
    const double mu = pp.mu[c][k] + shift;
    const double sg = pp.sigma[c][k];
    if (v == kResidualMax) {
      fa[k] = 1.0;
      da[k] = 0.0;
      az[k] = 0.0;
    } else {
      az[k] = (v + 0.5 - mu) / sg;
      fa[k] = detail::sigmoid(az[k]);
      da[k] = fa[k] * (1.0 - fa[k]);
    }
    if (v == kResidualMin) {
      fb[k] = 0.0;
      db[k] = 0.0;
      bz[k] = 0.0;
    } else {
      bz[k] = (v - 0.5 - mu) / sg;
      fb[k] = detail::sigmoid(bz[k]);
      db[k] = fb[k] * (1.0 - fb[k]);
    }
    p += pp.pi[c][k] * (fa[k] - fb[k]);
  }
  const double pc = std::max(p, kTinyMass);
  const double loss = -std::log(pc) / kLn2;
  if (!g) return loss;

  const double dldp = -1.0 / (pc * kLn2);
  double gpi[kMixtureK];
  double dot = 0.0;
  for (int k = 0; k < kMixtureK; ++k) {
    gpi[k] = dldp * (fa[k] - fb[k]);
    dot += pp.pi[c][k] * gpi[k];
  }
  double dmu_sum_q1 = 0.0, dmu_sum_q2 = 0.0;
  for (int k = 0; k < kMixtureK; ++k) {
    const int o = c * kMixtureK + k;
    g->ap[o] += pp.pi[c][k] * (gpi[k] - dot);
    const double sg = pp.sigma[c][k];
    const double dmu = dldp * pp.pi[c][k] * (db[k] - da[k]) / sg;
    const double dsg = dldp * pp.pi[c][k] * (bz[k] * db[k] - az[k] * da[k]) / sg;
    g->am[o] += dmu;
    g->asg[o] += dsg;
    dmu_sum_q1 += dmu;
    dmu_sum_q2 += dmu;
  }
  if (c == 1) {
    g->ab[0] += dmu_sum_q1 * q1;
  } else if (c == 2) {
    g->ab[1] += dmu_sum_q1 * q1;
    g->ab[2] += dmu_sum_q2 * q2;
  }
  return loss;
}

struct EstGradRefs {
  Tensor *w1, *b1, *w2, *b2, *wp, *bp, *wm, *bm, *ws, *bs, *wb, *bb;
  Tensor *s1, *t1, *s2, *t2, *sp, *tp, *sm, *tm, *ss, *ts, *sb, *tb;
};

EstGradRefs bind_est_grads(GradientSet& g, bool cond) {
  const std::string p = cond ? "cond" : "plain";
  EstGradRefs r{};
  r.w1 = &g.t(p + ".fc1.w");
  r.b1 = &g.t(p + ".fc1.b");
  r.w2 = &g.t(p + ".fc2.w");
  r.b2 = &g.t(p + ".fc2.b");
  r.wp = &g.t(p + ".pi.w");
  r.bp = &g.t(p + ".pi.b");
  r.wm = &g.t(p + ".mu.w");
  r.bm = &g.t(p + ".mu.b");
  r.ws = &g.t(p + ".sg.w");
  r.bs = &g.t(p + ".sg.b");
  r.wb = &g.t(p + ".bt.w");
  r.bb = &g.t(p + ".bt.b");
  if (cond) {
    r.s1 = &g.t(p + ".fc1.s");
    r.t1 = &g.t(p + ".fc1.t");
    r.s2 = &g.t(p + ".fc2.s");
    r.t2 = &g.t(p + ".fc2.t");
    r.sp = &g.t(p + ".pi.s");
    r.tp = &g.t(p + ".pi.t");
    r.sm = &g.t(p + ".mu.s");
    r.tm = &g.t(p + ".mu.t");
    r.ss = &g.t(p + ".sg.s");
    r.ts = &g.t(p + ".sg.t");
    r.sb = &g.t(p + ".bt.s");
    r.tb = &g.t(p + ".bt.t");
  }
  return r;
}

// Reverse of one modulated linear layer: consumes the post-modulation
// gradient, accumulates weight/bias/modulation gradients, and optionally
// produces the input gradient.
void layer_backward(const detail::LayerRefs& l, bool cond, int row, const double* g_post,
                    const double* lin, const double* input, int rows, int cols, Tensor* gw,
                    Tensor* gb, Tensor* gs, Tensor* gt, double* g_input) {
  for (int o = 0; o < rows; ++o) {
    double gl = g_post[o];
    if (cond) {
      (*gs)[static_cast<size_t>(row) * rows + o] += g_post[o] * lin[o];
      (*gt)[static_cast<size_t>(row) * rows + o] += g_post[o];
      gl *= (*l.s)[static_cast<size_t>(row) * rows + o];
    }
    (*gb)[o] += gl;
    double* gwrow = gw->data() + static_cast<size_t>(o) * cols;
    const double* wrow = l.w->data() + static_cast<size_t>(o) * cols;
    for (int i = 0; i < cols; ++i) {
      gwrow[i] += gl * input[i];
      if (g_input) g_input[i] += wrow[i] * gl;
    }
  }
}

class LossEngine {
 public:
  LossEngine(const Image& xt, const ModelWeights& w) : w_(w) {
    xnorm_ = detail::image_norm_plane(xt);
    detail::conv3x3_forward(xnorm_, w.t("feat.conv1.w"), w.t("feat.conv1.b"), &pre1_);
    act1_ = pre1_;
    for (double& v : act1_.v) v = detail::softplus(v);
    detail::conv3x3_forward(act1_, w.t("feat.conv2.w"), w.t("feat.conv2.b"), &u_);
  }

  const Plane& feature() const { return u_; }

  // One full loss evaluation.  ctxsrc provides both the masked-conv input
  // and the channel-chain values (true residuals for the plain loss,
  // quantized ones for the conditional paths).  When grads is set, the
  // estimator tensors always accumulate; the shared feature/context
  // tensors only when shared_grads is set.
  double pass(const ResidualPlane& targets, const ResidualPlane& ctxsrc,
              std::optional<int> condition, GradientSet* grads, bool shared_grads) {
    const uint32_t h = targets.h, w = targets.w;
    if (ctxsrc.h != h || ctxsrc.w != w || u_.h != h || u_.w != w) {
      throw std::invalid_argument("loss pass: dimension mismatch");
    }
    const detail::EstimatorRefs est = detail::bind_estimator(w_, condition);
    const ContextMap ctx = extract_context(ctxsrc, w_);

    EstGradRefs eg{};
    Plane g_u, g_ctx;
    if (grads) {
      eg = bind_est_grads(*grads, est.cond);
      if (shared_grads) {
        g_u = Plane(h, w, kFeatureChannels);
        g_ctx = Plane(h, w, kFeatureChannels);
      }
    }

    double loss = 0.0;
    double tin[kT];
    detail::PixelTrace tr;
    PixelParams pp;
    for (uint32_t y = 0; y < h; ++y) {
      for (uint32_t x = 0; x < w; ++x) {
        for (int ch = 0; ch < kFeatureChannels; ++ch) {
          tin[ch] = u_.at(y, x, ch);
          tin[kFeatureChannels + ch] = ctx.at(y, x, ch);
        }
        detail::estimator_forward_pixel(est, tin, &pp, grads ? &tr : nullptr);

        const int q1 = ctxsrc.at(y, x, 0);
        const int q2 = ctxsrc.at(y, x, 1);
        ChannelGrads cg{};
        for (int c = 0; c < 3; ++c) {
          const int v = targets.at(y, x, c);
          if (v < kResidualMin || v > kResidualMax) {
            throw std::invalid_argument("nll: residual out of [-255,255]");
          }
          loss += channel_loss(pp, c, v, q1, q2, grads ? &cg : nullptr);
        }
        if (grads) {
          pixel_backward(est, eg, tr, pp, cg,
                         shared_grads ? &g_u.at(y, x, 0) : nullptr,
                         shared_grads ? &g_ctx.at(y, x, 0) : nullptr, tin);
        }
      }
    }

    if (grads && shared_grads) {
      context_conv_backward(ctxsrc, g_ctx, grads);
      feature_conv_backward(g_u, grads);
    }
    return loss;
  }

 private:
  void pixel_backward(const detail::EstimatorRefs& est, const EstGradRefs& eg,
                      const detail::PixelTrace& tr, const PixelParams& pp, const ChannelGrads& cg,
                      double* g_u_px, double* g_ctx_px, const double* tin) {
    const bool cond = est.cond;
    const int row = est.tau_row;

    // Sigma head: outputs pass through softplus (+ floor), so convert the
    // sigma-value gradients to post-modulation gradients first.
    double g_as[kH];
    for (int o = 0; o < kH; ++o) {
      double as = tr.lins[o];
      if (cond) {
        as = (*est.sg.s)[static_cast<size_t>(row) * kH + o] * as +
             (*est.sg.t)[static_cast<size_t>(row) * kH + o];
      }
      g_as[o] = cg.asg[o] * detail::sigmoid(as);
    }

    double g_z2[kT] = {};
    layer_backward(est.pi, cond, row, cg.ap, tr.linp, tr.z2, kH, kT, eg.wp, eg.bp, eg.sp, eg.tp,
                   g_z2);
    layer_backward(est.mu, cond, row, cg.am, tr.linm, tr.z2, kH, kT, eg.wm, eg.bm, eg.sm, eg.tm,
                   g_z2);
    layer_backward(est.sg, cond, row, g_as, tr.lins, tr.z2, kH, kT, eg.ws, eg.bs, eg.ss, eg.ts,
                   g_z2);
    layer_backward(est.bt, cond, row, cg.ab, tr.linb, tr.z2, 3, kT, eg.wb, eg.bb, eg.sb, eg.tb,
                   g_z2);

    // Trunk layer 2: z2 = softplus(mod(lin2)).
    double g_a2[kT];
    for (int j = 0; j < kT; ++j) {
      double a = tr.lin2[j];
      if (cond) {
        a = (*est.fc2.s)[static_cast<size_t>(row) * kT + j] * a +
            (*est.fc2.t)[static_cast<size_t>(row) * kT + j];
      }
      g_a2[j] = g_z2[j] * detail::sigmoid(a);
    }
    double g_z1[kT] = {};
    layer_backward(est.fc2, cond, row, g_a2, tr.lin2, tr.z1, kT, kT, eg.w2, eg.b2, eg.s2, eg.t2,
                   g_z1);

    double g_a1[kT];
    for (int j = 0; j < kT; ++j) {
      double a = tr.lin1[j];
      if (cond) {
        a = (*est.fc1.s)[static_cast<size_t>(row) * kT + j] * a +
            (*est.fc1.t)[static_cast<size_t>(row) * kT + j];
      }
      g_a1[j] = g_z1[j] * detail::sigmoid(a);
    }
    double g_tin[kT] = {};
    layer_backward(est.fc1, cond, row, g_a1, tr.lin1, tin, kT, kT, eg.w1, eg.b1, eg.s1, eg.t1,
                   (g_u_px || g_ctx_px) ? g_tin : nullptr);

    if (g_u_px) {
      for (int ch = 0; ch < kFeatureChannels; ++ch) g_u_px[ch] += g_tin[ch];
    }
    if (g_ctx_px) {
      for (int ch = 0; ch < kFeatureChannels; ++ch) g_ctx_px[ch] += g_tin[kFeatureChannels + ch];
    }
  }

  void context_conv_backward(const ResidualPlane& ctxsrc, const Plane& g_ctx, GradientSet* grads) {
    Tensor& gw = grads->t("ctx.conv.w");
    Tensor& gb = grads->t("ctx.conv.b");
    const uint32_t h = g_ctx.h, w = g_ctx.w;
    for (uint32_t y = 0; y < h; ++y) {
      for (uint32_t x = 0; x < w; ++x) {
        for (uint32_t oc = 0; oc < kFeatureChannels; ++oc) {
          const double gv = g_ctx.at(y, x, oc);
          if (gv == 0.0) continue;
          gb[oc] += gv;
          for (uint32_t ic = 0; ic < 3; ++ic) {
            for (int ky = 0; ky < 5; ++ky) {
              const int64_t yy = static_cast<int64_t>(y) + ky - 2;
              if (yy < 0 || yy >= h) continue;
              for (int kx = 0; kx < 5; ++kx) {
                const int64_t xx = static_cast<int64_t>(x) + kx - 2;
                if (xx < 0 || xx >= w) continue;
                gw.at(oc, ic, ky, kx) +=
                    gv * detail::norm_residual(ctxsrc.at(static_cast<uint32_t>(yy),
                                                         static_cast<uint32_t>(xx),
                                                         static_cast<int>(ic)));
              }
            }
          }
        }
      }
    }
    // Non-causal taps are structural zeros; they never move.
    for (uint32_t oc = 0; oc < kFeatureChannels; ++oc) {
      for (uint32_t ic = 0; ic < 3; ++ic) {
        for (int ky = 0; ky < 5; ++ky) {
          for (int kx = 0; kx < 5; ++kx) {
            if (!context_tap_causal(ky, kx)) gw.at(oc, ic, ky, kx) = 0.0;
          }
        }
      }
    }
  }

  void feature_conv_backward(const Plane& g_u, GradientSet* grads) {
    const uint32_t h = g_u.h, w = g_u.w;
    const Tensor& w2 = w_.t("feat.conv2.w");
    Tensor& gw2 = grads->t("feat.conv2.w");
    Tensor& gb2 = grads->t("feat.conv2.b");

    Plane g_act1(h, w, kFeatureChannels);
    for (uint32_t y = 0; y < h; ++y) {
      for (uint32_t x = 0; x < w; ++x) {
        for (uint32_t oc = 0; oc < kFeatureChannels; ++oc) {
          const double gv = g_u.at(y, x, oc);
          if (gv == 0.0) continue;
          gb2[oc] += gv;
          for (uint32_t ic = 0; ic < kFeatureChannels; ++ic) {
            for (int ky = 0; ky < 3; ++ky) {
              const int64_t yy = static_cast<int64_t>(y) + ky - 1;
              if (yy < 0 || yy >= h) continue;
              for (int kx = 0; kx < 3; ++kx) {
                const int64_t xx = static_cast<int64_t>(x) + kx - 1;
                if (xx < 0 || xx >= w) continue;
                const uint32_t uy = static_cast<uint32_t>(yy), ux = static_cast<uint32_t>(xx);
                gw2.at(oc, ic, ky, kx) += gv * act1_.at(uy, ux, ic);
                g_act1.at(uy, ux, ic) += w2.at(oc, ic, ky, kx) * gv;
              }
            }
          }
        }
      }
    }

    Tensor& gw1 = grads->t("feat.conv1.w");
    Tensor& gb1 = grads->t("feat.conv1.b");
    for (uint32_t y = 0; y < h; ++y) {
      for (uint32_t x = 0; x < w; ++x) {
        for (uint32_t oc = 0; oc < kFeatureChannels; ++oc) {
          const double gv = g_act1.at(y, x, oc) * detail::sigmoid(pre1_.at(y, x, oc));
          if (gv == 0.0) continue;
          gb1[oc] += gv;
          for (uint32_t ic = 0; ic < 3; ++ic) {
            for (int ky = 0; ky < 3; ++ky) {
              const int64_t yy = static_cast<int64_t>(y) + ky - 1;
              if (yy < 0 || yy >= h) continue;
              for (int kx = 0; kx < 3; ++kx) {
                const int64_t xx = static_cast<int64_t>(x) + kx - 1;
                if (xx < 0 || xx >= w) continue;
                gw1.at(oc, ic, ky, kx) +=
                    gv * xnorm_.at(static_cast<uint32_t>(yy), static_cast<uint32_t>(xx), ic);
              }
            }
          }
        }
      }
    }
  }

  const ModelWeights& w_;
  Plane xnorm_, pre1_, act1_, u_;
};

}  // namespace

double nll_bits(const ResidualPlane& targets, const ResidualPlane& chain, const FeatureMap& u,
                const ContextMap& ctx, const ModelWeights& w, std::optional<int> condition) {
  const uint32_t h = targets.h, wd = targets.w;
  if (chain.h != h || chain.w != wd || u.h != h || u.w != wd || ctx.h != h || ctx.w != wd) {
    throw std::invalid_argument("nll_bits: dimension mismatch");
  }
  const detail::EstimatorRefs est = detail::bind_estimator(w, condition);
  double tin[kTrunkChannels];
  PixelParams pp;
  double loss = 0.0;
  for (uint32_t y = 0; y < h; ++y) {
    for (uint32_t x = 0; x < wd; ++x) {
      for (int ch = 0; ch < kFeatureChannels; ++ch) {
        tin[ch] = u.at(y, x, ch);
        tin[kFeatureChannels + ch] = ctx.at(y, x, ch);
      }
      detail::estimator_forward_pixel(est, tin, &pp, nullptr);
      const int q1 = chain.at(y, x, 0);
      const int q2 = chain.at(y, x, 1);
      for (int c = 0; c < 3; ++c) {
        const int v = targets.at(y, x, c);
        if (v < kResidualMin || v > kResidualMax) {
          throw std::invalid_argument("nll_bits: residual out of [-255,255]");
        }
        loss += channel_loss(pp, c, v, q1, q2, nullptr);
      }
    }
  }
  return loss;
}

double nll_bits(const ResidualPlane& r, const FeatureMap& u, const ContextMap& ctx,
                const ModelWeights& w, std::optional<int> condition) {
  return nll_bits(r, r, u, ctx, w, condition);
}

double bias_correction_loss(const ResidualPlane& r, const ResidualPlane& rq, const FeatureMap& u,
                            const ModelWeights& w, int tau) {
  if (tau < 1 || tau > kMaxTau) {
    throw std::invalid_argument("bias_correction_loss: tau must be in {1..5}");
  }
  const ContextMap ctx_q = extract_context(rq, w);
  const double cond_bits = nll_bits(r, rq, u, ctx_q, w, tau);
  const ContextMap ctx_t = extract_context(r, w);
  const double plain_bits = nll_bits(r, r, u, ctx_t, w, std::nullopt);
  return cond_bits - plain_bits;
}

BackwardResult backward(LossKind kind, const Image& xt, const ResidualPlane& r,
                        const ResidualPlane& rq, std::optional<int> tau, const ModelWeights& w) {
  LossEngine engine(xt, w);
  BackwardResult out;
  out.grads = zero_like_model();
  switch (kind) {
    case LossKind::kPlainNll:
      out.loss_bits = engine.pass(r, r, std::nullopt, &out.grads, true);
      break;
    case LossKind::kCondNll:
      if (!tau) throw std::invalid_argument("backward: kCondNll requires tau");
      out.loss_bits = engine.pass(r, rq, tau, &out.grads, true);
      break;
    case LossKind::kBiasCorrection: {
      if (!tau) throw std::invalid_argument("backward: kBiasCorrection requires tau");
      const double cond_bits = engine.pass(r, rq, tau, &out.grads, false);
      const double plain_bits = engine.pass(r, r, std::nullopt, nullptr, false);
      out.loss_bits = cond_bits - plain_bits;
      break;
    }
  }
  return out;
}

TrainStepGradients train_losses_backward(const Image& xt, const ResidualPlane& r, int tau,
                                         const ModelWeights& w) {
  if (tau < 1 || tau > kMaxTau) {
    throw std::invalid_argument("train_losses_backward: tau must be in {1..5}");
  }
  LossEngine engine(xt, w);
  TrainStepGradients out;
  out.grads = zero_like_model();
  out.main_bits = engine.pass(r, r, std::nullopt, &out.grads, true);
  const ResidualPlane rq = quantize_residual_plane(r, tau);
  const double cond_bits = engine.pass(r, rq, tau, &out.grads, false);
  out.bias_bits = cond_bits - out.main_bits;
  return out;
}

}  // namespace nlrc
