// Copyright (c) the nlrc authors. All rights reserved.
//
// Use of this source code is governed by the Apache-2.0 license
// that can be found in the LICENSE file.

#include <stdexcept>

#include "model_detail.hpp"
#include "nlrc/model.hpp"

namespace nlrc {

using detail::conv3x3_forward;

namespace detail {

Plane image_norm_plane(const Image& img) {
  Plane p(img.height, img.width, 3);
  for (uint32_t y = 0; y < img.height; ++y) {
    for (uint32_t x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) p.at(y, x, c) = norm_sample(img.at(x, y, c));
    }
  }
  return p;
}

Plane residual_norm_plane(const ResidualPlane& r) {
  Plane p(r.h, r.w, 3);
  for (uint32_t y = 0; y < r.h; ++y) {
    for (uint32_t x = 0; x < r.w; ++x) {
      for (int c = 0; c < 3; ++c) p.at(y, x, c) = norm_residual(r.at(y, x, c));
    }
  }
  return p;
}

void conv3x3_forward(const Plane& in, const Tensor& w, const Tensor& b, Plane* out) {
  const uint32_t oc_n = w.dims()[0];
  const uint32_t ic_n = w.dims()[1];
  *out = Plane(in.h, in.w, oc_n);
  for (uint32_t y = 0; y < in.h; ++y) {
    for (uint32_t x = 0; x < in.w; ++x) {
      for (uint32_t oc = 0; oc < oc_n; ++oc) {
        double acc = b[oc];
        for (uint32_t ic = 0; ic < ic_n; ++ic) {
          for (int ky = 0; ky < 3; ++ky) {
            const int64_t yy = static_cast<int64_t>(y) + ky - 1;
            if (yy < 0 || yy >= in.h) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int64_t xx = static_cast<int64_t>(x) + kx - 1;
              if (xx < 0 || xx >= in.w) continue;
              acc += w.at(oc, ic, ky, kx) *
                     in.at(static_cast<uint32_t>(yy), static_cast<uint32_t>(xx), ic);
            }
          }
        }
        out->at(y, x, oc) = acc;
      }
    }
  }
}

}  // namespace detail

ResidualPlane compute_residual(const Image& x, const Image& xt) {
  if (x.width != xt.width || x.height != xt.height) {
    throw std::invalid_argument("compute_residual: dimension mismatch");
  }
  ResidualPlane r(x.height, x.width);
  for (uint32_t y = 0; y < x.height; ++y) {
    for (uint32_t xx = 0; xx < x.width; ++xx) {
      for (int c = 0; c < 3; ++c) {
        r.set(y, xx, c, static_cast<int>(x.at(xx, y, c)) - static_cast<int>(xt.at(xx, y, c)));
      }
    }
  }
  return r;
}

ResidualPlane quantize_residual_plane(const ResidualPlane& r, int tau) {
  ResidualPlane q(r.h, r.w);
  for (size_t i = 0; i < r.v.size(); ++i) {
    q.v[i] = static_cast<int16_t>(quantize_residual(r.v[i], tau));
  }
  return q;
}

FeatureMap extract_feature(const Image& xt, const ModelWeights& w) {
  const Plane xnorm = detail::image_norm_plane(xt);
  Plane pre1;
  conv3x3_forward(xnorm, w.t("feat.conv1.w"), w.t("feat.conv1.b"), &pre1);
  for (double& v : pre1.v) v = detail::softplus(v);
  Plane u;
  conv3x3_forward(pre1, w.t("feat.conv2.w"), w.t("feat.conv2.b"), &u);
  return u;
}

void context_features_at(const ResidualPlane& r, const ModelWeights& w, uint32_t y, uint32_t x,
                         double* out) {
  const Tensor& kw = w.t("ctx.conv.w");
  const Tensor& kb = w.t("ctx.conv.b");
  for (uint32_t oc = 0; oc < kFeatureChannels; ++oc) {
    double acc = kb[oc];
    for (uint32_t ic = 0; ic < 3; ++ic) {
      for (int ky = 0; ky < 5; ++ky) {
        const int64_t yy = static_cast<int64_t>(y) + ky - 2;
        if (yy < 0 || yy >= r.h) continue;
        for (int kx = 0; kx < 5; ++kx) {
          const int64_t xx = static_cast<int64_t>(x) + kx - 2;
          if (xx < 0 || xx >= r.w) continue;
          acc += kw.at(oc, ic, ky, kx) *
                 detail::norm_residual(r.at(static_cast<uint32_t>(yy), static_cast<uint32_t>(xx),
                                            static_cast<int>(ic)));
        }
      }
    }
    out[oc] = acc;
  }
}

ContextMap extract_context(const ResidualPlane& r, const ModelWeights& w) {
  ContextMap ctx(r.h, r.w, kFeatureChannels);
  for (uint32_t y = 0; y < r.h; ++y) {
    for (uint32_t x = 0; x < r.w; ++x) {
      context_features_at(r, w, y, x, &ctx.at(y, x, 0));
    }
  }
  return ctx;
}

}  // namespace nlrc
