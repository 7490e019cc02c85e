#pragma once

// Per-element reference chains used by the scalar kernels and by the SIMD
// variants' remainder loops. Keeping them in one place guarantees every
// variant runs the identical operation sequence on tail elements.
//
// These TUs are compiled with -ffp-contract=off so mul+add sequences stay
// separate operations and match the SIMD bodies bitwise.

#include <cmath>

#include "conv_common.hpp"

namespace crank::kern::detail {

inline double conv_fwd_cell(const double* xpad, const double* w, double bias_v,
                            const ConvShape& s, int co, int oh, int ow) {
  const int ph_w = s.in_w + 2 * s.pad_w;
  const int ph_h = s.in_h + 2 * s.pad_h;
  double acc = bias_v;
  for (int ci = 0; ci < s.in_c; ++ci) {
    for (int kh = 0; kh < s.kh; ++kh) {
      const double* xrow = xpad + (static_cast<std::size_t>(ci) * ph_h +
                                   oh * s.stride + kh) * ph_w + ow * s.stride;
      const double* wrow = w + ((static_cast<std::size_t>(co) * s.in_c + ci) * s.kh + kh) * s.kw;
      for (int kw = 0; kw < s.kw; ++kw) {
        acc += xrow[kw] * wrow[kw];
      }
    }
  }
  return acc;
}

// Gather form of backward-data (stride 1 only): the padded upstream gradient
// has margins (kh-1, kw-1) and each input cell reduces over (co, kh, kw).
inline double conv_bwd_data_cell(const double* dyp, const double* w,
                                 const ConvShape& s, int ci, int ih, int iw) {
  const int dyp_w = s.out_w() + 2 * (s.kw - 1);
  const int dyp_h = s.out_h() + 2 * (s.kh - 1);
  const int ip = ih + s.pad_h;
  const int jp = iw + s.pad_w;
  double acc = 0.0;
  for (int co = 0; co < s.out_c; ++co) {
    for (int kh = 0; kh < s.kh; ++kh) {
      const double* drow = dyp + (static_cast<std::size_t>(co) * dyp_h +
                                  ip + s.kh - 1 - kh) * dyp_w + jp + s.kw - 1;
      const double* wrow = w + ((static_cast<std::size_t>(co) * s.in_c + ci) * s.kh + kh) * s.kw;
      for (int kw = 0; kw < s.kw; ++kw) {
        acc += drow[-kw] * wrow[kw];
      }
    }
  }
  return acc;
}

inline double conv_bwd_weight_cell(const double* xpad, const double* dy,
                                   const ConvShape& s, int co, int ci, int kh, int kw) {
  const int ph_w = s.in_w + 2 * s.pad_w;
  const int ph_h = s.in_h + 2 * s.pad_h;
  const int oh_n = s.out_h();
  const int ow_n = s.out_w();
  double acc = 0.0;
  for (int oh = 0; oh < oh_n; ++oh) {
    const double* drow = dy + (static_cast<std::size_t>(co) * oh_n + oh) * ow_n;
    const double* xrow = xpad + (static_cast<std::size_t>(ci) * ph_h +
                                 oh * s.stride + kh) * ph_w + kw;
    for (int ow = 0; ow < ow_n; ++ow) {
      acc += drow[ow] * xrow[ow * s.stride];
    }
  }
  return acc;
}

inline double fc_fwd_cell(const double* x, const double* w, double bias_v,
                          int in_n, int out_n, int o) {
  double acc = bias_v;
  for (int i = 0; i < in_n; ++i) {
    acc += x[i] * w[static_cast<std::size_t>(i) * out_n + o];
  }
  return acc;
}

inline void adam_cell(double* param, const double* grad, double* m, double* v,
                      std::size_t i, const AdamParams& p) {
  const double g = grad[i];
  m[i] = p.beta1 * m[i] + (1.0 - p.beta1) * g;
  v[i] = p.beta2 * v[i] + (1.0 - p.beta2) * (g * g);
  const double mhat = m[i] / p.bias1;
  const double vhat = v[i] / p.bias2;
  param[i] -= p.lr * (mhat / (std::sqrt(vhat) + p.eps));
}

}  // namespace crank::kern::detail
