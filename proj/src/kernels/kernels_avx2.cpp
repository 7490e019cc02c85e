// AVX2 variants. Lanes batch independent output elements; each element's
// reduction chain runs in the same order as the scalar reference, and no FMA
// is used, so results are bitwise identical to kernels_scalar.cpp.

#include <immintrin.h>

#include "cell_ops.hpp"

namespace crank::kern {

namespace {

using detail::pad_input;

__m256i tail_mask(int rem) {
  return _mm256_set_epi64x(rem > 3 ? -1 : 0, rem > 2 ? -1 : 0,
                           rem > 1 ? -1 : 0, rem > 0 ? -1 : 0);
}

void conv2d_fwd_avx2(const double* x, const double* w, const double* bias,
                     double* y, const ConvShape& s) {
  const auto xpad = pad_input(x, s.in_c, s.in_h, s.in_w, s.pad_h, s.pad_w);
  const int oh_n = s.out_h();
  const int ow_n = s.out_w();
  const int ph_h = s.in_h + 2 * s.pad_h;
  const int ph_w = s.in_w + 2 * s.pad_w;

  if (s.stride != 1) {
    for (int co = 0; co < s.out_c; ++co) {
      for (int oh = 0; oh < oh_n; ++oh) {
        double* yrow = y + (static_cast<std::size_t>(co) * oh_n + oh) * ow_n;
        for (int ow = 0; ow < ow_n; ++ow) {
          yrow[ow] = detail::conv_fwd_cell(xpad.data(), w, bias[co], s, co, oh, ow);
        }
      }
    }
    return;
  }

  for (int co = 0; co < s.out_c; ++co) {
    for (int oh = 0; oh < oh_n; ++oh) {
      double* yrow = y + (static_cast<std::size_t>(co) * oh_n + oh) * ow_n;
      int ow = 0;
      for (; ow + 4 <= ow_n; ow += 4) {
        __m256d acc = _mm256_set1_pd(bias[co]);
        for (int ci = 0; ci < s.in_c; ++ci) {
          for (int kh = 0; kh < s.kh; ++kh) {
            const double* xrow = xpad.data() + (static_cast<std::size_t>(ci) * ph_h +
                                                oh + kh) * ph_w + ow;
            const double* wrow =
                w + ((static_cast<std::size_t>(co) * s.in_c + ci) * s.kh + kh) * s.kw;
            for (int kw = 0; kw < s.kw; ++kw) {
              acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(xrow + kw),
                                                     _mm256_set1_pd(wrow[kw])));
            }
          }
        }
        _mm256_storeu_pd(yrow + ow, acc);
      }
      for (; ow < ow_n; ++ow) {
        yrow[ow] = detail::conv_fwd_cell(xpad.data(), w, bias[co], s, co, oh, ow);
      }
    }
  }
}

void conv2d_bwd_data_avx2(const double* dy, const double* w, double* dx,
                          const ConvShape& s) {
  if (s.stride != 1) {
    scalar_ops().conv2d_bwd_data(dy, w, dx, s);
    return;
  }
  const auto dyp = detail::pad_dy_full(dy, s);
  const int dyp_w = s.out_w() + 2 * (s.kw - 1);
  const int dyp_h = s.out_h() + 2 * (s.kh - 1);
  for (int ci = 0; ci < s.in_c; ++ci) {
    for (int ih = 0; ih < s.in_h; ++ih) {
      double* drow_out = dx + (static_cast<std::size_t>(ci) * s.in_h + ih) * s.in_w;
      const int ip = ih + s.pad_h;
      int iw = 0;
      for (; iw + 4 <= s.in_w; iw += 4) {
        const int jp = iw + s.pad_w;
        __m256d acc = _mm256_setzero_pd();
        for (int co = 0; co < s.out_c; ++co) {
          for (int kh = 0; kh < s.kh; ++kh) {
            const double* drow = dyp.data() + (static_cast<std::size_t>(co) * dyp_h +
                                               ip + s.kh - 1 - kh) * dyp_w + jp + s.kw - 1;
            const double* wrow =
                w + ((static_cast<std::size_t>(co) * s.in_c + ci) * s.kh + kh) * s.kw;
            for (int kw = 0; kw < s.kw; ++kw) {
              acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(drow - kw),
                                                     _mm256_set1_pd(wrow[kw])));
            }
          }
        }
        _mm256_storeu_pd(drow_out + iw,
                         _mm256_add_pd(_mm256_loadu_pd(drow_out + iw), acc));
      }
      for (; iw < s.in_w; ++iw) {
        drow_out[iw] += detail::conv_bwd_data_cell(dyp.data(), w, s, ci, ih, iw);
      }
    }
  }
}

void conv2d_bwd_weights_avx2(const double* x, const double* dy, double* dw,
                             double* dbias, const ConvShape& s) {
  const auto xpad = pad_input(x, s.in_c, s.in_h, s.in_w, s.pad_h, s.pad_w);
  const int oh_n = s.out_h();
  const int ow_n = s.out_w();
  const int ph_h = s.in_h + 2 * s.pad_h;
  const int ph_w = s.in_w + 2 * s.pad_w;
  for (int co = 0; co < s.out_c; ++co) {
    double db = 0.0;
    const double* dplane = dy + static_cast<std::size_t>(co) * oh_n * ow_n;
    for (int i = 0; i < oh_n * ow_n; ++i) db += dplane[i];
    dbias[co] += db;
    for (int ci = 0; ci < s.in_c; ++ci) {
      for (int kh = 0; kh < s.kh; ++kh) {
        for (int kw0 = 0; kw0 < s.kw; kw0 += 4) {
          const int rem = s.kw - kw0 < 4 ? s.kw - kw0 : 4;
          const __m256i mask = tail_mask(rem);
          __m256d acc = _mm256_setzero_pd();
          for (int oh = 0; oh < oh_n; ++oh) {
            const double* drow = dy + (static_cast<std::size_t>(co) * oh_n + oh) * ow_n;
            const double* xrow = xpad.data() + (static_cast<std::size_t>(ci) * ph_h +
                                                oh * s.stride + kh) * ph_w + kw0;
            for (int ow = 0; ow < ow_n; ++ow) {
              const __m256d xv = rem == 4
                                     ? _mm256_loadu_pd(xrow + ow * s.stride)
                                     : _mm256_maskload_pd(xrow + ow * s.stride, mask);
              acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_set1_pd(drow[ow]), xv));
            }
          }
          double* dwrow =
              dw + ((static_cast<std::size_t>(co) * s.in_c + ci) * s.kh + kh) * s.kw + kw0;
          if (rem == 4) {
            _mm256_storeu_pd(dwrow, _mm256_add_pd(_mm256_loadu_pd(dwrow), acc));
          } else {
            const __m256d prev = _mm256_maskload_pd(dwrow, mask);
            _mm256_maskstore_pd(dwrow, mask, _mm256_add_pd(prev, acc));
          }
        }
      }
    }
  }
}

void fc_fwd_avx2(const double* x, const double* w, const double* bias,
                 double* y, int in_n, int out_n) {
  int o = 0;
  for (; o + 4 <= out_n; o += 4) {
    __m256d acc = _mm256_loadu_pd(bias + o);
    for (int i = 0; i < in_n; ++i) {
      acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_set1_pd(x[i]),
                                             _mm256_loadu_pd(w + static_cast<std::size_t>(i) * out_n + o)));
    }
    _mm256_storeu_pd(y + o, acc);
  }
  for (; o < out_n; ++o) {
    y[o] = detail::fc_fwd_cell(x, w, bias[o], in_n, out_n, o);
  }
}

void fc_bwd_data_avx2(const double* dy, const double* w, double* dx,
                      int in_n, int out_n) {
  // Per-input reduction over outputs; vectorizing it would reassociate the
  // chain, so the reference path is used.
  scalar_ops().fc_bwd_data(dy, w, dx, in_n, out_n);
}

void fc_bwd_weights_avx2(const double* x, const double* dy, double* dw,
                         double* dbias, int in_n, int out_n) {
  for (int i = 0; i < in_n; ++i) {
    const __m256d xv = _mm256_set1_pd(x[i]);
    double* wrow = dw + static_cast<std::size_t>(i) * out_n;
    int o = 0;
    for (; o + 4 <= out_n; o += 4) {
      const __m256d upd = _mm256_add_pd(_mm256_loadu_pd(wrow + o),
                                        _mm256_mul_pd(xv, _mm256_loadu_pd(dy + o)));
      _mm256_storeu_pd(wrow + o, upd);
    }
    for (; o < out_n; ++o) wrow[o] += x[i] * dy[o];
  }
  int o = 0;
  for (; o + 4 <= out_n; o += 4) {
    _mm256_storeu_pd(dbias + o, _mm256_add_pd(_mm256_loadu_pd(dbias + o),
                                              _mm256_loadu_pd(dy + o)));
  }
  for (; o < out_n; ++o) dbias[o] += dy[o];
}

void leaky_relu_fwd_avx2(const double* x, double* y, std::size_t n, double alpha) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d xv = _mm256_loadu_pd(x + i);
    const __m256d gt = _mm256_cmp_pd(xv, zero, _CMP_GT_OQ);
    _mm256_storeu_pd(y + i, _mm256_blendv_pd(_mm256_mul_pd(av, xv), xv, gt));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : alpha * x[i];
}

void leaky_relu_bwd_avx2(const double* x, const double* dy, double* dx,
                         std::size_t n, double alpha) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d xv = _mm256_loadu_pd(x + i);
    const __m256d dv = _mm256_loadu_pd(dy + i);
    const __m256d gt = _mm256_cmp_pd(xv, zero, _CMP_GT_OQ);
    const __m256d g = _mm256_blendv_pd(_mm256_mul_pd(av, dv), dv, gt);
    _mm256_storeu_pd(dx + i, _mm256_add_pd(_mm256_loadu_pd(dx + i), g));
  }
  for (; i < n; ++i) dx[i] += x[i] > 0.0 ? dy[i] : alpha * dy[i];
}

void add_inplace_avx2(double* y, const double* x, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) y[i] += x[i];
}

void adam_step_avx2(double* param, const double* grad, double* m, double* v,
                    std::size_t n, const AdamParams& p) {
  const __m256d b1 = _mm256_set1_pd(p.beta1);
  const __m256d b2 = _mm256_set1_pd(p.beta2);
  const __m256d omb1 = _mm256_set1_pd(1.0 - p.beta1);
  const __m256d omb2 = _mm256_set1_pd(1.0 - p.beta2);
  const __m256d bias1 = _mm256_set1_pd(p.bias1);
  const __m256d bias2 = _mm256_set1_pd(p.bias2);
  const __m256d lr = _mm256_set1_pd(p.lr);
  const __m256d eps = _mm256_set1_pd(p.eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grad + i);
    const __m256d mv = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)),
                                     _mm256_mul_pd(omb1, g));
    const __m256d vv = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                                     _mm256_mul_pd(omb2, _mm256_mul_pd(g, g)));
    _mm256_storeu_pd(m + i, mv);
    _mm256_storeu_pd(v + i, vv);
    const __m256d mhat = _mm256_div_pd(mv, bias1);
    const __m256d vhat = _mm256_div_pd(vv, bias2);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), eps);
    const __m256d step = _mm256_mul_pd(lr, _mm256_div_pd(mhat, denom));
    _mm256_storeu_pd(param + i, _mm256_sub_pd(_mm256_loadu_pd(param + i), step));
  }
  for (; i < n; ++i) detail::adam_cell(param, grad, m, v, i, p);
}

}  // namespace

const Ops* avx2_ops() {
  if (!__builtin_cpu_supports("avx2")) return nullptr;
  static const Ops table = {
      conv2d_fwd_avx2,
      conv2d_bwd_data_avx2,
      conv2d_bwd_weights_avx2,
      fc_fwd_avx2,
      fc_bwd_data_avx2,
      fc_bwd_weights_avx2,
      leaky_relu_fwd_avx2,
      leaky_relu_bwd_avx2,
      add_inplace_avx2,
      adam_step_avx2,
  };
  return &table;
}

}  // namespace crank::kern
