// Scalar reference kernels. Every SIMD variant is equivalence-tested against
// these, so loop nests here define the canonical operation order.

#include <cstring>

#include "cell_ops.hpp"

namespace crank::kern {

namespace {

using detail::pad_input;

void conv2d_fwd_scalar(const double* x, const double* w, const double* bias,
                       double* y, const ConvShape& s) {
  const auto xpad = pad_input(x, s.in_c, s.in_h, s.in_w, s.pad_h, s.pad_w);
  const int oh_n = s.out_h();
  const int ow_n = s.out_w();
  for (int co = 0; co < s.out_c; ++co) {
    for (int oh = 0; oh < oh_n; ++oh) {
      double* yrow = y + (static_cast<std::size_t>(co) * oh_n + oh) * ow_n;
      for (int ow = 0; ow < ow_n; ++ow) {
        yrow[ow] = detail::conv_fwd_cell(xpad.data(), w, bias[co], s, co, oh, ow);
      }
    }
  }
}

void conv2d_bwd_data_scalar(const double* dy, const double* w, double* dx,
                            const ConvShape& s) {
  if (s.stride == 1) {
    const auto dyp = detail::pad_dy_full(dy, s);
    for (int ci = 0; ci < s.in_c; ++ci) {
      for (int ih = 0; ih < s.in_h; ++ih) {
        double* drow = dx + (static_cast<std::size_t>(ci) * s.in_h + ih) * s.in_w;
        for (int iw = 0; iw < s.in_w; ++iw) {
          drow[iw] += detail::conv_bwd_data_cell(dyp.data(), w, s, ci, ih, iw);
        }
      }
    }
    return;
  }
  // Strided case: scatter into a padded buffer, then fold the interior back.
  const int ph_h = s.in_h + 2 * s.pad_h;
  const int ph_w = s.in_w + 2 * s.pad_w;
  std::vector<double> dxpad(static_cast<std::size_t>(s.in_c) * ph_h * ph_w, 0.0);
  const int oh_n = s.out_h();
  const int ow_n = s.out_w();
  for (int co = 0; co < s.out_c; ++co) {
    for (int oh = 0; oh < oh_n; ++oh) {
      for (int ow = 0; ow < ow_n; ++ow) {
        const double g = dy[(static_cast<std::size_t>(co) * oh_n + oh) * ow_n + ow];
        for (int ci = 0; ci < s.in_c; ++ci) {
          for (int kh = 0; kh < s.kh; ++kh) {
            double* drow = dxpad.data() + (static_cast<std::size_t>(ci) * ph_h +
                                           oh * s.stride + kh) * ph_w + ow * s.stride;
            const double* wrow =
                w + ((static_cast<std::size_t>(co) * s.in_c + ci) * s.kh + kh) * s.kw;
            for (int kw = 0; kw < s.kw; ++kw) {
              drow[kw] += g * wrow[kw];
            }
          }
        }
      }
    }
  }
  for (int ci = 0; ci < s.in_c; ++ci) {
    for (int ih = 0; ih < s.in_h; ++ih) {
      const double* src = dxpad.data() + (static_cast<std::size_t>(ci) * ph_h +
                                          ih + s.pad_h) * ph_w + s.pad_w;
      double* dst = dx + (static_cast<std::size_t>(ci) * s.in_h + ih) * s.in_w;
      for (int iw = 0; iw < s.in_w; ++iw) dst[iw] += src[iw];
    }
  }
}

void conv2d_bwd_weights_scalar(const double* x, const double* dy, double* dw,
                               double* dbias, const ConvShape& s) {
  const auto xpad = pad_input(x, s.in_c, s.in_h, s.in_w, s.pad_h, s.pad_w);
  const int oh_n = s.out_h();
  const int ow_n = s.out_w();
  for (int co = 0; co < s.out_c; ++co) {
    double db = 0.0;
    const double* dplane = dy + static_cast<std::size_t>(co) * oh_n * ow_n;
    for (int i = 0; i < oh_n * ow_n; ++i) db += dplane[i];
    dbias[co] += db;
    for (int ci = 0; ci < s.in_c; ++ci) {
      for (int kh = 0; kh < s.kh; ++kh) {
        for (int kw = 0; kw < s.kw; ++kw) {
          dw[((static_cast<std::size_t>(co) * s.in_c + ci) * s.kh + kh) * s.kw + kw] +=
              detail::conv_bwd_weight_cell(xpad.data(), dy, s, co, ci, kh, kw);
        }
      }
    }
  }
}

void fc_fwd_scalar(const double* x, const double* w, const double* bias,
                   double* y, int in_n, int out_n) {
  for (int o = 0; o < out_n; ++o) {
    y[o] = detail::fc_fwd_cell(x, w, bias[o], in_n, out_n, o);
  }
}

void fc_bwd_data_scalar(const double* dy, const double* w, double* dx,
                        int in_n, int out_n) {
  for (int i = 0; i < in_n; ++i) {
    double acc = 0.0;
    const double* wrow = w + static_cast<std::size_t>(i) * out_n;
    for (int o = 0; o < out_n; ++o) acc += dy[o] * wrow[o];
    dx[i] += acc;
  }
}

void fc_bwd_weights_scalar(const double* x, const double* dy, double* dw,
                           double* dbias, int in_n, int out_n) {
  for (int i = 0; i < in_n; ++i) {
    const double xi = x[i];
    double* wrow = dw + static_cast<std::size_t>(i) * out_n;
    for (int o = 0; o < out_n; ++o) wrow[o] += xi * dy[o];
  }
  for (int o = 0; o < out_n; ++o) dbias[o] += dy[o];
}

void leaky_relu_fwd_scalar(const double* x, double* y, std::size_t n, double alpha) {
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = x[i] > 0.0 ? x[i] : alpha * x[i];
  }
}

void leaky_relu_bwd_scalar(const double* x, const double* dy, double* dx,
                           std::size_t n, double alpha) {
  for (std::size_t i = 0; i < n; ++i) {
    dx[i] += x[i] > 0.0 ? dy[i] : alpha * dy[i];
  }
}

void add_inplace_scalar(double* y, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

void adam_step_scalar(double* param, const double* grad, double* m, double* v,
                      std::size_t n, const AdamParams& p) {
  for (std::size_t i = 0; i < n; ++i) {
    detail::adam_cell(param, grad, m, v, i, p);
  }
}

}  // namespace

const Ops& scalar_ops() {
  static const Ops table = {
      conv2d_fwd_scalar,
      conv2d_bwd_data_scalar,
      conv2d_bwd_weights_scalar,
      fc_fwd_scalar,
      fc_bwd_data_scalar,
      fc_bwd_weights_scalar,
      leaky_relu_fwd_scalar,
      leaky_relu_bwd_scalar,
      add_inplace_scalar,
      adam_step_scalar,
  };
  return table;
}

}  // namespace crank::kern
