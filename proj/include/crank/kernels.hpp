#pragma once

#include <cstddef>
#include <cstdint>

namespace crank::kern {

// 2D convolution shape. Tensors are dense row-major doubles:
// input [in_c][in_h][in_w], weights [out_c][in_c][kh][kw], output
// [out_c][out_h][out_w]. Zero padding, square stride.
struct ConvShape {
  int in_c = 1, in_h = 1, in_w = 1;
  int out_c = 1;
  int kh = 1, kw = 1;
  int pad_h = 0, pad_w = 0;
  int stride = 1;

  int out_h() const { return (in_h + 2 * pad_h - kh) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad_w - kw) / stride + 1; }
};

struct AdamParams {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Bias corrections 1 - beta^t for the current step.
  double bias1 = 1.0;
  double bias2 = 1.0;
};

// Kernel function table. Backward kernels accumulate (+=) into caller-zeroed
// buffers so per-sample gradients can be reduced in a fixed order.
//
// Every variant of a kernel performs the same IEEE-754 operations in the same
// order as the scalar reference (SIMD lanes only batch independent output
// elements), so variants agree bitwise; the equivalence suite asserts that.
struct Ops {
  void (*conv2d_fwd)(const double* x, const double* w, const double* bias,
                     double* y, const ConvShape& s);
  void (*conv2d_bwd_data)(const double* dy, const double* w, double* dx,
                          const ConvShape& s);
  void (*conv2d_bwd_weights)(const double* x, const double* dy, double* dw,
                             double* dbias, const ConvShape& s);
  // Fully connected; weights are input-major [in][out].
  void (*fc_fwd)(const double* x, const double* w, const double* bias,
                 double* y, int in_n, int out_n);
  void (*fc_bwd_data)(const double* dy, const double* w, double* dx,
                      int in_n, int out_n);
  void (*fc_bwd_weights)(const double* x, const double* dy, double* dw,
                         double* dbias, int in_n, int out_n);
  void (*leaky_relu_fwd)(const double* x, double* y, std::size_t n, double alpha);
  void (*leaky_relu_bwd)(const double* x, const double* dy, double* dx,
                         std::size_t n, double alpha);
  void (*add_inplace)(double* y, const double* x, std::size_t n);
  void (*adam_step)(double* param, const double* grad, double* m, double* v,
                    std::size_t n, const AdamParams& p);
};

// Scalar reference implementations; always available.
const Ops& scalar_ops();

// AVX2 implementations, or nullptr when the CPU lacks AVX2.
const Ops* avx2_ops();

// The table selected at startup: AVX2 when the CPU supports it, unless the
// environment variable CRANK_KERNELS=scalar forces the reference path.
const Ops& active_ops();
const char* active_name();

}  // namespace crank::kern
