#pragma once

// Internal helpers shared by the scalar and SIMD kernel variants. Both
// variants materialize the same zero-padded buffers so their inner loops run
// the same operation sequence over the same memory layout.

#include <vector>

#include "crank/kernels.hpp"

namespace crank::kern::detail {

// [c][h][w] -> [c][h+2ph][w+2pw] with zero margins.
inline std::vector<double> pad_input(const double* x, int c, int h, int w,
                                     int pad_h, int pad_w) {
  const int ph = h + 2 * pad_h;
  const int pw = w + 2 * pad_w;
  std::vector<double> out(static_cast<std::size_t>(c) * ph * pw, 0.0);
  for (int ci = 0; ci < c; ++ci) {
    for (int row = 0; row < h; ++row) {
      const double* src = x + (static_cast<std::size_t>(ci) * h + row) * w;
      double* dst = out.data() +
                    (static_cast<std::size_t>(ci) * ph + row + pad_h) * pw + pad_w;
      for (int col = 0; col < w; ++col) dst[col] = src[col];
    }
  }
  return out;
}

// Margins for the backward-data gather formulation: dx_pad[ci][ip][jp] sums
// dy_pad[co][ip + kh_max-1 - kh][jp + kw_max-1 - kw] * w[co][ci][kh][kw].
inline std::vector<double> pad_dy_full(const double* dy, const ConvShape& s) {
  return pad_input(dy, s.out_c, s.out_h(), s.out_w(), s.kh - 1, s.kw - 1);
}

}  // namespace crank::kern::detail
