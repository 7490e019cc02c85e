#include <doctest.h>

#include <cstring>
#include <vector>

#include "crank/kernels.hpp"
#include "crank/rng.hpp"
#include "support/reference.hpp"

using namespace crank;
using kern::ConvShape;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

ConvShape random_shape(Rng& rng, bool strided) {
  ConvShape s;
  s.in_c = 1 + static_cast<int>(rng.uniform_int(4));
  s.out_c = 1 + static_cast<int>(rng.uniform_int(5));
  const int kidx = static_cast<int>(rng.uniform_int(3));
  s.kh = kidx == 0 ? 1 : 3;
  s.kw = kidx == 2 ? 5 : 3;
  s.pad_h = (s.kh - 1) / 2;
  s.pad_w = (s.kw - 1) / 2;
  s.stride = strided ? 2 : 1;
  s.in_h = s.kh + static_cast<int>(rng.uniform_int(14));
  s.in_w = s.kw + static_cast<int>(rng.uniform_int(14));
  return s;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("conv2d forward matches the naive reference") {
  Rng rng(137);
  for (int t = 0; t < 200; ++t) {
    const ConvShape s = random_shape(rng, rng.bernoulli(0.3));
    const auto x = random_vec(rng, static_cast<std::size_t>(s.in_c) * s.in_h * s.in_w);
    const auto w = random_vec(rng, static_cast<std::size_t>(s.out_c) * s.in_c * s.kh * s.kw);
    const auto b = random_vec(rng, static_cast<std::size_t>(s.out_c));
    std::vector<double> y(static_cast<std::size_t>(s.out_c) * s.out_h() * s.out_w());
    std::vector<double> y_ref = y;
    kern::scalar_ops().conv2d_fwd(x.data(), w.data(), b.data(), y.data(), s);
    refimpl::naive_conv2d(x.data(), w.data(), b.data(), y_ref.data(), s);
    for (std::size_t i = 0; i < y.size(); ++i) {
      CHECK(y[i] == doctest::Approx(y_ref[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("conv2d backward matches finite differences of the forward") {
  Rng rng(139);
  for (int t = 0; t < 20; ++t) {
    const ConvShape s = random_shape(rng, rng.bernoulli(0.3));
    const std::size_t xn = static_cast<std::size_t>(s.in_c) * s.in_h * s.in_w;
    const std::size_t wn = static_cast<std::size_t>(s.out_c) * s.in_c * s.kh * s.kw;
    const std::size_t yn = static_cast<std::size_t>(s.out_c) * s.out_h() * s.out_w();
    auto x = random_vec(rng, xn);
    auto w = random_vec(rng, wn);
    const auto b = random_vec(rng, static_cast<std::size_t>(s.out_c));
    const auto dy = random_vec(rng, yn);
    const auto& ops = kern::scalar_ops();

    auto loss = [&]() {
      std::vector<double> y(yn);
      ops.conv2d_fwd(x.data(), w.data(), b.data(), y.data(), s);
      double acc = 0.0;
      for (std::size_t i = 0; i < yn; ++i) acc += y[i] * dy[i];
      return acc;
    };

    std::vector<double> dx(xn, 0.0), dw(wn, 0.0), db(s.out_c, 0.0);
    ops.conv2d_bwd_data(dy.data(), w.data(), dx.data(), s);
    ops.conv2d_bwd_weights(x.data(), dy.data(), dw.data(), db.data(), s);

    const double h = 1e-6;
    for (int probe = 0; probe < 12; ++probe) {
      const std::size_t xi = rng.uniform_int(xn);
      const double orig = x[xi];
      x[xi] = orig + h;
      const double up = loss();
      x[xi] = orig - h;
      const double down = loss();
      x[xi] = orig;
      CHECK(dx[xi] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-5));

      const std::size_t wi = rng.uniform_int(wn);
      const double worig = w[wi];
      w[wi] = worig + h;
      const double wup = loss();
      w[wi] = worig - h;
      const double wdown = loss();
      w[wi] = worig;
      CHECK(dw[wi] == doctest::Approx((wup - wdown) / (2 * h)).epsilon(1e-5));
    }
  }
}

TEST_CASE("avx2 variants agree bitwise with the scalar reference") {
  const kern::Ops* avx2 = kern::avx2_ops();
  if (avx2 == nullptr) {
    MESSAGE("AVX2 unavailable on this CPU; equivalence suite skipped");
    return;
  }
  const kern::Ops& ref = kern::scalar_ops();
  Rng rng(149);

  SUBCASE("conv2d forward") {
    for (int t = 0; t < 300; ++t) {
      const ConvShape s = random_shape(rng, rng.bernoulli(0.3));
      const auto x = random_vec(rng, static_cast<std::size_t>(s.in_c) * s.in_h * s.in_w);
      const auto w = random_vec(rng, static_cast<std::size_t>(s.out_c) * s.in_c * s.kh * s.kw);
      const auto b = random_vec(rng, static_cast<std::size_t>(s.out_c));
      std::vector<double> ya(static_cast<std::size_t>(s.out_c) * s.out_h() * s.out_w());
      std::vector<double> yb = ya;
      ref.conv2d_fwd(x.data(), w.data(), b.data(), ya.data(), s);
      avx2->conv2d_fwd(x.data(), w.data(), b.data(), yb.data(), s);
      CHECK(bitwise_equal(ya, yb));
    }
  }
  SUBCASE("conv2d backward data") {
    for (int t = 0; t < 300; ++t) {
      const ConvShape s = random_shape(rng, rng.bernoulli(0.3));
      const auto w = random_vec(rng, static_cast<std::size_t>(s.out_c) * s.in_c * s.kh * s.kw);
      const auto dy = random_vec(rng, static_cast<std::size_t>(s.out_c) * s.out_h() * s.out_w());
      std::vector<double> da(static_cast<std::size_t>(s.in_c) * s.in_h * s.in_w, 0.25);
      std::vector<double> db = da;
      ref.conv2d_bwd_data(dy.data(), w.data(), da.data(), s);
      avx2->conv2d_bwd_data(dy.data(), w.data(), db.data(), s);
      CHECK(bitwise_equal(da, db));
    }
  }
  SUBCASE("conv2d backward weights") {
    for (int t = 0; t < 300; ++t) {
      const ConvShape s = random_shape(rng, rng.bernoulli(0.3));
      const auto x = random_vec(rng, static_cast<std::size_t>(s.in_c) * s.in_h * s.in_w);
      const auto dy = random_vec(rng, static_cast<std::size_t>(s.out_c) * s.out_h() * s.out_w());
      const std::size_t wn = static_cast<std::size_t>(s.out_c) * s.in_c * s.kh * s.kw;
      std::vector<double> dwa(wn, 0.5), dba(s.out_c, -0.5);
      std::vector<double> dwb = dwa, dbb = dba;
      ref.conv2d_bwd_weights(x.data(), dy.data(), dwa.data(), dba.data(), s);
      avx2->conv2d_bwd_weights(x.data(), dy.data(), dwb.data(), dbb.data(), s);
      CHECK(bitwise_equal(dwa, dwb));
      CHECK(bitwise_equal(dba, dbb));
    }
  }
  SUBCASE("fully connected") {
    for (int t = 0; t < 300; ++t) {
      const int in_n = 1 + static_cast<int>(rng.uniform_int(40));
      const int out_n = 1 + static_cast<int>(rng.uniform_int(90));
      const auto x = random_vec(rng, static_cast<std::size_t>(in_n));
      const auto w = random_vec(rng, static_cast<std::size_t>(in_n) * out_n);
      const auto b = random_vec(rng, static_cast<std::size_t>(out_n));
      const auto dy = random_vec(rng, static_cast<std::size_t>(out_n));
      std::vector<double> ya(out_n), yb(out_n);
      ref.fc_fwd(x.data(), w.data(), b.data(), ya.data(), in_n, out_n);
      avx2->fc_fwd(x.data(), w.data(), b.data(), yb.data(), in_n, out_n);
      CHECK(bitwise_equal(ya, yb));

      std::vector<double> dxa(in_n, 0.0), dxb(in_n, 0.0);
      ref.fc_bwd_data(dy.data(), w.data(), dxa.data(), in_n, out_n);
      avx2->fc_bwd_data(dy.data(), w.data(), dxb.data(), in_n, out_n);
      CHECK(bitwise_equal(dxa, dxb));

      std::vector<double> dwa(static_cast<std::size_t>(in_n) * out_n, 0.125);
      std::vector<double> dba(out_n, 0.25);
      std::vector<double> dwb = dwa, dbb = dba;
      ref.fc_bwd_weights(x.data(), dy.data(), dwa.data(), dba.data(), in_n, out_n);
      avx2->fc_bwd_weights(x.data(), dy.data(), dwb.data(), dbb.data(), in_n, out_n);
      CHECK(bitwise_equal(dwa, dwb));
      CHECK(bitwise_equal(dba, dbb));
    }
  }
  SUBCASE("elementwise and adam") {
    for (int t = 0; t < 300; ++t) {
      const std::size_t n = 1 + rng.uniform_int(700);
      const auto x = random_vec(rng, n, -2.0, 2.0);
      const auto dy = random_vec(rng, n);
      std::vector<double> ya(n), yb(n);
      ref.leaky_relu_fwd(x.data(), ya.data(), n, 0.01);
      avx2->leaky_relu_fwd(x.data(), yb.data(), n, 0.01);
      CHECK(bitwise_equal(ya, yb));

      std::vector<double> dxa(n, 0.75), dxb(n, 0.75);
      ref.leaky_relu_bwd(x.data(), dy.data(), dxa.data(), n, 0.01);
      avx2->leaky_relu_bwd(x.data(), dy.data(), dxb.data(), n, 0.01);
      CHECK(bitwise_equal(dxa, dxb));

      std::vector<double> aa = random_vec(rng, n), ab = aa;
      ref.add_inplace(aa.data(), x.data(), n);
      avx2->add_inplace(ab.data(), x.data(), n);
      CHECK(bitwise_equal(aa, ab));

      kern::AdamParams ap;
      ap.lr = 1e-3;
      ap.bias1 = 1.0 - 0.9;
      ap.bias2 = 1.0 - 0.999;
      auto pa = random_vec(rng, n), ma = random_vec(rng, n, 0, 1), va = random_vec(rng, n, 0, 1);
      auto pb = pa, mb = ma, vb = va;
      const auto g = random_vec(rng, n);
      ref.adam_step(pa.data(), g.data(), ma.data(), va.data(), n, ap);
      avx2->adam_step(pb.data(), g.data(), mb.data(), vb.data(), n, ap);
      CHECK(bitwise_equal(pa, pb));
      CHECK(bitwise_equal(ma, mb));
      CHECK(bitwise_equal(va, vb));
    }
  }
}

TEST_CASE("dispatch reports a valid table") {
  const char* name = kern::active_name();
  CHECK((std::strcmp(name, "avx2") == 0 || std::strcmp(name, "scalar") == 0));
  // active table is callable
  const std::vector<double> x = {1.0, -1.0, 2.0, -2.0, 0.5};
  std::vector<double> y(5);
  kern::active_ops().leaky_relu_fwd(x.data(), y.data(), 5, 0.1);
  CHECK(y[0] == 1.0);
  CHECK(y[1] == -0.1);
}
