#include <doctest.h>

#include <cmath>
#include <cstring>

#include "crank/augment.hpp"
#include "crank/checkpoint.hpp"
#include "crank/net.hpp"
#include "crank/oracle.hpp"
#include "crank/ranking.hpp"
#include "crank/rng.hpp"
#include "crank/train.hpp"
#include "support/reference.hpp"

using namespace crank;

namespace {

RankerConfig tiny_config() {
  RankerConfig cfg;
  cfg.capacity_n = 8;
  cfg.bpn_channels = 3;
  cfg.bpn_depth = 2;
  cfg.interleave = 2;
  cfg.scales = 2;
  cfg.fpn_channels = 4;
  cfg.backbone_channels = {2, 3};
  cfg.image_size = 16;
  return cfg;
}

Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

struct TinyInput {
  Tensor image;
  Tensor boxmat;
  std::vector<double> raw_conf;
  std::vector<double> oracle;
};

TinyInput random_input(Rng& rng, const RankerConfig& cfg) {
  TinyInput in;
  in.image = random_tensor(rng, {1, cfg.image_size, cfg.image_size}, 0.0, 2.0);
  in.boxmat = Tensor({1, cfg.capacity_n, 5});
  in.raw_conf.resize(static_cast<std::size_t>(cfg.capacity_n));
  in.oracle.resize(static_cast<std::size_t>(cfg.capacity_n));
  double prev = 1.0;
  for (int r = 0; r < cfg.capacity_n; ++r) {
    prev = rng.uniform(0.0, prev);  // descending confidences
    in.boxmat.at(0, r, 0) = rng.uniform();
    in.boxmat.at(0, r, 1) = rng.uniform();
    in.boxmat.at(0, r, 2) = rng.uniform(0, 0.5);
    in.boxmat.at(0, r, 3) = rng.uniform(0, 0.5);
    in.boxmat.at(0, r, 4) = prev;
    in.raw_conf[static_cast<std::size_t>(r)] = prev;
    in.oracle[static_cast<std::size_t>(r)] = rng.uniform();
  }
  return in;
}

double pipeline_loss(const RankerNetwork& net, const TinyInput& in, int pair_n) {
  const ForwardResult fr = forward(net, in.image, in.boxmat, in.raw_conf);
  return ranked_pair_loss(fr.refined, in.oracle, pair_n).value;
}

}  // namespace

TEST_CASE("config validation") {
  RankerConfig cfg = tiny_config();
  CHECK_NOTHROW(cfg.validate());
  SUBCASE("interleave above depth") {
    cfg.interleave = 5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
  SUBCASE("scales above backbone stages") {
    cfg.scales = 3;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
  SUBCASE("non-positive capacity") {
    cfg.capacity_n = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
}

TEST_CASE("shape audit over a config grid") {
  Rng rng(151);
  for (int t = 0; t < 12; ++t) {
    RankerConfig cfg;
    cfg.capacity_n = 4 + static_cast<int>(rng.uniform_int(12));
    cfg.bpn_channels = 1 + static_cast<int>(rng.uniform_int(4));
    cfg.bpn_depth = 1 + static_cast<int>(rng.uniform_int(4));
    cfg.interleave = 1 + static_cast<int>(rng.uniform_int(cfg.bpn_depth));
    cfg.backbone_channels = {1 + static_cast<int>(rng.uniform_int(3)),
                             1 + static_cast<int>(rng.uniform_int(4))};
    cfg.scales = 1 + static_cast<int>(rng.uniform_int(2));
    cfg.fpn_channels = 1 + static_cast<int>(rng.uniform_int(5));
    cfg.image_size = 8 + static_cast<int>(rng.uniform_int(16));

    const RankerNetwork net = init_network(cfg, 7);
    const auto expected = parameter_shapes(cfg);
    const auto actual = parameters(net);
    REQUIRE(expected.size() == actual.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
      CHECK(expected[i].name == actual[i].name);
      CHECK(expected[i].shape == actual[i].tensor->shape);
    }

    // forward/backward complete without error
    Rng in_rng(t);
    const TinyInput in = random_input(in_rng, cfg);
    const ForwardResult fr = forward(net, in.image, in.boxmat, in.raw_conf);
    CHECK(static_cast<int>(fr.refined.size()) == cfg.capacity_n);
    std::vector<double> d(fr.refined.size(), 0.1);
    CHECK_NOTHROW(backward(net, fr.trace, d));
  }
}

TEST_CASE("bpn_forward contract") {
  const RankerConfig cfg = tiny_config();
  const RankerNetwork net = init_network(cfg, 3);
  SUBCASE("zero input with zero biases stays zero through leaky ReLU") {
    const Tensor zeros({1, cfg.capacity_n, 5});
    const auto feats = bpn_forward(net, zeros);
    REQUIRE(static_cast<int>(feats.size()) == cfg.emission_count());
    for (const auto& f : feats) {
      for (double v : f.data) CHECK(v == 0.0);
    }
  }
  SUBCASE("emitted features preserve the Nx5 spatial shape") {
    Rng rng(157);
    const Tensor box = random_tensor(rng, {1, cfg.capacity_n, 5});
    for (const auto& f : bpn_forward(net, box)) {
      CHECK(f.shape == std::vector<int>{cfg.bpn_channels, cfg.capacity_n, 5});
    }
  }
  SUBCASE("wrong input shape names expected vs actual") {
    const Tensor bad({1, 4, 5});
    try {
      bpn_forward(net, bad);
      FAIL("expected a shape error");
    } catch (const std::invalid_argument& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[1x8x5]") != std::string::npos);
      CHECK(msg.find("[1x4x5]") != std::string::npos);
    }
  }
  SUBCASE("single random input matches the naive convolution reference") {
    // one-layer box branch so the composition is a single convolution
    RankerConfig c1 = cfg;
    c1.bpn_depth = 1;
    c1.interleave = 1;
    const RankerNetwork n1 = init_network(c1, 11);
    Rng rng(163);
    const Tensor box = random_tensor(rng, {1, c1.capacity_n, 5});
    const auto feats = bpn_forward(n1, box);
    REQUIRE(feats.size() == 1);

    kern::ConvShape s;
    s.in_c = 1;
    s.in_h = c1.capacity_n;
    s.in_w = 5;
    s.out_c = c1.bpn_channels;
    s.kh = 3;
    s.kw = 5;
    s.pad_h = 1;
    s.pad_w = 2;
    s.stride = 1;
    std::vector<double> conv_out(feats[0].numel());
    refimpl::naive_conv2d(box.ptr(), n1.bpn[0].w.ptr(), n1.bpn[0].b.ptr(),
                          conv_out.data(), s);
    for (std::size_t i = 0; i < conv_out.size(); ++i) {
      const double expect = conv_out[i] > 0 ? conv_out[i] : 0.01 * conv_out[i];
      CHECK(feats[0].data[i] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("identity at initialization") {
  const RankerConfig cfg = tiny_config();
  const RankerNetwork net = init_network(cfg, 5);
  Rng rng(167);
  for (int t = 0; t < 20; ++t) {
    const TinyInput in = random_input(rng, cfg);
    const ForwardResult fr = forward(net, in.image, in.boxmat, in.raw_conf);
    for (int r = 0; r < cfg.capacity_n; ++r) {
      CHECK(fr.refined[static_cast<std::size_t>(r)] == in.raw_conf[static_cast<std::size_t>(r)]);
    }
  }
}

TEST_CASE("clamp behavior in fuse_and_score") {
  RankerConfig cfg = tiny_config();
  RankerNetwork net = init_network(cfg, 5);
  // force a positive residual via the fc bias
  for (auto& fc : net.fc) {
    for (auto& v : fc.b.data) v = 2.0;
  }
  Rng rng(173);
  const TinyInput in = random_input(rng, cfg);
  const ForwardResult fr = forward(net, in.image, in.boxmat, in.raw_conf);
  for (double v : fr.refined) CHECK(v == 1.0);  // residual +2 clamps to 1
}

TEST_CASE("backward rejects a stale trace") {
  const RankerConfig cfg = tiny_config();
  RankerNetwork net = init_network(cfg, 5);
  Rng rng(179);
  const TinyInput in = random_input(rng, cfg);
  const ForwardResult fr = forward(net, in.image, in.boxmat, in.raw_conf);
  ++net.version;  // simulate a parameter update
  std::vector<double> d(fr.refined.size(), 1.0);
  CHECK_THROWS_AS(backward(net, fr.trace, d), std::logic_error);
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
  const RankerConfig cfg = tiny_config();
  RankerNetwork net = init_network(cfg, 5);
  Rng rng(181);
  const TinyInput in = random_input(rng, cfg);
  const ForwardResult fr = forward(net, in.image, in.boxmat, in.raw_conf);
  const std::vector<double> zero(fr.refined.size(), 0.0);
  Gradients g = backward(net, fr.trace, zero);
  for (const auto& p : parameters(g, cfg)) {
    for (double v : p.tensor->data) CHECK(v == 0.0);
  }
}

TEST_CASE("raw confidence gradient passes with coefficient 1 inside the clamp") {
  RankerConfig cfg = tiny_config();
  RankerNetwork net = init_network(cfg, 5);
  // nonzero fc so the net is not at identity, but keep residuals small
  Rng wrng(191);
  for (auto& fc : net.fc) {
    for (auto& v : fc.w.data) v = wrng.uniform(-0.01, 0.01);
  }
  Rng rng(193);
  TinyInput in = random_input(rng, cfg);
  for (auto& v : in.raw_conf) v = 0.2 + 0.6 * v;  // keep pre-clamp interior
  for (int r = 0; r < cfg.capacity_n; ++r) in.boxmat.at(0, r, 4) = in.raw_conf[r];
  const ForwardResult fr = forward(net, in.image, in.boxmat, in.raw_conf);
  std::vector<double> d(fr.refined.size());
  Rng drng(197);
  for (auto& v : d) v = drng.uniform(-1, 1);
  const Gradients g = backward(net, fr.trace, d);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (fr.trace.pre_clamp[i] > 0.0 && fr.trace.pre_clamp[i] < 1.0) {
      CHECK(g.d_raw_conf[i] == d[i]);
    } else {
      CHECK(g.d_raw_conf[i] == 0.0);
    }
  }
}

TEST_CASE("full-pipeline gradients match finite differences") {
  const RankerConfig cfg = tiny_config();
  RankerNetwork net = init_network(cfg, 21);
  // move fc off zero so every path carries gradient
  Rng wrng(199);
  for (auto& fc : net.fc) {
    for (auto& v : fc.w.data) v = wrng.uniform(-0.05, 0.05);
    for (auto& v : fc.b.data) v = wrng.uniform(-0.05, 0.05);
  }
  Rng rng(211);
  const TinyInput in = random_input(rng, cfg);
  const int pair_n = 3;

  const ForwardResult fr = forward(net, in.image, in.boxmat, in.raw_conf);
  const VectorLoss vl = ranked_pair_loss(fr.refined, in.oracle, pair_n);
  const Gradients g = backward(net, fr.trace, vl.grad);

  auto params = parameters(net);
  Gradients g_copy = g;
  auto grads = parameters(g_copy, cfg);
  const double h = 1e-5;
  int checked = 0;
  Rng pick(223);
  for (int probe = 0; probe < 220; ++probe) {
    const std::size_t pi = pick.uniform_int(params.size());
    if (params[pi].tensor->numel() == 0) continue;
    const std::size_t ei = pick.uniform_int(params[pi].tensor->numel());
    double& slot = params[pi].tensor->data[ei];
    const double orig = slot;
    slot = orig + h;
    const double up = pipeline_loss(net, in, pair_n);
    slot = orig - h;
    const double down = pipeline_loss(net, in, pair_n);
    slot = orig;
    const double numeric = (up - down) / (2 * h);
    const double analytic = grads[pi].tensor->data[ei];
    const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
    CHECK(std::abs(numeric - analytic) <= 1e-4 * scale);
    ++checked;
  }
  CHECK(checked > 200);
}

TEST_CASE("deterministic initialization and forward") {
  const RankerConfig cfg = tiny_config();
  const RankerNetwork a = init_network(cfg, 33);
  const RankerNetwork b = init_network(cfg, 33);
  const auto pa = parameters(a);
  const auto pb = parameters(b);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(std::memcmp(pa[i].tensor->data.data(), pb[i].tensor->data.data(),
                      pa[i].tensor->numel() * sizeof(double)) == 0);
  }
  const RankerNetwork c = init_network(cfg, 34);
  bool any_diff = false;
  const auto pc = parameters(c);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (std::memcmp(pa[i].tensor->data.data(), pc[i].tensor->data.data(),
                    pa[i].tensor->numel() * sizeof(double)) != 0) {
      any_diff = true;
    }
  }
  CHECK(any_diff);
}

TEST_CASE("checkpoint round trip is bitwise exact") {
  const RankerConfig cfg = tiny_config();
  RankerNetwork net = init_network(cfg, 55);
  Rng rng(227);
  for (auto& p : parameters(net)) {
    for (auto& v : p.tensor->data) v = rng.uniform(-3, 3);
  }
  const std::string path = "tiny_ckpt.bin";
  save_checkpoint(net, path);
  const RankerNetwork loaded = load_checkpoint(path);
  CHECK(loaded.rng_seed == net.rng_seed);
  CHECK(loaded.config.capacity_n == cfg.capacity_n);
  const auto pa = parameters(net);
  const auto pb = parameters(loaded);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    REQUIRE(pa[i].tensor->shape == pb[i].tensor->shape);
    CHECK(std::memcmp(pa[i].tensor->data.data(), pb[i].tensor->data.data(),
                      pa[i].tensor->numel() * sizeof(double)) == 0);
  }
  std::remove(path.c_str());
}

TEST_CASE("build_box_matrix") {
  DetectionSet ds;
  ds.image_id = "m";
  ds.image_width = ds.image_height = 100;
  auto add = [&ds](double conf) {
    Detection d(BoundingBox(10, 10, 20, 20), conf);
    d.oracle = conf / 2;
    ds.detections.push_back(d);
  };
  add(0.5);
  add(0.9);
  add(0.7);
  const BoxMatrix bm = build_box_matrix(ds, 4);
  CHECK(bm.count == 3);
  CHECK(bm.raw_conf == std::vector<double>{0.9, 0.7, 0.5, 0.0});
  CHECK(bm.oracle == std::vector<double>{0.45, 0.35, 0.25, 0.0});
  CHECK(bm.row_to_detection == std::vector<std::size_t>{1, 2, 0});
  CHECK(bm.matrix.at(0, 0, 0) == doctest::Approx(0.1));  // normalized x
  CHECK(bm.matrix.at(0, 3, 4) == 0.0);                   // padding row
  SUBCASE("truncation keeps the top confidences") {
    const BoxMatrix small = build_box_matrix(ds, 2);
    CHECK(small.count == 2);
    CHECK(small.raw_conf == std::vector<double>{0.9, 0.7});
  }
}

TEST_CASE("augment_boxes") {
  DetectionSet ds;
  ds.image_id = "a";
  ds.image_width = 100;
  ds.image_height = 80;
  ds.detections.emplace_back(BoundingBox(10, 10, 20, 20), 0.9);
  ds.detections.emplace_back(BoundingBox(70, 60, 20, 15), 0.5);
  GroundTruthImage gt;
  gt.image_id = "a";
  gt.image_width = 100;
  gt.image_height = 80;
  gt.boxes = {BoundingBox(10, 10, 20, 20), BoundingBox(70, 60, 20, 15)};
  gt.difficulty = {Difficulty::kEasy, Difficulty::kHard};

  SUBCASE("identity transform changes nothing") {
    const auto [tds, tgt] = augment_boxes(ds, gt, BoxTransform::identity_for(100, 80));
    REQUIRE(tds.detections.size() == 2);
    CHECK(tds.detections[0].box == ds.detections[0].box);
    CHECK(tgt.boxes[1] == gt.boxes[1]);
  }
  SUBCASE("mirror twice recovers the original exactly") {
    BoxTransform m = BoxTransform::identity_for(100, 80);
    m.mirror = true;
    const auto [once_ds, once_gt] = augment_boxes(ds, gt, m);
    const auto [twice_ds, twice_gt] = augment_boxes(once_ds, once_gt, m);
    for (std::size_t i = 0; i < ds.detections.size(); ++i) {
      CHECK(twice_ds.detections[i].box == ds.detections[i].box);
    }
    for (std::size_t i = 0; i < gt.boxes.size(); ++i) {
      CHECK(twice_gt.boxes[i] == gt.boxes[i]);
    }
  }
  SUBCASE("scale then normalize commutes with normalize directly") {
    BoxTransform s = BoxTransform::identity_for(100, 80);
    s.scale = 0.5;
    const auto [sds, sgt] = augment_boxes(ds, gt, s);
    const DetectionSet na = normalize_detections(sds);
    const DetectionSet nb = normalize_detections(ds);
    for (std::size_t i = 0; i < na.detections.size(); ++i) {
      CHECK(na.detections[i].box.x == doctest::Approx(nb.detections[i].box.x).epsilon(1e-12));
      CHECK(na.detections[i].box.w == doctest::Approx(nb.detections[i].box.w).epsilon(1e-12));
    }
  }
  SUBCASE("boxes fully outside the crop are dropped") {
    BoxTransform c;
    c.crop = BoundingBox(0, 0, 50, 50);
    const auto [tds, tgt] = augment_boxes(ds, gt, c);
    CHECK(tds.detections.size() == 1);
    CHECK(tgt.boxes.size() == 1);
    CHECK(tgt.difficulty.size() == 1);
    CHECK(tgt.difficulty[0] == Difficulty::kEasy);
  }
  SUBCASE("empty crop is rejected") {
    BoxTransform c;
    c.crop = BoundingBox(10, 10, 0, 5);
    CHECK_THROWS_AS(augment_boxes(ds, gt, c), std::invalid_argument);
  }
  SUBCASE("transforms preserve IoU, so oracle values survive for kept boxes") {
    BoxTransform t;
    t.crop = BoundingBox(5, 5, 90, 70);
    t.scale = 1.7;
    t.mirror = true;
    const auto [tds, tgt] = augment_boxes(ds, gt, t);
    REQUIRE(tds.detections.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(iou(tds.detections[i].box, tgt.boxes[i]) ==
            doctest::Approx(iou(ds.detections[i].box, gt.boxes[i])).epsilon(1e-9));
    }
  }
}

TEST_CASE("learning rate schedule") {
  TrainSchedule s;
  s.lr_start = 1e-3;
  s.lr_end = 1e-6;
  s.iterations = 100000;
  CHECK(learning_rate_at(s, 0) == doctest::Approx(1e-3));
  CHECK(learning_rate_at(s, 50000) == doctest::Approx(3.1622776601683795e-05).epsilon(1e-12));
}

TEST_CASE("train basics") {
  const RankerConfig cfg = tiny_config();
  SUBCASE("zero iterations leaves parameters unchanged") {
    RankerNetwork net = init_network(cfg, 77);
    const RankerNetwork before = net;
    TrainExample ex;
    ex.features = Tensor({1, cfg.image_size, cfg.image_size});
    DetectionSet ds;
    ds.image_id = "t";
    ds.image_width = ds.image_height = 64;
    Detection d(BoundingBox(5, 5, 10, 10), 0.5);
    d.oracle = 0.8;
    ds.detections.push_back(d);
    ex.variants.push_back(ds);
    TrainSchedule s;
    s.iterations = 0;
    s.batch_size = 2;
    train(net, {ex}, s);
    const auto pa = parameters(before);
    const auto pb = parameters(net);
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(std::memcmp(pa[i].tensor->data.data(), pb[i].tensor->data.data(),
                        pa[i].tensor->numel() * sizeof(double)) == 0);
    }
  }
  SUBCASE("empty dataset is rejected") {
    RankerNetwork net = init_network(cfg, 77);
    TrainSchedule s;
    CHECK_THROWS_AS(train(net, {}, s), std::invalid_argument);
  }
  SUBCASE("missing oracle is rejected") {
    RankerNetwork net = init_network(cfg, 77);
    TrainExample ex;
    ex.features = Tensor({1, cfg.image_size, cfg.image_size});
    DetectionSet ds;
    ds.detections.emplace_back(BoundingBox(0, 0, 1, 1), 0.5);
    ds.image_width = ds.image_height = 64;
    ex.variants.push_back(ds);
    TrainSchedule s;
    s.iterations = 1;
    CHECK_THROWS_AS(train(net, {ex}, s), std::invalid_argument);
  }
}

TEST_CASE("training is bitwise deterministic for a fixed seed") {
  const RankerConfig cfg = tiny_config();
  // small synthetic batch of examples
  auto make_examples = []() {
    Rng rng(229);
    std::vector<TrainExample> out;
    for (int i = 0; i < 4; ++i) {
      TrainExample ex;
      GroundTruthImage gt;
      gt.image_id = "d" + std::to_string(i);
      gt.image_width = gt.image_height = 64;
      gt.boxes = {BoundingBox(rng.uniform(0, 40), rng.uniform(0, 40), 16, 16)};
      gt.difficulty = {Difficulty::kEasy};
      ex.gt = gt;
      Tensor feat({1, 16, 16});
      for (auto& v : feat.data) v = rng.uniform();
      ex.features = feat;
      DetectionSet ds;
      ds.image_id = gt.image_id;
      ds.image_width = ds.image_height = 64;
      for (int k = 0; k < 6; ++k) {
        Detection d(BoundingBox(rng.uniform(0, 40), rng.uniform(0, 40), 14, 14),
                    rng.uniform());
        d.oracle = rng.uniform();
        ds.detections.push_back(d);
      }
      ex.variants.push_back(ds);
      out.push_back(ex);
    }
    return out;
  };

  auto run = [&make_examples, &cfg]() {
    RankerNetwork net = init_network(cfg, 99);
    TrainSchedule s;
    s.iterations = 5;
    s.batch_size = 3;
    s.seed = 7;
    s.pair_n = 2;
    train(net, make_examples(), s);
    return net;
  };
  const RankerNetwork a = run();
  const RankerNetwork b = run();
  const auto pa = parameters(a);
  const auto pb = parameters(b);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(std::memcmp(pa[i].tensor->data.data(), pb[i].tensor->data.data(),
                      pa[i].tensor->numel() * sizeof(double)) == 0);
  }
}
