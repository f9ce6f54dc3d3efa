#include "doctest.h"

#include <cmath>
#include <random>

#include "effdet/anchors.hpp"
#include "effdet/detector.hpp"
#include "effdet/focal_loss.hpp"
#include "effdet/fusion.hpp"

using namespace effdet;

namespace {

FeatureMap<double> random_map(int channels, int side, std::mt19937_64& rng) {
  std::normal_distribution<double> dist;
  FeatureMap<double> m(channels, side, side);
  for (Eigen::Index i = 0; i < m.data.size(); ++i) m.data.data()[i] = dist(rng);
  return m;
}

ArchitectureConfig table_config(int phi, int bifpn0, int head0) {
  return build_config(ScalingSpec::make(phi, bifpn0, head0));
}

}  // namespace

TEST_CASE("fusion: equal weights on equal maps reproduce the map") {
  std::mt19937_64 rng(1);
  const auto m = random_map(4, 8, rng);
  const FeatureMap<double>* inputs[] = {&m, &m};
  RowVector<double> raw(2);
  raw << 1, 1;
  const auto out = weighted_sum<double>(inputs, raw);
  CHECK((out.data - m.data).cwiseAbs().maxCoeff() <= 1e-4 * m.data.cwiseAbs().maxCoeff());
  const auto w = normalize_fusion_weights(raw);
  CHECK(w(0) == doctest::Approx(0.5).epsilon(1e-4));
}

TEST_CASE("fusion: negative raw weight is clamped to zero") {
  RowVector<double> raw(2);
  raw << 2.5, -5;
  const auto w = normalize_fusion_weights(raw);
  CHECK(w(1) == 0.0);
  CHECK(w(0) == doctest::Approx(2.5 / (2.5 + 1e-4)));
}

TEST_CASE("fusion: weights (3,1) give 0.75 A + 0.25 B") {
  std::mt19937_64 rng(2);
  const auto a = random_map(3, 4, rng);
  const auto b = random_map(3, 4, rng);
  const FeatureMap<double>* inputs[] = {&a, &b};
  RowVector<double> raw(2);
  raw << 3, 1;
  const auto out = weighted_sum<double>(inputs, raw);
  // Hand-evaluated: 3 / 4.0001 and 1 / 4.0001.
  const Matrix<double> exact = (3.0 / 4.0001) * a.data + (1.0 / 4.0001) * b.data;
  CHECK((out.data - exact).cwiseAbs().maxCoeff() < 1e-12);
  const Matrix<double> nominal = 0.75 * a.data + 0.25 * b.data;
  CHECK((out.data - nominal).cwiseAbs().maxCoeff() < 1e-4 * (a.data.cwiseAbs().maxCoeff() + 1));
}

TEST_CASE("fusion: empty or mismatched inputs are domain errors") {
  RowVector<double> raw(0);
  CHECK_THROWS_AS(normalize_fusion_weights(raw), DomainError);
  std::span<const FeatureMap<double>* const> none;
  CHECK_THROWS_AS(weighted_sum<double>(none, raw), DomainError);
  std::mt19937_64 rng(3);
  const auto a = random_map(3, 4, rng);
  const auto b = random_map(3, 2, rng);
  const FeatureMap<double>* inputs[] = {&a, &b};
  RowVector<double> two(2);
  two << 1, 1;
  CHECK_THROWS_AS(weighted_sum<double>(inputs, two), DomainError);
}

TEST_CASE("anchors: counts per resolution") {
  auto count_for = [](int r) {
    long long n = 0;
    for (int side = r / 8; side >= r / 128; side /= 2) n += 9LL * side * side;
    return n;
  };
  CHECK(generate_anchors(table_config(0, 3, 3)).size() == 49104u);
  CHECK(generate_anchors(table_config(1, 3, 3)).size() == 76725u);
  for (int r : {128, 256, 384, 512, 640, 896}) {
    CHECK(anchor_count(r) == count_for(r));
    CHECK(anchor_count(r) % 9 == 0);
  }
}

TEST_CASE("anchors: geometry of the first cell") {
  const auto anchors = generate_anchors(with_desk_scale(table_config(0, 3, 3), 128, 32));
  // Level 3, cell (0,0): centre (4,4); scale 1 ratio 1 is anchor index 1, size 32.
  CHECK(anchors[1].center_x() == doctest::Approx(4.0));
  CHECK(anchors[1].width() == doctest::Approx(32.0));
  CHECK(anchors[1].height() == doctest::Approx(32.0));
  CHECK(anchors[0].height() / anchors[0].width() == doctest::Approx(0.5));
  CHECK(anchors[8].width() * anchors[8].height() == doctest::Approx(std::pow(32.0 * std::pow(2.0, 2.0 / 3.0), 2)));
}

TEST_CASE("box encoding round-trips") {
  const Box anchor{10, 20, 42, 60};
  const Box target{5, 25, 50, 70};
  const auto decoded = decode_box(anchor, encode_box(anchor, target));
  CHECK(decoded.x_min == doctest::Approx(target.x_min));
  CHECK(decoded.y_max == doctest::Approx(target.y_max));
}

TEST_CASE("target assignment thresholds") {
  const std::vector<Box> anchors = {{0, 0, 10, 10}, {0, 0, 10, 14}, {5, 5, 15, 15}, {40, 40, 50, 50}};
  const std::vector<GroundTruthBox> truth = {{{0, 0, 10, 10}, 1}};
  const auto t = assign_targets(anchors, truth);
  CHECK(t.labels[0] == 1);             // IoU 1
  CHECK(t.labels[1] == 1);             // IoU 100/140 = 0.714
  CHECK(t.labels[2] == kBackgroundLabel);  // IoU 25/175
  CHECK(t.labels[3] == kBackgroundLabel);
  CHECK(t.num_positive == 2);
  const std::vector<Box> mid = {{0, 0, 10, 22}};  // IoU 100/220 = 0.4545 -> ignored
  CHECK(assign_targets(mid, truth).labels[0] == kIgnoreLabel);
}

TEST_CASE("focal term examples") {
  // Perfect prediction on a positive anchor.
  CHECK(focal_term(40.0, true, 0.25, 2.0).first < 1e-30);
  // Hand-evaluated: -0.25 * 0.1^2 * ln(0.9).
  const double logit = std::log(0.9 / 0.1);
  CHECK(focal_term(logit, true, 0.25, 2.0).first == doctest::Approx(2.634013e-4).epsilon(1e-6));
  // gamma = 0, alpha = 0.5 is half the binary cross-entropy.
  for (double x : {-3.0, -0.2, 0.0, 1.7}) {
    const double p = 1.0 / (1.0 + std::exp(-x));
    CHECK(focal_term(x, true, 0.5, 0.0).first == doctest::Approx(-0.5 * std::log(p)));
    CHECK(focal_term(x, false, 0.5, 0.0).first == doctest::Approx(-0.5 * std::log(1 - p)));
  }
}

TEST_CASE("focal loss with no positives normalizes by one") {
  Matrix<double> logits = Matrix<double>::Constant(2, 1, -1.0);
  Matrix<double> boxes = Matrix<double>::Zero(2, 4);
  AnchorTargets t;
  t.labels = {kBackgroundLabel, kBackgroundLabel};
  t.box_targets.setZero(2, 4);
  const auto r = focal_loss(logits, boxes, t);
  CHECK(r.total == doctest::Approx(2 * focal_term(-1.0, false, 0.25, 2.0).first));
  CHECK(r.box == 0.0);
}

TEST_CASE("focal loss gradients match finite differences") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> dist(0.0, 1.5);
  const int anchors = 24;
  const int classes = 3;
  Matrix<double> logits(anchors, classes);
  Matrix<double> boxes(anchors, 4);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = dist(rng);
  for (Eigen::Index i = 0; i < boxes.size(); ++i) boxes.data()[i] = 0.3 * dist(rng);
  AnchorTargets t;
  t.box_targets.resize(anchors, 4);
  for (int a = 0; a < anchors; ++a) {
    t.labels.push_back(a % 4 == 0 ? a % classes : (a % 7 == 0 ? kIgnoreLabel : kBackgroundLabel));
    if (t.labels.back() >= 0) ++t.num_positive;
    for (int k = 0; k < 4; ++k) t.box_targets(a, k) = 0.3 * dist(rng);
  }
  const auto r = focal_loss(logits, boxes, t);
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    Matrix<double> plus = logits, minus = logits;
    plus.data()[i] += h;
    minus.data()[i] -= h;
    const double fd = (focal_loss(plus, boxes, t).total - focal_loss(minus, boxes, t).total) / (2 * h);
    CHECK(r.grad_class_logits.data()[i] == doctest::Approx(fd).epsilon(1e-5).scale(1e-3));
  }
  for (Eigen::Index i = 0; i < boxes.size(); ++i) {
    Matrix<double> plus = boxes, minus = boxes;
    plus.data()[i] += h;
    minus.data()[i] -= h;
    const double fd = (focal_loss(logits, plus, t).total - focal_loss(logits, minus, t).total) / (2 * h);
    CHECK(r.grad_box_offsets.data()[i] == doctest::Approx(fd).epsilon(1e-5).scale(1e-3));
  }
}

TEST_CASE("build_detector realizes the depth split") {
  const auto d015 = build_detector(table_config(0, 1, 5), 20);
  CHECK(d015.bifpn_layers() == 1);
  CHECK(d015.head_convs() == 5);
  const auto d033 = build_detector(table_config(0, 3, 3), 20);
  CHECK(d033.bifpn_layers() == 3);
  CHECK(d033.head_convs() == 3);
  const auto d351 = build_detector(table_config(3, 5, 1), 3);
  CHECK(d351.bifpn_layers() == 8);
  CHECK(d351.head_convs() == 2);

  auto bad = table_config(0, 3, 3);
  bad.input_resolution = 500;
  CHECK_THROWS_AS(build_detector(bad, 3), ConfigurationError);
  CHECK_THROWS_AS(build_detector(table_config(0, 3, 3), 0), ConfigurationError);
}

TEST_CASE("count_params") {
  ParameterSet<float> params;
  Conv2d<float>::create(params, "c", 64, 64, 3, 1, ParamGroup::heads);
  CHECK(params.scalar_count() == 36928);

  const auto d0 = count_params(build_detector(table_config(0, 1, 5), 20));
  const auto d1 = count_params(build_detector(table_config(1, 1, 5), 20));
  CHECK(d1.total() > d0.total());
  CHECK(d0.total() == d0.backbone + d0.fusion + d0.heads);

  const auto d033 = count_params(build_detector(table_config(0, 3, 3), 20));
  const double ratio = static_cast<double>(d0.fusion_and_heads()) / static_cast<double>(d033.fusion_and_heads());
  MESSAGE("D0(1-5)/D0(3-3) fusion+head parameter ratio: " << ratio);
  CHECK(ratio >= 0.5);
  CHECK(ratio <= 2.0);
}

TEST_CASE("output shape contract for every table configuration") {
  // Channel width reduced to 8 to keep the test fast; shapes depend only on
  // resolution, class count and anchors per cell.
  for (const auto& split : {std::pair{1, 5}, std::pair{5, 1}, std::pair{3, 3}}) {
    for (int phi = 0; phi <= 3; ++phi) {
      const auto full = table_config(phi, split.first, split.second);
      const auto config = with_desk_scale(full, full.input_resolution, 8);
      const int classes = 3;
      const auto d = build_detector(config, classes);
      const auto out = d.forward(PixelImage(config.input_resolution, config.input_resolution, 90), nullptr);
      for (int l = 0; l < kNumLevels; ++l) {
        const int side = config.input_resolution >> (l + kMinLevel);
        CHECK(out.class_maps[l].height == side);
        CHECK(out.class_maps[l].width == side);
        CHECK(out.class_maps[l].channels() == 9 * classes);
        CHECK(out.box_maps[l].channels() == 9 * 4);
      }
      CHECK(out.class_logits.rows() == anchor_count(config.input_resolution));
    }
  }
}

TEST_CASE("detector rejects malformed images") {
  const auto d = build_detector(with_desk_scale(table_config(0, 1, 5), 128, 16), 2);
  CHECK_THROWS_AS(d.forward(PixelImage(64, 64), nullptr), InputError);
  PixelImage bad(128, 128);
  bad.values.resize(128 * 128);  // single channel buffer
  CHECK_THROWS_AS(d.forward(bad, nullptr), InputError);
}

TEST_CASE("detector backward matches finite differences") {
  const auto config = with_desk_scale(ArchitectureConfig{128, 0, 8, 2, 2}, 128, 8);
  auto d = Detector<double>::build(config, 2, 5);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  FeatureMap<double> input(3, 128, 128);
  for (Eigen::Index i = 0; i < input.data.size(); ++i) input.data.data()[i] = u(rng);
  // Perturb fusion weights away from their all-ones init.
  for (std::size_t i = 0; i < d.parameters().size(); ++i)
    if (d.parameters().name(static_cast<int>(i)).find("fusion_weights") != std::string::npos)
      for (Eigen::Index k = 0; k < d.parameters()[static_cast<int>(i)].size(); ++k)
        d.parameters()[static_cast<int>(i)].data()[k] = 0.5 + 0.5 * (u(rng) + 1);

  typename Detector<double>::Tape tape;
  const auto out = d.forward(input, &tape);
  Matrix<double> proj_cls(out.class_logits.rows(), out.class_logits.cols());
  Matrix<double> proj_box(out.box_offsets.rows(), 4);
  for (Eigen::Index i = 0; i < proj_cls.size(); ++i) proj_cls.data()[i] = u(rng);
  for (Eigen::Index i = 0; i < proj_box.size(); ++i) proj_box.data()[i] = u(rng);
  auto objective = [&](const Detector<double>& det) {
    const auto o = det.forward(input, nullptr);
    return o.class_logits.cwiseProduct(proj_cls).sum() + o.box_offsets.cwiseProduct(proj_box).sum();
  };
  auto grads = d.parameters().zeros_like();
  d.backward(tape, proj_cls, proj_box, grads);

  const double h = 1e-6;
  int checked = 0;
  for (std::size_t p = 0; p < d.parameters().size(); ++p) {
    auto& value = d.parameters()[static_cast<int>(p)];
    // A few entries of every tensor.
    for (Eigen::Index k = 0; k < value.size(); k += std::max<Eigen::Index>(1, value.size() / 3)) {
      const double saved = value.data()[k];
      value.data()[k] = saved + h;
      const double up = objective(d);
      value.data()[k] = saved - h;
      const double down = objective(d);
      value.data()[k] = saved;
      const double fd = (up - down) / (2 * h);
      const double analytic = grads[static_cast<int>(p)].data()[k];
      INFO(d.parameters().name(static_cast<int>(p)) << "[" << k << "]");
      CHECK(analytic == doctest::Approx(fd).epsilon(1e-4).scale(1e-2));
      ++checked;
    }
  }
  CHECK(checked > 100);
}
