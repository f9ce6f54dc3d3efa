#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "effdet/checkpoint.hpp"
#include "effdet/errors.hpp"
#include "effdet/infer.hpp"
#include "effdet/train.hpp"

using namespace effdet;

namespace {

ArchitectureConfig tiny_config() { return with_desk_scale(build_config(ScalingSpec::from_split(0, "1-5")), 128, 16); }

std::vector<TrainingSample> tiny_data(int n) { return prepare_samples(synth_shapes(n, 128, 2, 5), 128); }

}  // namespace

TEST_CASE("nms keeps the higher-scoring overlap") {
  std::vector<Detection> c{{{0, 0, 10, 10}, 0, 0.8}, {{0, 0, 10, 10.5}, 0, 0.9}, {{50, 50, 60, 60}, 0, 0.3}};
  const auto kept = nms(c, 0.5);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0] == 1);
  CHECK(kept[1] == 2);
}

TEST_CASE("tau filtering") {
  const auto det = Detector<float>::build(tiny_config(), 2, 3);
  const auto image = synth_shapes(1, 128, 2, 1)[0].image;
  const auto anchors = generate_anchors(det.config());
  InferenceConfig cfg;
  cfg.confidence_threshold = 1.0;
  CHECK(infer(det, image, cfg, &anchors).empty());

  // A fresh detector scores near 0.01; shift logits to spread them out.
  auto out = det.forward(image, nullptr);
  out.class_logits.array() += 4.6f;
  for (Eigen::Index i = 0; i < out.class_logits.size(); ++i)
    out.class_logits.data()[i] += static_cast<float>((i % 97) / 15.0 - 2.4);
  cfg.max_detections = 100000;
  cfg.max_candidates_per_class = 100000;
  cfg.nms_iou_threshold = 1.0;
  std::vector<std::size_t> sizes;
  std::vector<Detection> previous;
  for (double tau : {0.95, 0.7, 0.4}) {
    cfg.confidence_threshold = tau;
    const auto d = decode_detections(out.class_logits, out.box_offsets, anchors, 128, cfg);
    for (const auto& x : d) CHECK(x.score >= tau);
    for (const auto& p : previous) CHECK(std::find(d.begin(), d.end(), p) != d.end());
    sizes.push_back(d.size());
    previous = d;
  }
  CHECK(sizes[0] > 0);
  CHECK(sizes[0] < sizes[1]);
  CHECK(sizes[1] < sizes[2]);
  for (const auto& d : previous) {
    CHECK(d.box.x_min >= 0);
    CHECK(d.box.x_max <= 128);
  }
  cfg.confidence_threshold = 1.5;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("learning rate schedule") {
  SgdOptions opt;
  CHECK(learning_rate_at(opt, 0, 100) == doctest::Approx(0.004));
  CHECK(learning_rate_at(opt, 4, 100) == doctest::Approx(0.02));
  CHECK(learning_rate_at(opt, 5, 100) == doctest::Approx(0.02));
  CHECK(learning_rate_at(opt, 99, 100) < 1e-4);
  for (int s = 6; s < 100; ++s) CHECK(learning_rate_at(opt, s, 100) <= learning_rate_at(opt, s - 1, 100));
}

TEST_CASE("flip keeps boxes on the same pixels") {
  const auto s = tiny_data(1)[0];
  const auto f = flip_horizontal(s);
  const auto& b = s.boxes[0].box;
  const auto& fb = f.boxes[0].box;
  CHECK(fb.x_min == doctest::Approx(128 - b.x_max));
  const int x = static_cast<int>(b.x_min + b.width() / 2), y = static_cast<int>(b.y_min + b.height() / 2);
  CHECK(f.image.at(127 - x, y, 0) == s.image.at(x, y, 0));
  CHECK(flip_horizontal(f).image == s.image);
}

TEST_CASE("training is deterministic and reduces loss") {
  const auto data = tiny_data(8);
  SgdOptions opt;
  opt.epochs = 1;
  opt.seed = 9;
  auto a = Detector<float>::build(tiny_config(), 2, 4);
  const auto ra = train(a, data, opt);
  CHECK(ra.loss_history.size() == 1);
  CHECK(ra.steps == 2);

  opt.epochs = 6;
  auto b = Detector<float>::build(tiny_config(), 2, 4);
  auto c = Detector<float>::build(tiny_config(), 2, 4);
  int calls = 0;
  const auto rb = train(b, data, opt, [&](int, double) { ++calls; });
  const auto rc = train(c, data, opt);
  CHECK(calls == 6);
  CHECK(rb.loss_history == rc.loss_history);
  for (std::size_t i = 0; i < b.parameters().size(); ++i)
    CHECK(b.parameters()[static_cast<int>(i)] == c.parameters()[static_cast<int>(i)]);
  CHECK(rb.loss_history.back() < rb.loss_history.front());

  CHECK_THROWS_AS(train(b, {}, opt), InputError);
  opt.epochs = 0;
  CHECK_THROWS_AS(train(b, data, opt), DomainError);
  opt.epochs = 1;
  auto wrong = data;
  wrong[0].image = PixelImage(64, 64);
  CHECK_THROWS_AS(train(b, wrong, opt), InputError);
}

TEST_CASE("checkpoint round trip and validation") {
  const auto dir = std::filesystem::temp_directory_path() / "effdet_test_ckpt";
  std::filesystem::create_directories(dir);
  const auto file = dir / "d.ckpt";
  const ClassMap classes({"left", "right"});
  const auto det = Detector<float>::build(tiny_config(), 2, 12);
  save_checkpoint(file, det, classes);
  const auto loaded = load_checkpoint(file);
  CHECK(loaded.classes == classes);
  CHECK(loaded.detector.config() == det.config());
  const auto image = synth_shapes(1, 128, 2, 3)[0].image;
  CHECK(loaded.detector.forward(image, nullptr).class_logits == det.forward(image, nullptr).class_logits);

  CHECK_THROWS_AS(save_checkpoint(file, det, ClassMap({"x"})), ConfigurationError);

  // Truncation, corrupted magic and a tampered config are all refused.
  const auto bytes = std::filesystem::file_size(file);
  std::filesystem::copy_file(file, dir / "t.ckpt", std::filesystem::copy_options::overwrite_existing);
  std::filesystem::resize_file(dir / "t.ckpt", bytes - 10);
  CHECK_THROWS_AS(load_checkpoint(dir / "t.ckpt"), InputError);
  {
    std::fstream f(dir / "t.ckpt", std::ios::in | std::ios::out | std::ios::binary);
    f.write("X", 1);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "t.ckpt"), InputError);

  auto other = tiny_config();
  other.head_depth += 1;
  const auto bigger = Detector<float>::build(other, 2, 1);
  save_checkpoint(dir / "b.ckpt", bigger, classes);
  std::string blob;
  {
    std::ifstream in(dir / "b.ckpt", std::ios::binary);
    blob.assign(std::istreambuf_iterator<char>(in), {});
  }
  const auto key = "head_depth=" + std::to_string(other.head_depth);
  const auto pos = blob.find(key);
  REQUIRE(pos != std::string::npos);
  blob[pos + key.size() - 1] = static_cast<char>('0' + tiny_config().head_depth);
  std::ofstream(dir / "b.ckpt", std::ios::binary) << blob;
  CHECK_THROWS_AS(load_checkpoint(dir / "b.ckpt"), InputError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);
  std::filesystem::remove_all(dir);
}
