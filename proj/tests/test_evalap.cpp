#include "doctest.h"

#include <filesystem>
#include <random>

#include "effdet/errors.hpp"
#include "effdet/evalap.hpp"

using namespace effdet;

namespace {

const ClassMap kOne({"thing"});
const ClassMap kThree({"a", "b", "c"});

Box random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(0, 80), size(4, 40);
  const double x = pos(rng), y = pos(rng);
  return {x, y, x + size(rng), y + size(rng)};
}

// Small instance with detections jittered from truth so that IoUs land
// around every threshold.
std::pair<DetectionsByImage, TruthByImage> random_instance(std::mt19937_64& rng, int classes, int max_boxes) {
  std::uniform_int_distribution<int> n_img(1, 3), n_box(0, max_boxes), cls(0, classes - 1);
  std::uniform_real_distribution<double> jitter(-6, 6), score(0, 1), coin(0, 1);
  DetectionsByImage dets;
  TruthByImage truth;
  const int images = n_img(rng);
  std::vector<int> per_class(static_cast<std::size_t>(classes));
  for (int i = 0; i < images; ++i) {
    const auto key = "img" + std::to_string(i);
    auto& gts = truth[key];
    auto& ds = dets[key];
    const int n = n_box(rng);
    for (int k = 0; k < n; ++k) {
      const int c = cls(rng);
      const auto b = random_box(rng);
      gts.push_back({b, c});
      const int copies = coin(rng) < 0.3 ? 2 : 1;
      for (int j = 0; j < copies; ++j) {
        if (per_class[static_cast<std::size_t>(c)] >= max_boxes) break;
        Box d{b.x_min + jitter(rng), b.y_min + jitter(rng), b.x_max + jitter(rng), b.y_max + jitter(rng)};
        if (!d.valid()) d = b;
        // Coarse scores make ties common.
        ds.push_back({d, c, std::round(score(rng) * 8) / 8});
        ++per_class[static_cast<std::size_t>(c)];
      }
    }
    if (coin(rng) < 0.5 && per_class[0] < max_boxes) {
      ds.push_back({random_box(rng), 0, score(rng)});
      ++per_class[0];
    }
  }
  return {dets, truth};
}

}  // namespace

TEST_CASE("iou examples") {
  const Box a{0, 0, 10, 10};
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, {20, 20, 30, 30}) == 0.0);
  CHECK(iou(a, {5, 5, 15, 15}) == doctest::Approx(25.0 / 175.0));
  CHECK_THROWS_AS(iou(a, {5, 5, 5, 9}), DomainError);
}

TEST_CASE("evaluate examples") {
  TruthByImage truth{{"x", {{{0, 0, 10, 10}, 0}}}};
  // IoU 0.6: [0,0,10,10] vs [0,0,10,6]
  DetectionsByImage dets{{"x", {{{0, 0, 10, 6}, 0, 0.9}}}};
  auto r = evaluate(dets, truth, kOne);
  CHECK(r.ap50 == 100.0);
  CHECK(r.ap75 == 0.0);
  CHECK(r.ap == doctest::Approx(30.0));

  dets = {{"x", {{{0, 0, 10, 10}, 0, 0.5}}}};
  r = evaluate(dets, truth, kOne);
  CHECK(r.ap == 100.0);
  CHECK(r.ap50 == 100.0);
  CHECK(r.ap75 == 100.0);

  r = evaluate({}, truth, kOne);
  CHECK(r.ap == 0.0);
  CHECK(r.ap50 == 0.0);
  CHECK(r.ap75 == 0.0);
  CHECK_FALSE(r.no_ground_truth);

  r = evaluate(dets, {}, kOne);
  CHECK(r.no_ground_truth);
  CHECK(r.ap == 0.0);
}

TEST_CASE("oracle examples and refusal") {
  TruthByImage truth{{"x", {{{0, 0, 10, 10}, 0}}}};
  DetectionsByImage dets{{"x", {{{0, 0, 10, 8}, 0, 0.9}}}};
  CHECK(evaluate_bruteforce(dets, truth, kOne).ap75 == 100.0);

  dets = {{"x", {{{0, 0, 10, 10}, 0, 0.9}, {{0, 0, 10, 9}, 0, 0.8}}}};
  const auto r = evaluate_bruteforce(dets, truth, kOne);
  CHECK(r.ap50 == 100.0);
  CHECK(r.ap75 == 100.0);
  CHECK(r == evaluate(dets, truth, kOne));
  // Duplicate ranked first: precision at recall 1 is 1/2.
  dets = {{"x", {{{0, 0, 10, 10}, 0, 0.7}, {{0, 0, 10, 9}, 0, 0.8}}}};
  CHECK(evaluate_bruteforce(dets, truth, kOne).ap50 == doctest::Approx(100.0));
  CHECK(evaluate_bruteforce(dets, truth, kOne) == evaluate(dets, truth, kOne));

  DetectionsByImage many;
  for (int i = 0; i < kBruteforceMaxDetections + 1; ++i) many["x"].push_back({{0, 0, 10, 10}, 0, 0.1 * i});
  CHECK_THROWS_AS(evaluate_bruteforce(many, truth, kOne), DomainError);
}

TEST_CASE("oracle equivalence on random instances") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 150; ++trial) {
    const auto [dets, truth] = random_instance(rng, 3, 8);
    CHECK(evaluate(dets, truth, kThree) == evaluate_bruteforce(dets, truth, kThree));
  }
}

TEST_CASE("score scaling, permutation and IoU-0 additions") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    auto [dets, truth] = random_instance(rng, 3, 8);
    const auto base = evaluate(dets, truth, kThree);

    auto scaled = dets;
    for (auto& [k, v] : scaled)
      for (auto& d : v) d.score *= 0.37;
    CHECK(evaluate(scaled, truth, kThree) == base);

    // Renaming keys reorders the images in the map. Tied scores are broken by
    // image key, so make them distinct first.
    double bump = 0;
    for (auto& [k, v] : dets)
      for (auto& d : v) d.score += (bump += 1e-6);
    const auto distinct = evaluate(dets, truth, kThree);
    DetectionsByImage pd;
    TruthByImage pt;
    for (auto& [k, v] : dets) pd["z" + std::string(1, static_cast<char>('9' - k.back() + '0'))] = v;
    for (auto& [k, v] : truth) pt["z" + std::string(1, static_cast<char>('9' - k.back() + '0'))] = v;
    const auto perm = evaluate(pd, pt, kThree);
    CHECK(perm == distinct);

    auto extra = dets;
    extra["img0"].push_back({{500, 500, 510, 510}, 0, 0.99});
    const auto worse = evaluate(extra, truth, kThree);
    CHECK(worse.ap <= distinct.ap);
    CHECK(worse.ap50 <= distinct.ap50);
    CHECK(worse.ap75 <= distinct.ap75);
  }
}

TEST_CASE("detections jsonl round trip and csv") {
  const auto file = std::filesystem::temp_directory_path() / "effdet_test_dets.jsonl";
  DetectionsByImage dets{{"a.png", {{{1, 2, 3, 4}, 2, 0.5}}}, {"b.png", {{{5, 6, 7, 8.5}, 0, 0.25}}}};
  write_detections_jsonl(file, dets, kThree);
  CHECK(read_detections_jsonl(file, kThree) == dets);
  std::filesystem::remove(file);

  EvalResult r;
  r.ap = 47.44;
  r.ap50 = 70.0;
  r.ap75 = 51.26;
  CHECK(eval_result_csv(r) == "ap,ap50,ap75\n47.4,70.0,51.3\n");
  CHECK(eval_result_json(r, kThree).find("\"ap50\"") != std::string::npos);
}
