#include "doctest.h"

#include <random>

#include "effdet/errors.hpp"
#include "effdet/lowlight.hpp"

using namespace effdet;

namespace {

PixelImage solid(std::uint8_t v, int w = 4, int h = 3) { return PixelImage(w, h, v); }

PixelImage random_image(std::mt19937_64& rng, int w, int h) {
  std::uniform_int_distribution<int> d(0, 255);
  PixelImage img(w, h);
  for (auto& v : img.values) v = static_cast<std::uint8_t>(d(rng));
  return img;
}

}  // namespace

TEST_CASE("darken examples") {
  CHECK(darken(solid(200), 120).values[0] == 80);
  CHECK(darken(solid(100), 120).values[0] == 0);
  std::mt19937_64 rng(3);
  const auto img = random_image(rng, 7, 5);
  CHECK(darken(img, 0) == img);
}

TEST_CASE("brighten examples") {
  CHECK(brighten_constant(solid(80), 40).values[0] == 120);
  CHECK(brighten_constant(solid(240), 80).values[0] == 255);
  std::mt19937_64 rng(4);
  const auto img = random_image(rng, 7, 5);
  CHECK(brighten_constant(img, 0) == img);
}

TEST_CASE("offsets outside 0..255 are rejected") {
  CHECK_THROWS_AS(darken(solid(1), -1), DomainError);
  CHECK_THROWS_AS(darken(solid(1), 256), DomainError);
  CHECK_THROWS_AS(brighten_constant(solid(1), 256), DomainError);
  EnhancementSpec spec;
  spec.strategy = EnhanceStrategy::external;
  CHECK_THROWS_AS(spec.validate(), ConfigurationError);
  spec.strategy = EnhanceStrategy::constant_c;
  spec.c = 300;
  CHECK_THROWS(spec.validate());
}

TEST_CASE("clamped roundtrip over every pixel value") {
  for (int v = 0; v < 256; ++v) {
    const auto out = brighten_constant(darken(solid(static_cast<std::uint8_t>(v), 1, 1), 120), 80).values[0];
    if (v >= 120 && v <= 175) CHECK(out == v - 40);
    if (v < 120) CHECK(out == 80);
  }
}

TEST_CASE("order and shape preservation") {
  for (int a = 0; a < 256; a += 5)
    for (int b = a; b < 256; b += 7)
      for (int k : {0, 40, 80, 120, 255}) {
        CHECK(darken(solid(a, 1, 1), k).values[0] <= darken(solid(b, 1, 1), k).values[0]);
        CHECK(brighten_constant(solid(a, 1, 1), k).values[0] <= brighten_constant(solid(b, 1, 1), k).values[0]);
      }
  const auto img = solid(90, 13, 9);
  CHECK(darken(img, 50).width == 13);
  CHECK(brighten_constant(img, 50).height == 9);
}

TEST_CASE("enhance dispatch") {
  const auto img = solid(80);
  EnhancementSpec spec;
  auto r = enhance(img, spec);
  CHECK(r.image == img);
  CHECK(r.latency_seconds == 0.0);
  spec.strategy = EnhanceStrategy::constant_c;
  spec.c = 80;
  r = enhance(img, spec);
  CHECK(r.image.values[0] == 160);
  CHECK_FALSE(r.includes_io);
  CHECK(spec.label() == "c=80");
}

TEST_CASE("external enhancer stub") {
  std::mt19937_64 rng(8);
  const auto img = random_image(rng, 9, 6);
  EnhancementSpec spec;
  spec.strategy = EnhanceStrategy::external;
  spec.external_command = "cp";
  const auto r = enhance(img, spec);
  CHECK(r.image == img);
  CHECK(r.latency_seconds > 0.0);
  CHECK(r.includes_io);

  spec.external_command = "true";
  CHECK_THROWS_AS(enhance(img, spec), EnhancementError);
  spec.external_command = "sh -c 'echo broken >&2; exit 3' --";
  try {
    enhance(img, spec);
    FAIL("expected failure");
  } catch (const EnhancementError& e) {
    CHECK(std::string(e.what()).find("broken") != std::string::npos);
  }
}

TEST_CASE("parse_strategy") {
  CHECK(parse_strategy("none") == EnhanceStrategy::none);
  CHECK(parse_strategy("const") == EnhanceStrategy::constant_c);
  CHECK(parse_strategy("external") == EnhanceStrategy::external);
  CHECK_THROWS(parse_strategy("gamma"));
}
