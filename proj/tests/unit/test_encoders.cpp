#include <doctest.h>

#include <cmath>
#include <numeric>

#include "../support/fixtures.hpp"
#include "mpcattack/encoders.hpp"
#include "mpcattack/objective.hpp"

using namespace mpcattack;

namespace {

// Relative error of vjp(x, u) against central differences of u . f(x).
double vjp_fd_error(const ParadigmEncoder& enc, const Tensor3& x, const std::vector<double>& u) {
  const Tensor3 g = vjp(enc, x, u);
  Tensor3 probe = x;
  const double h = 1e-5;
  double num = 0.0, den = 0.0;
  auto project = [&](const Tensor3& at) {
    const auto f = enc.forward(at);
    return std::inner_product(f.begin(), f.end(), u.begin(), 0.0);
  };
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = probe[i];
    probe[i] = keep + h;
    const double up = project(probe);
    probe[i] = keep - h;
    const double down = project(probe);
    probe[i] = keep;
    const double fd = (up - down) / (2 * h);
    num += (g[i] - fd) * (g[i] - fd);
    den += fd * fd;
  }
  return std::sqrt(num / den);
}

std::vector<double> random_vec(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = uniform(rng, -1.0, 1.0);
  return v;
}

}  // namespace

TEST_CASE("zero linear encoder maps to zero") {
  const ImageSize s{8, 8};
  const ToyLinearEncoder enc(s, std::vector<double>(4 * 8 * 8 * 3, 0.0), std::vector<double>(4, 0.0),
                             Paradigm::kSelfSupervised);
  const auto out = encode(enc, fixtures::random_image(1, 8, 8).pixels()).data;
  for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("identity linear encoder returns the flattened image") {
  const std::size_t n = 8 * 8 * 3;
  std::vector<double> w(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) w[i * n + i] = 1.0;
  const ToyLinearEncoder enc({8, 8}, w, std::vector<double>(n, 0.0), Paradigm::kMultimodal);
  const ImageTensor x = fixtures::random_image(2, 8, 8);
  const auto out = enc.forward(x.pixels());
  for (std::size_t i = 0; i < n; ++i) CHECK(out[i] == x.values()[i]);
}

TEST_CASE("seeded 4x4 linear encoder on a half-grey input equals 0.5 * row sums + bias") {
  // 4x4 is below the 8x8 image minimum, so the raw tensor path is used.
  const ToyLinearEncoder enc(7, {4, 4}, 8, Paradigm::kCrossModalImage);
  const Tensor3 x({4, 4, 3}, 0.5);
  const auto out = enc.forward(x);
  REQUIRE(out.size() == 8);
  for (std::size_t o = 0; o < 8; ++o) {
    double row = 0.0;
    for (std::size_t i = 0; i < 48; ++i) row += enc.weight()[o * 48 + i];
    CHECK(out[o] == doctest::Approx(0.5 * row + enc.bias()[o]).epsilon(1e-14));
  }
}

TEST_CASE("zero cotangent gives a zero gradient") {
  const ToyConvEncoder conv(3, {8, 8}, 6, Paradigm::kMultimodal, 3);
  const ToyLinearEncoder lin(3, {8, 8}, 6, Paradigm::kMultimodal);
  const Tensor3 x = fixtures::random_image(4, 8, 8).pixels();
  const std::vector<double> zero(6, 0.0);
  CHECK(vjp(conv, x, zero).max_abs() == 0.0);
  CHECK(vjp(lin, x, zero).max_abs() == 0.0);
}

TEST_CASE("linear encoder vjp does not depend on the input") {
  const ToyLinearEncoder lin(5, {8, 8}, 6, Paradigm::kSelfSupervised);
  const auto u = random_vec(9, 6);
  CHECK(vjp(lin, fixtures::random_image(1, 8, 8).pixels(), u) ==
        vjp(lin, fixtures::random_image(2, 8, 8).pixels(), u));
}

TEST_CASE("conv encoder seed 3 vjp matches finite differences") {
  const ToyConvEncoder conv(3, {8, 8}, 8, Paradigm::kMultimodal);
  const Tensor3 x = fixtures::random_image(3, 8, 8).pixels();
  CHECK(vjp_fd_error(conv, x, random_vec(3, 8)) <= 1e-4);
}

TEST_CASE("vjp matches finite differences for every toy encoder on 100 random pairs") {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Tensor3 x = fixtures::random_image(100 + s, 8, 8).pixels();
    const ToyLinearEncoder lin(s, {8, 8}, 5, Paradigm::kSelfSupervised);
    const ToyConvEncoder conv(s, {8, 8}, 5, Paradigm::kMultimodal, 2);
    const auto inner = std::make_shared<ToyConvEncoder>(s, ImageSize{6, 6}, 5, Paradigm::kMultimodal, 2);
    const ResizingEncoder resized(inner, {8, 8});
    const auto u = random_vec(s, 5);
    CHECK(vjp_fd_error(lin, x, u) <= 1e-4);
    CHECK(vjp_fd_error(conv, x, u) <= 1e-4);
    CHECK(vjp_fd_error(resized, x, u) <= 1e-4);
  }
}

TEST_CASE("encoders are deterministic given a seed") {
  const Tensor3 x = fixtures::random_image(8, 8, 8).pixels();
  CHECK(ToyConvEncoder(11, {8, 8}, 4, Paradigm::kMultimodal).forward(x) ==
        ToyConvEncoder(11, {8, 8}, 4, Paradigm::kMultimodal).forward(x));
  CHECK(ToyLinearEncoder(11, {8, 8}, 4, Paradigm::kMultimodal).forward(x) !=
        ToyLinearEncoder(12, {8, 8}, 4, Paradigm::kMultimodal).forward(x));
}

TEST_CASE("encode validates input size") {
  const ToyLinearEncoder lin(1, {8, 8}, 4, Paradigm::kMultimodal);
  CHECK_THROWS_AS(encode(lin, Tensor3({9, 8, 3}, 0.5)), ValidationError);
  CHECK_THROWS_AS(vjp(lin, Tensor3({8, 8, 3}, 0.5), std::vector<double>(3, 0.0)), ValidationError);
}

TEST_CASE("mock caption generator") {
  const MockCaptionGenerator gen;
  const ImageTensor a = fixtures::random_image(1, 8, 8);
  const std::string c = generate_caption(gen, a);
  CHECK(c.rfind("image:", 0) == 0);
  CHECK(c.size() == 6 + 16);
  CHECK(c == generate_caption(gen, a));
  CHECK(c != generate_caption(gen, fixtures::random_image(2, 8, 8)));
}

TEST_CASE("mock text encoder") {
  const MockTextEncoder te(32, 4);
  const auto a = encode_text(te, "a");
  CHECK(a.data == encode_text(te, "a").data);
  CHECK(a.norm() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(a.paradigm == Paradigm::kCrossModalText);
  const auto b = encode_text(te, "b");
  CHECK(cosine_sim(a.data, b.data) < 0.99);
  CHECK_THROWS_AS(encode_text(te, ""), ValidationError);
}

TEST_CASE("suite validation") {
  AttackConfig cfg;
  EncoderSuite suite = fixtures::toy_suite(fixtures::SuiteKind::kLinear, 8, 1);
  CHECK_NOTHROW(suite.validate(cfg));
  CHECK(suite.active(cfg).size() == 3);

  cfg.enabled_paradigms = {ParadigmFamily::kSelfSupervised, ParadigmFamily::kCrossModal};
  const auto act = suite.active(cfg);
  REQUIRE(act.size() == 2);
  CHECK(act[0]->paradigm() == Paradigm::kCrossModalImage);

  EncoderSuite no_text = fixtures::toy_suite(fixtures::SuiteKind::kLinear, 8, 1, false);
  CHECK_THROWS_AS(no_text.validate(AttackConfig{}), ConfigError);
  AttackConfig image_only;
  image_only.text_fusion_enabled = false;
  CHECK_NOTHROW(no_text.validate(image_only));

  EncoderSuite missing = suite;
  missing.multimodal.clear();
  CHECK_THROWS_AS(missing.validate(AttackConfig{}), ConfigError);

  EncoderSuite mistagged = suite;
  mistagged.multimodal.push_back(std::make_shared<ToyLinearEncoder>(1, ImageSize{8, 8}, 16,
                                                                    Paradigm::kSelfSupervised));
  CHECK_THROWS_AS(mistagged.validate(AttackConfig{}), ConfigError);
}
