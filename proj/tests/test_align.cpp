#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "davsp/align.hpp"
#include "davsp/model.hpp"

using namespace davsp;

TEST_CASE("margin hinge loss matches a direct scalar evaluation") {
  Rng rng(55);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.next_index(6);
    const double mu_minus = rng.next_gaussian();
    const double mu_plus = mu_minus + 0.1 + 2.0 * rng.next_double();
    std::vector<ProjectionSample> batch(n);
    double expect = 0.0;
    for (auto& b : batch) {
      b.s = 3.0 * rng.next_gaussian();
      b.label = rng.next_index(2) == 0 ? Label::malicious : Label::benign;
      // Independent re-derivation of the two-sided hinge.
      if (b.label == Label::malicious) {
        expect += mu_plus - b.s > 0.0 ? mu_plus - b.s : 0.0;
      } else {
        expect += b.s - mu_minus > 0.0 ? b.s - mu_minus : 0.0;
      }
    }
    expect /= static_cast<double>(n);
    CHECK(std::abs(loss_proj(batch, mu_plus, mu_minus) - expect) <= 1e-9);
  }
  CHECK_THROWS_AS(loss_proj({}, 1.0, 0.0), Error);
}

TEST_CASE("hinge is zero when both classes satisfy their margins") {
  std::vector<ProjectionSample> batch = {{5.0, Label::malicious}, {-1.0, Label::benign}};
  CHECK(loss_proj(batch, 4.0, 0.0) == 0.0);
}

TEST_CASE("total loss is the lambda-weighted sum") {
  CHECK(loss_total(2.0, 3.0, 0.1) == doctest::Approx(2.3));
  CHECK(loss_total(2.0, 3.0, 0.0) == doctest::Approx(2.0));
}

TEST_CASE("targets gain a trailing end-of-sequence byte") {
  const auto toks = target_tokens("ab");
  REQUIRE(toks.size() == 3);
  CHECK(toks[0] == 'a');
  CHECK(toks[1] == 'b');
  CHECK(toks[2] == ToyModel::kEosByte);
}

TEST_CASE("teacher-forced output loss is finite and model-dependent") {
  const ToyModel model(7, ToyArch{});
  ImageTensor img(16, 16);
  for (std::size_t i = 0; i < img.t.size(); ++i) img.t[i] = 0.5f;
  const double lo = loss_output(model, img, "some text", "target");
  CHECK(std::isfinite(lo));
  CHECK(lo > 0.0);
  const ToyModel other(8, ToyArch{});
  CHECK(loss_output(other, img, "some text", "target") != lo);
}

TEST_CASE("pgd step obeys the mask, the clamp, and the step rule") {
  const std::size_t h = 16, w = 16, p = 2;
  const Tensor mask = make_mask(h, w, p);
  Rng rng(66);
  Tensor delta({3, h, w});
  Tensor grad({3, h, w});
  for (std::size_t i = 0; i < delta.size(); ++i) {
    if (mask[i] != 0.0f) delta[i] = static_cast<float>(rng.next_double());
    grad[i] = static_cast<float>(rng.next_gaussian());
  }
  const double alpha = 1.0 / 255.0;

  SUBCASE("signed rule moves each on-mask entry by exactly alpha") {
    const Tensor next = pgd_step(delta, grad, mask, alpha, StepRule::signed_gradient);
    for (std::size_t i = 0; i < next.size(); ++i) {
      if (mask[i] == 0.0f) {
        CHECK(next[i] == delta[i]);
        continue;
      }
      const double sgn = (grad[i] > 0.0f) - (grad[i] < 0.0f);
      const double expect = std::clamp(static_cast<double>(delta[i]) - alpha * sgn, 0.0, 1.0);
      CHECK(std::abs(next[i] - expect) <= 1e-7);
      CHECK(next[i] >= 0.0f);
      CHECK(next[i] <= 1.0f);
    }
  }
  SUBCASE("raw rule scales by the gradient magnitude") {
    const Tensor next = pgd_step(delta, grad, mask, alpha, StepRule::raw_gradient);
    for (std::size_t i = 0; i < next.size(); ++i) {
      if (mask[i] == 0.0f) {
        CHECK(next[i] == delta[i]);
        continue;
      }
      const double expect =
          std::clamp(static_cast<double>(delta[i]) - alpha * grad[i], 0.0, 1.0);
      CHECK(std::abs(next[i] - expect) <= 1e-7);
    }
  }
  SUBCASE("clamping saturates at the box") {
    Tensor at_zero = Tensor({3, h, w});
    Tensor up = Tensor::full({3, h, w}, 1.0f);  // positive grad pushes down
    const Tensor next = pgd_step(at_zero, up, mask, alpha, StepRule::signed_gradient);
    for (std::size_t i = 0; i < next.size(); ++i) CHECK(next[i] == 0.0f);
  }
}

TEST_CASE("step rule strings round trip") {
  CHECK(step_rule_from_string("signed-gradient") == StepRule::signed_gradient);
  CHECK(step_rule_from_string("raw-gradient") == StepRule::raw_gradient);
  CHECK(step_rule_to_string(StepRule::signed_gradient) == "signed-gradient");
  CHECK(step_rule_to_string(StepRule::raw_gradient) == "raw-gradient");
  CHECK_THROWS_AS(step_rule_from_string("momentum"), Error);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.validate(64, 64);
  SUBCASE("padding too large") {
    cfg.padding = 32;
    CHECK_THROWS_AS(cfg.validate(64, 64), Error);
  }
  SUBCASE("zero batch") {
    cfg.batch = 0;
    CHECK_THROWS_AS(cfg.validate(64, 64), Error);
  }
  SUBCASE("nonpositive alpha") {
    cfg.alpha = 0.0;
    CHECK_THROWS_AS(cfg.validate(64, 64), Error);
  }
}

TEST_CASE("trace serializes one csv row per step") {
  TrainTrace trace;
  trace.steps.push_back({0, 1.5, 6.0, 2.1, 0.5, 1.0});
  trace.steps.push_back({1, 1.25, 5.9, 1.84, 0.5, 1.0});
  const std::string csv = trace.to_csv();
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "step,l_proj,l_output,l_total,frac_mal_above,frac_ben_below");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 2);
}
