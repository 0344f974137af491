#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "davsp/data.hpp"
#include "davsp/intervene.hpp"
#include "davsp/rng.hpp"

using namespace davsp;

namespace {

HarmfulnessVector random_unit_vector(Rng& rng, std::size_t d) {
  HarmfulnessVector v;
  v.v.resize(d);
  double norm = 0.0;
  for (auto& x : v.v) {
    x = rng.next_gaussian();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v.v) x /= norm;
  v.mu_minus = rng.next_gaussian();
  v.mu_plus = v.mu_minus + 0.5 + rng.next_double();
  v.has_margins = true;
  v.layer = 2;
  return v;
}

}  // namespace

TEST_CASE("rank-1 edit hits the margin, fires conditionally, and is idempotent") {
  Rng rng(88);
  const std::size_t d = 32;
  for (int trial = 0; trial < 1000; ++trial) {
    const HarmfulnessVector v = random_unit_vector(rng, d);
    HiddenState h(d);
    for (auto& x : h) x = 2.0 * rng.next_gaussian();
    const double s = project(v, h);
    const InterventionMode mode =
        trial % 2 == 0 ? InterventionMode::projection_up : InterventionMode::projection_down;
    const double target = mode == InterventionMode::projection_up ? v.mu_plus : v.mu_minus;
    const bool fires = mode == InterventionMode::projection_up ? s < v.mu_plus : s > v.mu_minus;

    const HiddenState edited = edit_hidden(h, v, mode);
    if (!fires) {
      CHECK(edited == h);
      continue;
    }
    // Post-edit projection sits exactly on the margin.
    CHECK(std::abs(project(v, edited) - target) <= 1e-6);
    // Components orthogonal to v are untouched: the residual after removing
    // the v component must match.
    const double se = project(v, edited);
    for (std::size_t j = 0; j < d; ++j) {
      CHECK(std::abs((edited[j] - se * v.v[j]) - (h[j] - s * v.v[j])) <= 1e-6);
    }
    const HiddenState twice = edit_hidden(edited, v, mode);
    for (std::size_t j = 0; j < d; ++j) CHECK(std::abs(twice[j] - edited[j]) <= 1e-12);
  }
}

TEST_CASE("mode none never edits") {
  Rng rng(89);
  const HarmfulnessVector v = random_unit_vector(rng, 8);
  HiddenState h(8, 1.0);
  CHECK(edit_hidden(h, v, InterventionMode::none) == h);
}

TEST_CASE("mode strings round trip") {
  CHECK(intervention_mode_from_string("up") == InterventionMode::projection_up);
  CHECK(intervention_mode_from_string("down") == InterventionMode::projection_down);
  CHECK(intervention_mode_from_string("none") == InterventionMode::none);
  CHECK(intervention_mode_to_string(InterventionMode::projection_up) == "up");
  CHECK(intervention_mode_to_string(InterventionMode::projection_down) == "down");
  CHECK(intervention_mode_to_string(InterventionMode::none) == "none");
  CHECK_THROWS_AS(intervention_mode_from_string("sideways"), Error);
}

TEST_CASE("generation with mode none equals plain prompted generation") {
  const ToyModel model(7, ToyArch{});
  Rng rng(90);
  ImageTensor img(16, 16);
  for (std::size_t i = 0; i < img.t.size(); ++i)
    img.t[i] = static_cast<float>(rng.next_double());
  HarmfulnessVector v = random_unit_vector(rng, model.arch().d);
  const TextualSafetyPrompt tau = default_textual_prompt();
  const std::string with_none =
      generate_with_intervention(model, img, "user text", v, InterventionMode::none, tau, 16);
  CHECK(with_none == model.generate(img, compose_text(tau, "user text"), 16));
}

TEST_CASE("projection raising diverges from no intervention on some sample") {
  const ToyModel model(7, ToyArch{});
  const TextualSafetyPrompt tau = default_textual_prompt();
  Rng gen(42);
  const DatasetSplit ds = gen_synthetic(gen, 10, 10, 32, 32);

  // A direction actually extracted from the model makes the edit magnitude
  // realistic (mu_plus well above typical projections without a prompt).
  // Layer 1 is used here because the edit still passes through enough later
  // blocks to visibly steer greedy decoding at these magnitudes.
  const std::size_t layer = 1;
  std::vector<HiddenState> mal_rows, ben_rows;
  for (const auto& s : ds.samples) {
    const HiddenState h = model.forward_hidden(s.image, compose_text(tau, s.text), layer);
    (s.label == Label::malicious ? mal_rows : ben_rows).push_back(h);
  }
  ActivationSet mal, ben;
  mal.rows = mal_rows;
  mal.layer = layer;
  mal.provenance = Label::malicious;
  ben.rows = ben_rows;
  ben.layer = layer;
  ben.provenance = Label::benign;
  const HarmfulnessVector v = compute_margins(build_vector(mal, ben), mal, ben);

  // Deployment composes the border prompt first; that composition drags the
  // projections well below mu_plus, so the raising edit has real magnitude.
  const VisualSafetyPrompt vsp = VisualSafetyPrompt::zeros(32, 32, 4);
  std::size_t diverged = 0;
  for (const auto& s : ds.samples) {
    if (s.label != Label::malicious) continue;
    const ImageTensor deployed = apply_vsp(s.image, vsp);
    const std::string up = generate_with_intervention(model, deployed, s.text, v,
                                                      InterventionMode::projection_up, tau, 20);
    const std::string none = generate_with_intervention(model, deployed, s.text, v,
                                                        InterventionMode::none, tau, 20);
    if (up != none) ++diverged;
  }
  CHECK(diverged >= 1);
}
