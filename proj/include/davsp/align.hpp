#pragma once

#include <string>
#include <vector>

#include "davsp/direction.hpp"

namespace davsp {

enum class StepRule { signed_gradient, raw_gradient };

std::string step_rule_to_string(StepRule r);
StepRule step_rule_from_string(const std::string& s);

struct TrainConfig {
  std::size_t padding = 8;      // p
  std::size_t layer = 2;        // l, zero-based; defaults to L/2
  double lambda = 0.1;
  double alpha = 1.0 / 255.0;   // step size in the [0,1] pixel domain
  std::size_t steps = 200;      // n
  std::size_t batch = 2;        // B
  std::uint64_t seed = 42;
  StepRule step_rule = StepRule::signed_gradient;

  void validate(std::size_t h, std::size_t w) const;
};

struct ProjectionSample {
  double s = 0.0;
  Label label = Label::benign;
};

// Eq-style margin hinge: mean over the batch of
//   1[mal] * max(0, mu_plus - s) + 1[ben] * max(0, s - mu_minus).
double loss_proj(const std::vector<ProjectionSample>& batch, double mu_plus, double mu_minus);

// Token-mean teacher-forced cross-entropy of y_target under the given inputs.
double loss_output(const ToyModel& model, const ImageTensor& transformed,
                   const std::string& composed_text, const std::string& y_target);

double loss_total(double lp, double lo, double lambda);

// Targets are supervised with a trailing end-of-sequence byte.
std::vector<std::uint8_t> target_tokens(const std::string& y_target);

// delta' = clamp(delta - alpha * m .* step(grad), 0, 1); off-mask entries are
// returned bit-for-bit unchanged.
Tensor pgd_step(const Tensor& delta, const Tensor& grad, const Tensor& mask,
                double alpha, StepRule rule);

struct TraceStep {
  std::size_t step = 0;
  double l_proj = 0.0;
  double l_output = 0.0;
  double l_total = 0.0;
  double frac_mal_above = 0.0;  // within the step's batch
  double frac_ben_below = 0.0;
};

struct TrainTrace {
  std::vector<TraceStep> steps;
  std::string to_csv() const;
};

struct TrainResult {
  VisualSafetyPrompt vsp;
  TrainTrace trace;
};

TrainResult train_vsp(const TrainConfig& config, const ToyModel& model,
                      const HarmfulnessVector& v, const DatasetSplit& train_split,
                      const TextualSafetyPrompt& tau, Rng& rng);

struct MarginSatisfaction {
  double frac_mal_above = 0.0;
  double frac_ben_below = 0.0;
};

MarginSatisfaction margin_satisfaction(const ToyModel& model, const HarmfulnessVector& v,
                                       const DatasetSplit& split,
                                       const std::optional<VisualSafetyPrompt>& vsp,
                                       const TextualSafetyPrompt& tau);

}  // namespace davsp
