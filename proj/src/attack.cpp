#include <algorithm>

#include "davsp/eval.hpp"

namespace davsp {

ImageTensor craft_adaptive_attack(const ToyModel& model, const HarmfulnessVector& v,
                                  const QuerySample& sample, const TextualSafetyPrompt& tau,
                                  const AttackConfig& config) {
  if (sample.label != Label::malicious) {
    throw usage_error("craft_adaptive_attack: sample must be malicious");
  }
  ImageTensor image = sample.image;
  const std::string text = compose_text(tau, sample.text);

  LossSpec spec;
  spec.ce_target = ToyModel::tokenize(config.affirmative_prefix);
  spec.ce_weight = 1.0;
  if (config.beta != 0.0) {
    spec.direction = v.v;
    spec.layer = v.layer;
    spec.proj_weight = config.beta;
    // Push the projection below mu_minus (hinge) or minimize it outright.
    spec.proj_form = config.hinge_at_mu_minus ? LossSpec::ProjForm::push_below
                                              : LossSpec::ProjForm::raw;
    spec.margin = v.mu_minus;
  }

  for (std::size_t step = 0; step < config.steps; ++step) {
    auto [value, grad] = model.loss_and_grad(image, text, spec);
    for (std::size_t i = 0; i < image.t.size(); ++i) {
      const double g = grad[i];
      const double sgn = (g > 0.0) - (g < 0.0);
      image.t[i] = static_cast<float>(
          std::clamp(static_cast<double>(image.t[i]) - config.alpha * sgn, 0.0, 1.0));
    }
  }
  return image;
}

}  // namespace davsp
