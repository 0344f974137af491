#include "davsp/intervene.hpp"

namespace davsp {

std::string intervention_mode_to_string(InterventionMode m) {
  switch (m) {
    case InterventionMode::projection_up: return "up";
    case InterventionMode::projection_down: return "down";
    default: return "none";
  }
}

InterventionMode intervention_mode_from_string(const std::string& s) {
  if (s == "up") return InterventionMode::projection_up;
  if (s == "down") return InterventionMode::projection_down;
  if (s == "none") return InterventionMode::none;
  throw usage_error("unknown intervention mode: '" + s + "'");
}

HiddenState edit_hidden(const HiddenState& h, const HarmfulnessVector& v,
                        InterventionMode mode) {
  if (mode == InterventionMode::none) return h;
  const double s = project(v, h);
  double target;
  if (mode == InterventionMode::projection_up) {
    if (s >= v.mu_plus) return h;
    target = v.mu_plus;
  } else {
    if (s <= v.mu_minus) return h;
    target = v.mu_minus;
  }
  HiddenState out = h;
  const double shift = target - s;
  for (std::size_t j = 0; j < out.size(); ++j) out[j] += shift * v.v[j];
  return out;
}

std::string generate_with_intervention(const ToyModel& model, const ImageTensor& image,
                                       const std::string& user_text,
                                       const HarmfulnessVector& v, InterventionMode mode,
                                       const TextualSafetyPrompt& tau,
                                       std::size_t max_tokens, bool reapply_each_step) {
  const std::string text = compose_text(tau, user_text);
  if (mode == InterventionMode::none) {
    return model.generate(image, text, max_tokens);
  }
  InterventionHook hook;
  hook.layer = v.layer;
  hook.reapply_each_step = reapply_each_step;
  hook.edit = [&v, mode](const HiddenState& h) { return edit_hidden(h, v, mode); };
  return model.generate(image, text, max_tokens, hook);
}

}  // namespace davsp
