#pragma once

#include <string>

#include "davsp/direction.hpp"

namespace davsp {

enum class InterventionMode { projection_up, projection_down, none };

std::string intervention_mode_to_string(InterventionMode m);
InterventionMode intervention_mode_from_string(const std::string& s);

// Eq.-9-style rank-1 edit along v:
//   up:   if s(h) < mu_plus  then h + (mu_plus  - s) * v
//   down: if s(h) > mu_minus then h + (mu_minus - s) * v
HiddenState edit_hidden(const HiddenState& h, const HarmfulnessVector& v,
                        InterventionMode mode);

// Compose with tau, install the edit at layer v.layer, greedy-decode. The edit
// is re-applied at the last-input-token position on every decoding step unless
// reapply_each_step is false.
std::string generate_with_intervention(const ToyModel& model, const ImageTensor& image,
                                       const std::string& user_text,
                                       const HarmfulnessVector& v, InterventionMode mode,
                                       const TextualSafetyPrompt& tau,
                                       std::size_t max_tokens,
                                       bool reapply_each_step = true);

}  // namespace davsp
