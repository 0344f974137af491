#pragma once

#include "davsp/align.hpp"
#include "davsp/artifact.hpp"
#include "davsp/direction.hpp"

namespace davsp {

void save_vector(const ArtifactStore& store, const std::string& name,
                 const HarmfulnessVector& v);
HarmfulnessVector load_vector(const ArtifactStore& store, const std::string& name);

void save_vsp(const ArtifactStore& store, const std::string& name,
              const VisualSafetyPrompt& vsp, StepRule step_rule,
              const std::string& training_fingerprint);
VisualSafetyPrompt load_vsp(const ArtifactStore& store, const std::string& name);

// Toy models regenerate from (seed, arch); only the manifest is stored.
void save_model_manifest(const ArtifactStore& store, const std::string& name,
                         const ToyModel& model);
ToyModel load_model_from_manifest(const ArtifactStore& store, const std::string& name);

}  // namespace davsp
