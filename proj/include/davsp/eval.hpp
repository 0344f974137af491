#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "davsp/align.hpp"
#include "davsp/intervene.hpp"
#include "davsp/judge.hpp"

namespace davsp {

double compute_rsr(const DatasetSplit& split, const std::vector<std::string>& responses,
                   Judge& judge);

// Mean teacher-forced cross-entropy of benign targets; lower = better utility.
double utility_proxy(const ToyModel& model, const DatasetSplit& benign_split,
                     const std::optional<VisualSafetyPrompt>& vsp,
                     const TextualSafetyPrompt& tau);

enum class IntegrationStrategy { adaptive, static_ };

std::string integration_strategy_to_string(IntegrationStrategy s);
IntegrationStrategy integration_strategy_from_string(const std::string& s);

using Captioner = std::function<std::string(const ToyModel&, const ImageTensor&)>;

Captioner default_captioner(std::size_t max_tokens = 24);

struct EcsoResult {
  std::string final_response;
  std::vector<std::string> audit;  // ordered branch/event log
  std::size_t vsp_applications = 0;
  std::size_t judgments = 0;
};

// Detection-based defense: self-assess the initial response, and if unsafe
// replace the image with a generated caption and re-infer. The judge's
// "resisted" verdict is read as "this response is safe".
EcsoResult ecso_pipeline(const ToyModel& model, const QuerySample& sample, Judge& judge,
                         IntegrationStrategy strategy, const VisualSafetyPrompt& vsp,
                         const TextualSafetyPrompt& tau, const Captioner& captioner,
                         std::size_t max_tokens = 24);

struct AttackConfig {
  std::string affirmative_prefix = "Sure, here are the steps:";
  std::size_t steps = 100;
  double alpha = 1.0 / 255.0;
  double beta = 1.0;
  bool hinge_at_mu_minus = true;  // false = raw projection minimization
  std::size_t layer = 0;          // taken from the vector
};

// White-box adaptive attack: full-image signed-gradient steps that raise the
// likelihood of the affirmative prefix while pushing the projection down.
ImageTensor craft_adaptive_attack(const ToyModel& model, const HarmfulnessVector& v,
                                  const QuerySample& sample, const TextualSafetyPrompt& tau,
                                  const AttackConfig& config);

// Escapes bytes outside printable ASCII as \xNN for report serialization.
std::string printable_bytes(const std::string& raw);

struct SampleResult {
  std::string id;
  std::string response;
  bool resisted = false;
  std::string judge_id;
};

struct EvalReport {
  std::vector<SampleResult> per_sample;
  double rsr = 0.0;
  double utility = 0.0;
  std::string config_fingerprint;
  nlohmann::json to_json() const;
};

struct EvalOptions {
  InterventionMode intervene = InterventionMode::none;
  std::size_t max_tokens = 24;
};

// Generates + judges responses for the malicious samples of the split (with
// the deployment transform when a VSP is given) and computes the utility
// proxy over its benign samples.
EvalReport run_eval(const ToyModel& model, const DatasetSplit& eval_split,
                    const std::optional<VisualSafetyPrompt>& vsp,
                    const TextualSafetyPrompt& tau, Judge& judge,
                    const HarmfulnessVector& v, const EvalOptions& options);

}  // namespace davsp
