#pragma once

#include <optional>
#include <string>
#include <vector>

#include "davsp/data.hpp"
#include "davsp/model.hpp"
#include "davsp/transform.hpp"

namespace davsp {

// Per-sample hidden states at one layer, rows in sample order.
struct ActivationSet {
  std::vector<HiddenState> rows;
  std::size_t layer = 0;
  Label provenance = Label::benign;

  std::size_t width() const { return rows.empty() ? 0 : rows.front().size(); }
};

// Unit direction in activation space with its frozen projection margins.
struct HarmfulnessVector {
  std::vector<double> v;  // unit L2 norm
  std::size_t layer = 0;
  double mu_plus = 0.0;
  double mu_minus = 0.0;
  std::size_t n_malicious = 0;
  std::size_t m_benign = 0;
  std::uint64_t model_fingerprint = 0;
  bool has_margins = false;
};

ActivationSet collect_activations(const ToyModel& model, const DatasetSplit& split,
                                  std::size_t layer, const TextualSafetyPrompt& tau,
                                  const std::optional<VisualSafetyPrompt>& vsp,
                                  Label provenance);

// normalize(mean(malicious) - mean(benign)); margins are not yet set.
HarmfulnessVector build_vector(const ActivationSet& mal, const ActivationSet& ben);

// mu_plus / mu_minus = mean projections of the construction sets.
HarmfulnessVector compute_margins(HarmfulnessVector v, const ActivationSet& mal,
                                  const ActivationSet& ben);

double project(const HarmfulnessVector& v, const HiddenState& h);

struct SeparationReport {
  double mean_malicious = 0.0;
  double mean_benign = 0.0;
  double frac_mal_at_or_above_mu_plus = 0.0;
  double frac_ben_at_or_below_mu_minus = 0.0;
  std::vector<double> malicious_projections;
  std::vector<double> benign_projections;
};

SeparationReport separation_report(const HarmfulnessVector& v, const ActivationSet& mal,
                                   const ActivationSet& ben);

}  // namespace davsp
