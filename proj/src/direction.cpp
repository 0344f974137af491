#include "davsp/direction.hpp"

#include <cmath>

namespace davsp {

ActivationSet collect_activations(const ToyModel& model, const DatasetSplit& split,
                                  std::size_t layer, const TextualSafetyPrompt& tau,
                                  const std::optional<VisualSafetyPrompt>& vsp,
                                  Label provenance) {
  if (split.samples.empty()) throw usage_error("cannot collect activations from empty split");
  ActivationSet set;
  set.layer = layer;
  set.provenance = provenance;
  for (const auto& sample : split.samples) {
    const std::string text = compose_text(tau, sample.text);
    const ImageTensor image = vsp ? apply_vsp(sample.image, *vsp) : sample.image;
    set.rows.push_back(model.forward_hidden(image, text, layer));
  }
  return set;
}

namespace {

std::vector<double> mean_rows(const ActivationSet& set) {
  const std::size_t d = set.width();
  std::vector<double> mean(d, 0.0);
  for (const auto& row : set.rows) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += row[j];
  }
  for (double& x : mean) x /= static_cast<double>(set.rows.size());
  return mean;
}

}  // namespace

HarmfulnessVector build_vector(const ActivationSet& mal, const ActivationSet& ben) {
  if (mal.rows.empty() || ben.rows.empty()) {
    throw usage_error("activation sets must be non-empty");
  }
  if (mal.width() != ben.width() || mal.layer != ben.layer) {
    throw numeric_error("activation sets disagree on width or layer");
  }
  const auto mm = mean_rows(mal);
  const auto mb = mean_rows(ben);
  std::vector<double> diff(mm.size());
  double norm2 = 0.0;
  for (std::size_t j = 0; j < diff.size(); ++j) {
    diff[j] = mm[j] - mb[j];
    norm2 += diff[j] * diff[j];
  }
  const double norm = std::sqrt(norm2);
  if (norm < 1e-12) {
    throw numeric_error("degenerate direction: class mean activations coincide");
  }
  HarmfulnessVector v;
  v.v.resize(diff.size());
  for (std::size_t j = 0; j < diff.size(); ++j) v.v[j] = diff[j] / norm;
  v.layer = mal.layer;
  v.n_malicious = mal.rows.size();
  v.m_benign = ben.rows.size();
  return v;
}

HarmfulnessVector compute_margins(HarmfulnessVector v, const ActivationSet& mal,
                                  const ActivationSet& ben) {
  if (mal.rows.size() != v.n_malicious || ben.rows.size() != v.m_benign) {
    throw usage_error("margins must be computed on the construction sets");
  }
  double mu_plus = 0.0, mu_minus = 0.0;
  for (const auto& row : mal.rows) mu_plus += project(v, row);
  for (const auto& row : ben.rows) mu_minus += project(v, row);
  mu_plus /= static_cast<double>(mal.rows.size());
  mu_minus /= static_cast<double>(ben.rows.size());
  if (mu_plus <= mu_minus) {
    throw numeric_error("margin order violated: mu_plus must exceed mu_minus");
  }
  v.mu_plus = mu_plus;
  v.mu_minus = mu_minus;
  v.has_margins = true;
  return v;
}

double project(const HarmfulnessVector& v, const HiddenState& h) {
  if (v.v.size() != h.size()) throw numeric_error("projection dimension mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < h.size(); ++j) s += v.v[j] * h[j];
  return s;
}

SeparationReport separation_report(const HarmfulnessVector& v, const ActivationSet& mal,
                                   const ActivationSet& ben) {
  if (mal.rows.empty() || ben.rows.empty()) {
    throw usage_error("separation report needs non-empty activation sets");
  }
  SeparationReport rep;
  std::size_t above = 0, below = 0;
  for (const auto& row : mal.rows) {
    const double s = project(v, row);
    rep.malicious_projections.push_back(s);
    rep.mean_malicious += s;
    if (s >= v.mu_plus) ++above;
  }
  for (const auto& row : ben.rows) {
    const double s = project(v, row);
    rep.benign_projections.push_back(s);
    rep.mean_benign += s;
    if (s <= v.mu_minus) ++below;
  }
  rep.mean_malicious /= static_cast<double>(mal.rows.size());
  rep.mean_benign /= static_cast<double>(ben.rows.size());
  rep.frac_mal_at_or_above_mu_plus =
      static_cast<double>(above) / static_cast<double>(mal.rows.size());
  rep.frac_ben_at_or_below_mu_minus =
      static_cast<double>(below) / static_cast<double>(ben.rows.size());
  return rep;
}

}  // namespace davsp
