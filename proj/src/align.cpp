#include "davsp/align.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace davsp {

std::string step_rule_to_string(StepRule r) {
  return r == StepRule::signed_gradient ? "signed-gradient" : "raw-gradient";
}

StepRule step_rule_from_string(const std::string& s) {
  if (s == "signed-gradient" || s == "signed") return StepRule::signed_gradient;
  if (s == "raw-gradient" || s == "raw") return StepRule::raw_gradient;
  throw usage_error("unknown step rule: '" + s + "'");
}

void TrainConfig::validate(std::size_t h, std::size_t w) const {
  if (padding < 1 || 2 * padding >= std::min(h, w)) {
    throw usage_error("config: padding must satisfy 1 <= p and 2p < min(H, W)");
  }
  if (alpha <= 0.0) throw usage_error("config: alpha must be positive");
  if (batch < 1) throw usage_error("config: batch must be >= 1");
  if (lambda < 0.0) throw usage_error("config: lambda must be nonnegative");
}

double loss_proj(const std::vector<ProjectionSample>& batch, double mu_plus, double mu_minus) {
  if (batch.empty()) throw usage_error("loss_proj: empty batch");
  double sum = 0.0;
  for (const auto& p : batch) {
    if (p.label == Label::malicious) {
      sum += std::max(0.0, mu_plus - p.s);
    } else {
      sum += std::max(0.0, p.s - mu_minus);
    }
  }
  return sum / static_cast<double>(batch.size());
}

std::vector<std::uint8_t> target_tokens(const std::string& y_target) {
  auto t = ToyModel::tokenize(y_target);
  t.push_back(ToyModel::kEosByte);
  return t;
}

double loss_output(const ToyModel& model, const ImageTensor& transformed,
                   const std::string& composed_text, const std::string& y_target) {
  if (y_target.empty()) throw usage_error("loss_output: empty target");
  LossSpec spec;
  spec.ce_target = target_tokens(y_target);
  spec.ce_weight = 1.0;
  return model.loss_only(transformed, composed_text, spec).ce_term;
}

double loss_total(double lp, double lo, double lambda) {
  if (lambda < 0.0) throw usage_error("loss_total: lambda must be nonnegative");
  return lp + lambda * lo;
}

Tensor pgd_step(const Tensor& delta, const Tensor& grad, const Tensor& mask,
                double alpha, StepRule rule) {
  if (!delta.same_shape(grad) || !delta.same_shape(mask)) {
    throw numeric_error("pgd_step: shape mismatch");
  }
  if (alpha <= 0.0) throw usage_error("pgd_step: alpha must be positive");
  Tensor out = delta;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (mask[i] == 0.0f) continue;  // off-mask entries unchanged bit-for-bit
    double g = grad[i];
    if (rule == StepRule::signed_gradient) g = (g > 0.0) - (g < 0.0);
    const double updated = static_cast<double>(out[i]) - alpha * g;
    out[i] = static_cast<float>(std::clamp(updated, 0.0, 1.0));
  }
  return out;
}

std::string TrainTrace::to_csv() const {
  std::ostringstream os;
  os << "step,l_proj,l_output,l_total,frac_mal_above,frac_ben_below\n";
  os.precision(17);
  for (const auto& s : steps) {
    os << s.step << "," << s.l_proj << "," << s.l_output << "," << s.l_total << ","
       << s.frac_mal_above << "," << s.frac_ben_below << "\n";
  }
  return os.str();
}

namespace {

// Round-robin across label pools so both hinge arms receive gradient.
std::vector<std::size_t> sample_batch(Rng& rng, const DatasetSplit& split, std::size_t batch) {
  std::vector<std::size_t> mal, ben;
  for (std::size_t i = 0; i < split.samples.size(); ++i) {
    (split.samples[i].label == Label::malicious ? mal : ben).push_back(i);
  }
  std::vector<std::size_t> chosen;
  for (std::size_t b = 0; b < batch; ++b) {
    const std::vector<std::size_t>* pool;
    if (mal.empty()) {
      pool = &ben;
    } else if (ben.empty()) {
      pool = &mal;
    } else {
      pool = (b % 2 == 0) ? &mal : &ben;
    }
    chosen.push_back((*pool)[rng.next_index(pool->size())]);
  }
  return chosen;
}

}  // namespace

TrainResult train_vsp(const TrainConfig& config, const ToyModel& model,
                      const HarmfulnessVector& v, const DatasetSplit& train_split,
                      const TextualSafetyPrompt& tau, Rng& rng) {
  if (train_split.samples.empty()) throw usage_error("train_vsp: empty training split");
  const std::size_t h = train_split.samples.front().image.height();
  const std::size_t w = train_split.samples.front().image.width();
  config.validate(h, w);
  if (!v.has_margins) throw usage_error("train_vsp: harmfulness vector lacks margins");
  if (v.layer != config.layer) {
    throw usage_error("train_vsp: vector layer does not match config layer");
  }
  if (v.model_fingerprint != 0 && v.model_fingerprint != model.params_checksum()) {
    throw usage_error("train_vsp: vector was built against a different model");
  }
  for (const auto& s : train_split.samples) {
    if (!s.target_response) {
      throw usage_error("train_vsp: sample '" + s.id + "' is missing target_response");
    }
  }

  const std::uint64_t checksum_before = model.params_checksum();

  TrainResult result;
  result.vsp = VisualSafetyPrompt::zeros(h, w, config.padding);
  const double inv_b = 1.0 / static_cast<double>(config.batch);

  for (std::size_t step = 0; step < config.steps; ++step) {
    const auto batch_idx = sample_batch(rng, train_split, config.batch);
    Tensor grad_sum({3, h, w});
    TraceStep trace_step;
    trace_step.step = step;
    std::size_t mal_n = 0, mal_ok = 0, ben_n = 0, ben_ok = 0;

    for (std::size_t idx : batch_idx) {
      const QuerySample& sample = train_split.samples[idx];
      const ImageTensor transformed = apply_vsp(sample.image, result.vsp);
      const std::string text = compose_text(tau, sample.text);

      LossSpec spec;
      spec.direction = v.v;
      spec.layer = config.layer;
      spec.proj_weight = 1.0;
      if (sample.label == Label::malicious) {
        spec.proj_form = LossSpec::ProjForm::push_above;
        spec.margin = v.mu_plus;
      } else {
        spec.proj_form = LossSpec::ProjForm::push_below;
        spec.margin = v.mu_minus;
      }
      spec.ce_target = target_tokens(*sample.target_response);
      spec.ce_weight = config.lambda;

      auto [value, grad_image] = model.loss_and_grad(transformed, text, spec);
      trace_step.l_proj += value.proj_term * inv_b;
      trace_step.l_output += value.ce_term * inv_b;
      for (std::size_t i = 0; i < grad_sum.size(); ++i) {
        grad_sum[i] += static_cast<float>(grad_image[i] * inv_b);
      }
      if (sample.label == Label::malicious) {
        ++mal_n;
        if (value.projection >= v.mu_plus) ++mal_ok;
      } else {
        ++ben_n;
        if (value.projection <= v.mu_minus) ++ben_ok;
      }
    }
    trace_step.l_total = loss_total(trace_step.l_proj, trace_step.l_output, config.lambda);
    trace_step.frac_mal_above = mal_n ? static_cast<double>(mal_ok) / mal_n : 0.0;
    trace_step.frac_ben_below = ben_n ? static_cast<double>(ben_ok) / ben_n : 0.0;
    result.trace.steps.push_back(trace_step);

    // Border pixels of the composed image are exactly delta, so the image
    // gradient restricted to the mask is the delta gradient.
    result.vsp.delta =
        pgd_step(result.vsp.delta, grad_sum, result.vsp.mask, config.alpha, config.step_rule);
  }

  if (model.params_checksum() != checksum_before) {
    throw numeric_error("train_vsp: frozen model parameters changed");
  }
  return result;
}

MarginSatisfaction margin_satisfaction(const ToyModel& model, const HarmfulnessVector& v,
                                       const DatasetSplit& split,
                                       const std::optional<VisualSafetyPrompt>& vsp,
                                       const TextualSafetyPrompt& tau) {
  if (split.samples.empty()) throw usage_error("margin_satisfaction: empty split");
  std::size_t mal_n = 0, mal_ok = 0, ben_n = 0, ben_ok = 0;
  for (const auto& sample : split.samples) {
    const ImageTensor image = vsp ? apply_vsp(sample.image, *vsp) : sample.image;
    const std::string text = compose_text(tau, sample.text);
    const double s = project(v, model.forward_hidden(image, text, v.layer));
    if (sample.label == Label::malicious) {
      ++mal_n;
      if (s >= v.mu_plus) ++mal_ok;
    } else {
      ++ben_n;
      if (s <= v.mu_minus) ++ben_ok;
    }
  }
  MarginSatisfaction out;
  out.frac_mal_above = mal_n ? static_cast<double>(mal_ok) / mal_n : 0.0;
  out.frac_ben_below = ben_n ? static_cast<double>(ben_ok) / ben_n : 0.0;
  return out;
}

}  // namespace davsp
