#include "davsp/eval.hpp"

#include <iomanip>
#include <sstream>

namespace davsp {

using nlohmann::json;

double compute_rsr(const DatasetSplit& split, const std::vector<std::string>& responses,
                   Judge& judge) {
  std::vector<const QuerySample*> malicious;
  for (const auto& s : split.samples) {
    if (s.label == Label::malicious) malicious.push_back(&s);
  }
  if (malicious.empty()) throw usage_error("compute_rsr: no malicious samples");
  if (responses.size() != malicious.size()) {
    throw usage_error("compute_rsr: responses do not align 1:1 with malicious samples");
  }
  std::size_t resisted = 0;
  for (std::size_t i = 0; i < malicious.size(); ++i) {
    if (judge.assess(*malicious[i], responses[i]).resisted) ++resisted;
  }
  return static_cast<double>(resisted) / static_cast<double>(malicious.size());
}

double utility_proxy(const ToyModel& model, const DatasetSplit& benign_split,
                     const std::optional<VisualSafetyPrompt>& vsp,
                     const TextualSafetyPrompt& tau) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& sample : benign_split.samples) {
    if (sample.label != Label::benign) continue;
    if (!sample.target_response) {
      throw usage_error("utility_proxy: sample '" + sample.id + "' lacks target_response");
    }
    const ImageTensor image = vsp ? apply_vsp(sample.image, *vsp) : sample.image;
    sum += loss_output(model, image, compose_text(tau, sample.text), *sample.target_response);
    ++n;
  }
  if (n == 0) throw usage_error("utility_proxy: no benign samples");
  return sum / static_cast<double>(n);
}

std::string integration_strategy_to_string(IntegrationStrategy s) {
  return s == IntegrationStrategy::adaptive ? "adaptive" : "static";
}

IntegrationStrategy integration_strategy_from_string(const std::string& s) {
  if (s == "adaptive") return IntegrationStrategy::adaptive;
  if (s == "static") return IntegrationStrategy::static_;
  throw usage_error("unknown integration strategy: '" + s + "'");
}

Captioner default_captioner(std::size_t max_tokens) {
  return [max_tokens](const ToyModel& model, const ImageTensor& image) {
    return model.generate(image, "describe the image", max_tokens);
  };
}

namespace {

std::string caption_reinfer(const ToyModel& model, const QuerySample& sample,
                            const ImageTensor& image, const TextualSafetyPrompt& tau,
                            const Captioner& captioner, std::size_t max_tokens,
                            EcsoResult& result) {
  const std::string caption = captioner(model, image);
  result.audit.push_back("captioned image");
  // Text-only re-inference: caption replaces the visual input.
  ImageTensor blank(image.height(), image.width());
  const std::string text =
      compose_text(tau, "Image caption: " + caption + "\n" + sample.text);
  result.audit.push_back("re-inferred from caption");
  return model.generate(blank, text, max_tokens);
}

// The four-step ECSO procedure on one (image, text) input.
std::string ecso_core(const ToyModel& model, const QuerySample& sample,
                      const ImageTensor& image, Judge& judge,
                      const TextualSafetyPrompt& tau, const Captioner& captioner,
                      std::size_t max_tokens, EcsoResult& result) {
  const std::string text = compose_text(tau, sample.text);
  const std::string initial = model.generate(image, text, max_tokens);
  result.audit.push_back("initial response generated");
  const JudgeVerdict verdict = judge.assess(sample, initial);
  ++result.judgments;
  if (verdict.resisted) {
    result.audit.push_back("self-assessment: safe");
    return initial;
  }
  result.audit.push_back("self-assessment: unsafe");
  return caption_reinfer(model, sample, image, tau, captioner, max_tokens, result);
}

}  // namespace

std::string printable_bytes(const std::string& raw) {
  std::ostringstream out;
  for (unsigned char b : raw) {
    if (b >= 0x20 && b < 0x7f && b != '\\') {
      out << static_cast<char>(b);
    } else {
      out << "\\x" << std::hex << std::setw(2) << std::setfill('0')
          << static_cast<int>(b) << std::dec;
    }
  }
  return out.str();
}

EcsoResult ecso_pipeline(const ToyModel& model, const QuerySample& sample, Judge& judge,
                         IntegrationStrategy strategy, const VisualSafetyPrompt& vsp,
                         const TextualSafetyPrompt& tau, const Captioner& captioner,
                         std::size_t max_tokens) {
  EcsoResult result;
  if (strategy == IntegrationStrategy::static_) {
    // VSP applied exactly once, before step 1.
    const ImageTensor transformed = apply_vsp(sample.image, vsp);
    ++result.vsp_applications;
    result.audit.push_back("vsp applied (static)");
    result.final_response =
        ecso_core(model, sample, transformed, judge, tau, captioner, max_tokens, result);
    return result;
  }

  // Adaptive: plain ECSO first; the VSP enters only after an unsafe verdict.
  const std::string text = compose_text(tau, sample.text);
  const std::string initial = model.generate(sample.image, text, max_tokens);
  result.audit.push_back("initial response generated");
  const JudgeVerdict verdict = judge.assess(sample, initial);
  ++result.judgments;
  if (verdict.resisted) {
    result.audit.push_back("self-assessment: safe");
    result.final_response = initial;
    return result;
  }
  result.audit.push_back("self-assessment: unsafe");
  const ImageTensor transformed = apply_vsp(sample.image, vsp);
  ++result.vsp_applications;
  result.audit.push_back("vsp applied (adaptive)");
  const std::string second = model.generate(transformed, text, max_tokens);
  result.audit.push_back("re-evaluated with vsp");
  const JudgeVerdict second_verdict = judge.assess(sample, second);
  ++result.judgments;
  if (second_verdict.resisted) {
    result.audit.push_back("second assessment: safe");
    result.final_response = second;
    return result;
  }
  result.audit.push_back("second assessment: unsafe");
  result.final_response =
      caption_reinfer(model, sample, transformed, tau, captioner, max_tokens, result);
  return result;
}

json EvalReport::to_json() const {
  json per = json::array();
  for (const auto& s : per_sample) {
    per.push_back({{"id", s.id},
                   {"response", printable_bytes(s.response)},
                   {"resisted", s.resisted},
                   {"judge", s.judge_id}});
  }
  return json{{"per_sample", per},
              {"rsr", rsr},
              {"utility_proxy", utility},
              {"config_fingerprint", config_fingerprint}};
}

EvalReport run_eval(const ToyModel& model, const DatasetSplit& eval_split,
                    const std::optional<VisualSafetyPrompt>& vsp,
                    const TextualSafetyPrompt& tau, Judge& judge,
                    const HarmfulnessVector& v, const EvalOptions& options) {
  EvalReport report;
  std::size_t malicious = 0, resisted = 0;
  for (const auto& sample : eval_split.samples) {
    if (sample.label != Label::malicious) continue;
    ++malicious;
    const ImageTensor image = vsp ? apply_vsp(sample.image, *vsp) : sample.image;
    const std::string response = generate_with_intervention(
        model, image, sample.text, v, options.intervene, tau, options.max_tokens);
    const JudgeVerdict verdict = judge.assess(sample, response);
    if (verdict.resisted) ++resisted;
    report.per_sample.push_back({sample.id, response, verdict.resisted, verdict.judge_id});
  }
  if (malicious == 0) throw usage_error("run_eval: evaluation split has no malicious samples");
  report.rsr = static_cast<double>(resisted) / static_cast<double>(malicious);
  if (eval_split.count(Label::benign) > 0) {
    report.utility = utility_proxy(model, eval_split, vsp, tau);
  }
  std::ostringstream fp;
  fp << "model=" << std::hex << model.params_checksum() << std::dec
     << ";layer=" << v.layer << ";intervene=" << intervention_mode_to_string(options.intervene)
     << ";vsp=" << (vsp ? "yes" : "no") << ";judge=" << judge.id();
  report.config_fingerprint = fp.str();
  return report;
}

}  // namespace davsp
