#include "davsp/persist.hpp"

namespace davsp {

using nlohmann::json;

void save_vector(const ArtifactStore& store, const std::string& name,
                 const HarmfulnessVector& v) {
  std::vector<float> data(v.v.begin(), v.v.end());
  store.save_tensor(name, Tensor({v.v.size()}, std::move(data)));
  store.save_json(name, json{{"kind", "harmfulness-vector"},
                             {"layer", v.layer},
                             {"mu_plus", v.mu_plus},
                             {"mu_minus", v.mu_minus},
                             {"n_malicious", v.n_malicious},
                             {"m_benign", v.m_benign},
                             {"model_fingerprint", v.model_fingerprint},
                             {"has_margins", v.has_margins}});
}

HarmfulnessVector load_vector(const ArtifactStore& store, const std::string& name) {
  const Tensor t = store.load_tensor(name);
  const json j = store.load_json(name);
  HarmfulnessVector v;
  v.v.assign(t.values().begin(), t.values().end());
  v.layer = j.at("layer").get<std::size_t>();
  v.mu_plus = j.at("mu_plus").get<double>();
  v.mu_minus = j.at("mu_minus").get<double>();
  v.n_malicious = j.at("n_malicious").get<std::size_t>();
  v.m_benign = j.at("m_benign").get<std::size_t>();
  v.model_fingerprint = j.at("model_fingerprint").get<std::uint64_t>();
  v.has_margins = j.at("has_margins").get<bool>();
  return v;
}

void save_vsp(const ArtifactStore& store, const std::string& name,
              const VisualSafetyPrompt& vsp, StepRule step_rule,
              const std::string& training_fingerprint) {
  store.save_tensor(name, vsp.delta);
  store.save_json(name, json{{"kind", "visual-safety-prompt"},
                             {"padding", vsp.padding},
                             {"height", vsp.height()},
                             {"width", vsp.width()},
                             {"step_rule", step_rule_to_string(step_rule)},
                             {"training_fingerprint", training_fingerprint}});
}

VisualSafetyPrompt load_vsp(const ArtifactStore& store, const std::string& name) {
  const json j = store.load_json(name);
  VisualSafetyPrompt vsp;
  vsp.delta = store.load_tensor(name);
  vsp.padding = j.at("padding").get<std::size_t>();
  vsp.mask = make_mask(j.at("height").get<std::size_t>(), j.at("width").get<std::size_t>(),
                       vsp.padding);
  vsp.validate();
  return vsp;
}

void save_model_manifest(const ArtifactStore& store, const std::string& name,
                         const ToyModel& model) {
  const ToyArch& a = model.arch();
  store.save_json(name, json{{"kind", "toy-model-manifest"},
                             {"seed", model.seed()},
                             {"d", a.d},
                             {"heads", a.heads},
                             {"layers", a.layers},
                             {"vocab", a.vocab},
                             {"patch_grid", a.patch_grid},
                             {"max_seq", a.max_seq},
                             {"params_checksum", model.params_checksum()}});
}

ToyModel load_model_from_manifest(const ArtifactStore& store, const std::string& name) {
  const json j = store.load_json(name);
  ToyArch a;
  a.d = j.at("d").get<std::size_t>();
  a.heads = j.at("heads").get<std::size_t>();
  a.layers = j.at("layers").get<std::size_t>();
  a.vocab = j.at("vocab").get<std::size_t>();
  a.patch_grid = j.at("patch_grid").get<std::size_t>();
  a.max_seq = j.at("max_seq").get<std::size_t>();
  ToyModel model(j.at("seed").get<std::uint64_t>(), a);
  if (j.contains("params_checksum") &&
      model.params_checksum() != j.at("params_checksum").get<std::uint64_t>()) {
    throw io_error("model manifest '" + name + "': regenerated weights do not match checksum");
  }
  return model;
}

}  // namespace davsp
