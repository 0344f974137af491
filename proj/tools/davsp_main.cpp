// davsp: pipeline CLI — synthesize data, build the harmfulness vector, train
// the visual safety prompt, evaluate, and red-team it on the toy model.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "davsp/eval.hpp"
#include "davsp/image_io.hpp"
#include "davsp/persist.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace davsp;

namespace {

struct CommonOpts {
  std::string data_dir;
  std::string artifacts_dir;
  std::string profile = "toy";
  std::string config_path;
};

struct Profile {
  std::size_t height = 64, width = 64;
  TrainConfig train;
};

Profile resolve_profile(const std::string& name) {
  Profile p;
  if (name == "toy") {
    p.height = p.width = 64;
    p.train.padding = 8;
    p.train.steps = 200;
  } else if (name == "paper") {
    // Paper-scale hyperparameters; images must be large enough for p=30.
    p.height = p.width = 336;
    p.train.padding = 30;
    p.train.steps = 1200;
  } else {
    throw usage_error("unknown profile: '" + name + "' (expected toy or paper)");
  }
  p.train.layer = 2;  // middle layer of the 4-layer toy decoder
  p.train.lambda = 0.1;
  p.train.alpha = 1.0 / 255.0;
  p.train.batch = 2;
  return p;
}

// Optional JSON config file merged *under* explicit flags: a key applies only
// when the corresponding flag was not given on the command line.
json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config file: " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw io_error("bad config json: " + std::string(e.what()));
  }
}

template <typename T>
void merge_under(const CLI::Option* opt, const json& cfg, const char* key, T& value) {
  if (opt->count() == 0 && cfg.contains(key)) value = cfg.at(key).get<T>();
}

void write_manifest(const fs::path& artifacts, const std::string& subcommand,
                    const json& config, const json& inputs, const json& outputs,
                    double wall_seconds) {
  ArtifactStore store(artifacts);
  store.save_json("manifest_" + subcommand, json{{"subcommand", subcommand},
                                                 {"config", config},
                                                 {"inputs", inputs},
                                                 {"outputs", outputs},
                                                 {"wall_clock_seconds", wall_seconds}});
}

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::unique_ptr<Judge> make_judge(const std::string& kind) {
  if (kind == "keyword") return std::make_unique<KeywordJudge>();
  if (kind == "remote") return std::make_unique<RemoteJudge>(RemoteJudgeConfig::from_env());
  throw usage_error("unknown judge: '" + kind + "'");
}

int run(int argc, char** argv) {
  CLI::App app{"DAVSP safety-alignment pipeline (toy-scale)"};
  app.require_subcommand(1);

  // ---- gen-synthetic ----
  auto* gen = app.add_subcommand("gen-synthetic", "generate the synthetic dataset + splits");
  std::string gen_out = "data";
  std::uint64_t gen_seed = 42;
  std::size_t gen_mal = 50, gen_ben = 50, gen_h = 64, gen_w = 64;
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--seed", gen_seed, "rng seed");
  auto* mal_opt = gen->add_option("--mal", gen_mal, "malicious sample count");
  auto* ben_opt = gen->add_option("--ben", gen_ben, "benign sample count");
  gen->add_option("--height", gen_h);
  gen->add_option("--width", gen_w);

  // ---- build-vector ----
  auto* bv = app.add_subcommand("build-vector", "construct the harmfulness vector");
  CommonOpts bv_opts;
  std::uint64_t bv_model_seed = 7;
  std::size_t bv_layer = 2;
  bv->add_option("--data", bv_opts.data_dir)->required();
  bv->add_option("--artifacts", bv_opts.artifacts_dir)->required();
  bv->add_option("--model-seed", bv_model_seed, "toy model weight seed");
  auto* bv_layer_opt = bv->add_option("--layer", bv_layer, "decoder layer for supervision");
  bv->add_option("--config", bv_opts.config_path, "json config merged under flags");

  // ---- train ----
  auto* tr = app.add_subcommand("train", "train the visual safety prompt");
  CommonOpts tr_opts;
  TrainConfig tr_cfg;
  std::string tr_step_rule = "signed";
  tr->add_option("--data", tr_opts.data_dir)->required();
  tr->add_option("--artifacts", tr_opts.artifacts_dir)->required();
  tr->add_option("--profile", tr_opts.profile, "toy|paper hyperparameter profile");
  auto* tr_p = tr->add_option("--padding", tr_cfg.padding);
  auto* tr_layer = tr->add_option("--layer", tr_cfg.layer);
  auto* tr_lambda = tr->add_option("--lambda", tr_cfg.lambda);
  auto* tr_alpha = tr->add_option("--alpha", tr_cfg.alpha);
  auto* tr_steps = tr->add_option("--steps", tr_cfg.steps);
  auto* tr_batch = tr->add_option("--batch", tr_cfg.batch);
  auto* tr_seed = tr->add_option("--seed", tr_cfg.seed);
  auto* tr_rule = tr->add_option("--step-rule", tr_step_rule, "signed|raw");
  tr->add_option("--config", tr_opts.config_path);

  // ---- eval ----
  auto* ev = app.add_subcommand("eval", "evaluate RSR and the utility proxy");
  CommonOpts ev_opts;
  bool ev_vsp = false;
  std::string ev_intervene = "none", ev_judge = "keyword", ev_ecso = "off";
  std::string ev_out = "report.json";
  std::size_t ev_max_tokens = 24;
  ev->add_option("--data", ev_opts.data_dir)->required();
  ev->add_option("--artifacts", ev_opts.artifacts_dir)->required();
  ev->add_flag("--vsp", ev_vsp, "apply the trained visual safety prompt");
  ev->add_option("--intervene", ev_intervene)->check(CLI::IsMember({"up", "down", "none"}));
  ev->add_option("--judge", ev_judge)->check(CLI::IsMember({"keyword", "remote"}));
  ev->add_option("--ecso", ev_ecso)->check(CLI::IsMember({"off", "adaptive", "static"}));
  ev->add_option("--out", ev_out, "report path");
  ev->add_option("--max-tokens", ev_max_tokens);

  // ---- attack ----
  auto* at = app.add_subcommand("attack", "adaptive white-box attack on eval images");
  CommonOpts at_opts;
  AttackConfig at_cfg;
  std::string at_out = "attack_report.json";
  std::size_t at_limit = 10;
  at->add_option("--data", at_opts.data_dir)->required();
  at->add_option("--artifacts", at_opts.artifacts_dir)->required();
  at->add_option("--steps", at_cfg.steps);
  at->add_option("--alpha", at_cfg.alpha);
  at->add_option("--beta", at_cfg.beta);
  at->add_option("--prefix", at_cfg.affirmative_prefix);
  at->add_option("--limit", at_limit, "number of malicious samples to attack");
  at->add_option("--out", at_out);

  // ---- inspect ----
  auto* in = app.add_subcommand("inspect", "print artifact metadata");
  std::string in_artifacts, in_name;
  in->add_option("--artifacts", in_artifacts)->required();
  in->add_option("--name", in_name)->required();

  CLI11_PARSE(app, argc, argv);

  const TextualSafetyPrompt tau = default_textual_prompt();

  if (gen->parsed()) {
    Timer timer;
    if (gen_mal < 1 || gen_ben < 1) {
      throw usage_error("--mal and --ben must be >= 1");
    }
    (void)mal_opt;
    (void)ben_opt;
    Rng rng(gen_seed);
    DatasetSplit all = gen_synthetic(rng, gen_mal, gen_ben, gen_h, gen_w);
    save_dataset(all, gen_out, "synthetic");
    Rng split_rng = rng.fork(1);
    PipelineSplits splits = split_for_pipeline(all, split_rng, 0.4, 0.4, 0.2);
    save_dataset(splits.vector_construction, gen_out, "vector");
    save_dataset(splits.prompt_training, gen_out, "train");
    save_dataset(splits.evaluation, gen_out, "eval");
    const json cfg = {{"seed", gen_seed}, {"mal", gen_mal},    {"ben", gen_ben},
                      {"height", gen_h},  {"width", gen_w}};
    write_manifest(gen_out, "gen-synthetic", cfg, json::object(),
                   json{{"dataset", gen_out}}, timer.seconds());
    std::cout << "wrote " << all.samples.size() << " samples to " << gen_out << "\n";
    return 0;
  }

  if (bv->parsed()) {
    Timer timer;
    const json cfg_file = load_config(bv_opts.config_path);
    merge_under(bv_layer_opt, cfg_file, "layer", bv_layer);
    ToyArch arch;
    ToyModel model(bv_model_seed, arch);
    ArtifactStore store(bv_opts.artifacts_dir);
    save_model_manifest(store, "model", model);
    DatasetSplit vec_split = load_dataset(fs::path(bv_opts.data_dir) / "vector.jsonl");

    DatasetSplit mal_split{"mal", {}, Provenance::vector_construction};
    DatasetSplit ben_split{"ben", {}, Provenance::vector_construction};
    for (const auto& s : vec_split.samples) {
      (s.label == Label::malicious ? mal_split : ben_split).samples.push_back(s);
    }
    ActivationSet mal = collect_activations(model, mal_split, bv_layer, tau, std::nullopt,
                                            Label::malicious);
    ActivationSet ben =
        collect_activations(model, ben_split, bv_layer, tau, std::nullopt, Label::benign);
    HarmfulnessVector v = compute_margins(build_vector(mal, ben), mal, ben);
    v.model_fingerprint = model.params_checksum();
    save_vector(store, "vector", v);
    const json cfg = {{"model_seed", bv_model_seed}, {"layer", bv_layer}};
    write_manifest(bv_opts.artifacts_dir, "build-vector", cfg,
                   json{{"data", bv_opts.data_dir}}, json{{"vector", "vector"}},
                   timer.seconds());
    std::cout << "vector built: mu_plus=" << v.mu_plus << " mu_minus=" << v.mu_minus << "\n";
    return 0;
  }

  if (tr->parsed()) {
    Timer timer;
    const json cfg_file = load_config(tr_opts.config_path);
    const Profile profile = resolve_profile(tr_opts.profile);
    if (tr_p->count() == 0) tr_cfg.padding = profile.train.padding;
    if (tr_layer->count() == 0) tr_cfg.layer = profile.train.layer;
    if (tr_lambda->count() == 0) tr_cfg.lambda = profile.train.lambda;
    if (tr_alpha->count() == 0) tr_cfg.alpha = profile.train.alpha;
    if (tr_steps->count() == 0) tr_cfg.steps = profile.train.steps;
    if (tr_batch->count() == 0) tr_cfg.batch = profile.train.batch;
    merge_under(tr_p, cfg_file, "padding", tr_cfg.padding);
    merge_under(tr_layer, cfg_file, "layer", tr_cfg.layer);
    merge_under(tr_lambda, cfg_file, "lambda", tr_cfg.lambda);
    merge_under(tr_alpha, cfg_file, "alpha", tr_cfg.alpha);
    merge_under(tr_steps, cfg_file, "steps", tr_cfg.steps);
    merge_under(tr_batch, cfg_file, "batch", tr_cfg.batch);
    merge_under(tr_seed, cfg_file, "seed", tr_cfg.seed);
    merge_under(tr_rule, cfg_file, "step_rule", tr_step_rule);
    tr_cfg.step_rule = step_rule_from_string(tr_step_rule);

    ArtifactStore store(tr_opts.artifacts_dir);
    ToyModel model = load_model_from_manifest(store, "model");
    HarmfulnessVector v = load_vector(store, "vector");
    DatasetSplit train_split = load_dataset(fs::path(tr_opts.data_dir) / "train.jsonl");
    Rng rng(tr_cfg.seed);
    TrainResult result = train_vsp(tr_cfg, model, v, train_split, tau, rng);
    save_vsp(store, "vsp", result.vsp, tr_cfg.step_rule,
             "seed=" + std::to_string(tr_cfg.seed));
    write_file_atomic(fs::path(tr_opts.artifacts_dir) / "trace.csv",
                      result.trace.to_csv());
    const json cfg = {{"padding", tr_cfg.padding}, {"layer", tr_cfg.layer},
                      {"lambda", tr_cfg.lambda},   {"alpha", tr_cfg.alpha},
                      {"steps", tr_cfg.steps},     {"batch", tr_cfg.batch},
                      {"seed", tr_cfg.seed},       {"step_rule", tr_step_rule},
                      {"profile", tr_opts.profile}};
    write_manifest(tr_opts.artifacts_dir, "train", cfg, json{{"data", tr_opts.data_dir}},
                   json{{"vsp", "vsp"}, {"trace", "trace.csv"}}, timer.seconds());
    const double first = result.trace.steps.empty() ? 0.0 : result.trace.steps.front().l_proj;
    const double last = result.trace.steps.empty() ? 0.0 : result.trace.steps.back().l_proj;
    std::cout << "trained " << tr_cfg.steps << " steps; l_proj " << first << " -> " << last
              << "\n";
    return 0;
  }

  if (ev->parsed()) {
    Timer timer;
    ArtifactStore store(ev_opts.artifacts_dir);
    ToyModel model = load_model_from_manifest(store, "model");
    HarmfulnessVector v = load_vector(store, "vector");
    std::optional<VisualSafetyPrompt> vsp;
    if (ev_vsp) vsp = load_vsp(store, "vsp");
    DatasetSplit eval_split = load_dataset(fs::path(ev_opts.data_dir) / "eval.jsonl");
    auto judge = make_judge(ev_judge);

    json report_json;
    if (ev_ecso == "off") {
      EvalOptions options;
      options.intervene = intervention_mode_from_string(ev_intervene);
      options.max_tokens = ev_max_tokens;
      EvalReport report = run_eval(model, eval_split, vsp, tau, *judge, v, options);
      report_json = report.to_json();
    } else {
      if (!vsp) throw usage_error("--ecso requires --vsp (the trained prompt to integrate)");
      const IntegrationStrategy strategy = integration_strategy_from_string(ev_ecso);
      Captioner captioner = default_captioner();
      json per = json::array();
      std::size_t resisted = 0, malicious = 0;
      for (const auto& sample : eval_split.samples) {
        if (sample.label != Label::malicious) continue;
        ++malicious;
        EcsoResult r = ecso_pipeline(model, sample, *judge, strategy, *vsp, tau, captioner,
                                     ev_max_tokens);
        const bool ok = judge->assess(sample, r.final_response).resisted;
        if (ok) ++resisted;
        per.push_back({{"id", sample.id},
                       {"response", printable_bytes(r.final_response)},
                       {"resisted", ok},
                       {"audit", r.audit},
                       {"vsp_applications", r.vsp_applications}});
      }
      if (malicious == 0) throw usage_error("eval split has no malicious samples");
      report_json = {{"per_sample", per},
                     {"rsr", static_cast<double>(resisted) / malicious},
                     {"ecso", ev_ecso}};
    }
    write_file_atomic(ev_out, report_json.dump(2) + "\n");
    const json cfg = {{"vsp", ev_vsp},   {"intervene", ev_intervene},
                      {"judge", ev_judge}, {"ecso", ev_ecso},
                      {"max_tokens", ev_max_tokens}};
    write_manifest(ev_opts.artifacts_dir, "eval", cfg, json{{"data", ev_opts.data_dir}},
                   json{{"report", ev_out}}, timer.seconds());
    std::cout << "rsr=" << report_json["rsr"].get<double>() << " report=" << ev_out << "\n";
    return 0;
  }

  if (at->parsed()) {
    Timer timer;
    ArtifactStore store(at_opts.artifacts_dir);
    ToyModel model = load_model_from_manifest(store, "model");
    HarmfulnessVector v = load_vector(store, "vector");
    VisualSafetyPrompt vsp = load_vsp(store, "vsp");
    DatasetSplit eval_split = load_dataset(fs::path(at_opts.data_dir) / "eval.jsonl");
    at_cfg.layer = v.layer;

    KeywordJudge judge;
    std::size_t attacked = 0;
    std::size_t resisted_clean = 0, resisted_attacked = 0, resisted_attacked_vsp = 0;
    for (const auto& sample : eval_split.samples) {
      if (sample.label != Label::malicious || attacked >= at_limit) continue;
      ++attacked;
      const ImageTensor adv = craft_adaptive_attack(model, v, sample, tau, at_cfg);
      auto judge_gen = [&](const ImageTensor& img) {
        const std::string resp = model.generate(img, compose_text(tau, sample.text), 24);
        return judge.assess(sample, resp).resisted;
      };
      if (judge_gen(sample.image)) ++resisted_clean;
      if (judge_gen(adv)) ++resisted_attacked;
      if (judge_gen(apply_vsp(adv, vsp))) ++resisted_attacked_vsp;
    }
    if (attacked == 0) throw usage_error("no malicious samples to attack");
    const json report = {
        {"samples", attacked},
        {"rsr_clean_no_defense", static_cast<double>(resisted_clean) / attacked},
        {"rsr_attacked_no_defense", static_cast<double>(resisted_attacked) / attacked},
        {"rsr_attacked_with_vsp", static_cast<double>(resisted_attacked_vsp) / attacked},
    };
    write_file_atomic(at_out, report.dump(2) + "\n");
    const json cfg = {{"steps", at_cfg.steps}, {"alpha", at_cfg.alpha},
                      {"beta", at_cfg.beta},   {"prefix", at_cfg.affirmative_prefix},
                      {"limit", at_limit}};
    write_manifest(at_opts.artifacts_dir, "attack", cfg, json{{"data", at_opts.data_dir}},
                   json{{"report", at_out}}, timer.seconds());
    std::cout << report.dump(2) << "\n";
    return 0;
  }

  if (in->parsed()) {
    ArtifactStore store(in_artifacts);
    std::cout << store.load_json(in_name).dump(2) << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
