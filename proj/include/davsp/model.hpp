#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "davsp/autodiff.hpp"
#include "davsp/tensor.hpp"

namespace davsp {

// Activation of one token position: d reals.
using HiddenState = std::vector<double>;

struct ToyArch {
  std::size_t d = 32;
  std::size_t heads = 4;
  std::size_t layers = 4;
  std::size_t vocab = 256;     // byte-level
  std::size_t patch_grid = 8;  // 8x8 average-pooled patches
  std::size_t max_seq = 512;

  void validate() const;
};

// Per-sample differentiable objective evaluated on one forward pass:
//   proj_weight * proj_term(s) + ce_weight * CE(target),
// where s is the projection of the layer-l last-input-token hidden state onto
// a fixed direction. proj_term is a hinge (either side) or the raw scalar.
struct LossSpec {
  enum class ProjForm { none, push_above, push_below, raw };
  ProjForm proj_form = ProjForm::none;
  std::vector<double> direction;  // unit vector, length d
  std::size_t layer = 0;
  double margin = 0.0;
  double proj_weight = 1.0;

  std::vector<std::uint8_t> ce_target;  // empty = no CE term
  double ce_weight = 0.0;
};

struct LossValue {
  double total = 0.0;
  double proj_term = 0.0;  // unweighted hinge/raw value, 0 when absent
  double ce_term = 0.0;    // unweighted mean CE, 0 when absent
  double projection = 0.0; // s(x), when a proj term was requested
};

// Edit applied to the last-input-token hidden state at one layer.
struct InterventionHook {
  std::size_t layer = 0;
  std::function<HiddenState(const HiddenState&)> edit;
  // When false the edit fires only on the first decoding step's forward pass.
  bool reapply_each_step = true;
};

// Frozen byte-level decoder with an average-pooled patch image pathway.
// Deterministic: every operation is a pure function of (weights, inputs).
class ToyModel {
 public:
  ToyModel(std::uint64_t seed, ToyArch arch);

  const ToyArch& arch() const { return arch_; }
  std::uint64_t seed() const { return seed_; }

  static std::vector<std::uint8_t> tokenize(const std::string& text);
  static std::string detokenize(const std::vector<std::uint8_t>& tokens);

  // FNV-1a over all parameter bytes; the frozen-weights witness.
  std::uint64_t params_checksum() const;

  // Hidden state of the last input token at decoder layer `layer` (post-block).
  HiddenState forward_hidden(const ImageTensor& image, const std::string& text,
                             std::size_t layer) const;

  // Teacher-forced logits, one row per target position (rows x vocab).
  ad::Mat forward_logits(const ImageTensor& image, const std::string& text,
                         const std::vector<std::uint8_t>& target) const;

  // Loss value and its exact reverse-mode gradient with respect to every pixel.
  std::pair<LossValue, Tensor> loss_and_grad(const ImageTensor& image,
                                             const std::string& text,
                                             const LossSpec& spec) const;

  // Loss value only (no tape walk beyond the forward pass).
  LossValue loss_only(const ImageTensor& image, const std::string& text,
                      const LossSpec& spec) const;

  // Greedy decoding; stops at the end-of-sequence byte or max_tokens.
  static constexpr std::uint8_t kEosByte = 0;
  std::string generate(const ImageTensor& image, const std::string& text,
                       std::size_t max_tokens,
                       const std::optional<InterventionHook>& hook = std::nullopt) const;

 private:
  struct LayerWeights {
    ad::Mat wq, wk, wv, wo;
    ad::Mat ln1_g, ln2_g;
    ad::Mat w1, b1, w2, b2;
  };

  struct ForwardOut {
    ad::Graph graph;
    ad::Graph::NodeId patch_leaf = 0;       // patch features, g^2 x 3
    std::vector<ad::Graph::NodeId> layer_out;  // block outputs
    ad::Graph::NodeId logits = 0;           // T x vocab
    std::size_t input_len = 0;              // visual + text token count
  };

  // hook_row is the sequence position the hook edits (the last input token);
  // only meaningful when hook is present.
  ForwardOut forward(const ImageTensor& image, const std::vector<std::uint8_t>& tokens,
                     const std::optional<InterventionHook>& hook, bool want_logits,
                     std::size_t hook_row = 0) const;

  ad::Mat patch_features(const ImageTensor& image) const;
  void scatter_patch_grad(const ad::Mat& patch_grad, const ImageTensor& image,
                          Tensor& out) const;

  ToyArch arch_;
  std::uint64_t seed_;
  ad::Mat token_emb_, pos_emb_, patch_proj_, patch_bias_;
  std::vector<LayerWeights> layers_;
  ad::Mat final_ln_g_, unembed_;
};

}  // namespace davsp
