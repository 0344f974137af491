#include "davsp/model.hpp"

#include <cmath>
#include <cstring>

#include "davsp/rng.hpp"

namespace davsp {

using ad::Graph;
using ad::Mat;
using NodeId = Graph::NodeId;

void ToyArch::validate() const {
  if (d == 0 || heads == 0 || layers == 0 || vocab == 0 || patch_grid == 0 || max_seq == 0) {
    throw usage_error("toy arch dimensions must be positive");
  }
  if (d % heads != 0) throw usage_error("toy arch: d must be divisible by heads");
  if (vocab > 256) throw usage_error("toy arch: byte-level vocab is capped at 256");
}

namespace {

Mat random_mat(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
  Mat m(rows, cols);
  for (double& x : m.v) x = rng.next_gaussian() * stddev;
  return m;
}

Mat ones_row(std::size_t cols) {
  Mat m(1, cols);
  for (double& x : m.v) x = 1.0;
  return m;
}

void hash_mat(std::uint64_t& h, const Mat& m) {
  for (double x : m.v) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof(bits));
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
}

}  // namespace

ToyModel::ToyModel(std::uint64_t seed, ToyArch arch) : arch_(arch), seed_(seed) {
  arch_.validate();
  Rng rng(seed);
  const double emb_std = 0.2;
  const std::size_t d = arch_.d;
  Rng r0 = rng.fork(1);
  token_emb_ = random_mat(r0, arch_.vocab, d, emb_std);
  Rng r1 = rng.fork(2);
  pos_emb_ = random_mat(r1, arch_.max_seq, d, emb_std);
  Rng r2 = rng.fork(3);
  patch_proj_ = random_mat(r2, 3, d, 1.0);
  patch_bias_ = Mat(1, d);
  layers_.resize(arch_.layers);
  for (std::size_t li = 0; li < arch_.layers; ++li) {
    Rng rl = rng.fork(10 + li);
    const double w_std = 1.0 / std::sqrt(static_cast<double>(d));
    auto& L = layers_[li];
    L.wq = random_mat(rl, d, d, w_std);
    L.wk = random_mat(rl, d, d, w_std);
    L.wv = random_mat(rl, d, d, w_std);
    L.wo = random_mat(rl, d, d, w_std);
    L.ln1_g = ones_row(d);
    L.ln2_g = ones_row(d);
    L.w1 = random_mat(rl, d, 4 * d, w_std);
    L.b1 = Mat(1, 4 * d);
    L.w2 = random_mat(rl, 4 * d, d, 1.0 / std::sqrt(static_cast<double>(4 * d)));
    L.b2 = Mat(1, d);
  }
  final_ln_g_ = ones_row(d);
  Rng r3 = rng.fork(100);
  unembed_ = random_mat(r3, d, arch_.vocab, 1.0 / std::sqrt(static_cast<double>(d)));
}

std::uint64_t ToyModel::params_checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  hash_mat(h, token_emb_);
  hash_mat(h, pos_emb_);
  hash_mat(h, patch_proj_);
  hash_mat(h, patch_bias_);
  for (const auto& L : layers_) {
    hash_mat(h, L.wq);
    hash_mat(h, L.wk);
    hash_mat(h, L.wv);
    hash_mat(h, L.wo);
    hash_mat(h, L.ln1_g);
    hash_mat(h, L.ln2_g);
    hash_mat(h, L.w1);
    hash_mat(h, L.b1);
    hash_mat(h, L.w2);
    hash_mat(h, L.b2);
  }
  hash_mat(h, final_ln_g_);
  hash_mat(h, unembed_);
  return h;
}

std::vector<std::uint8_t> ToyModel::tokenize(const std::string& text) {
  return std::vector<std::uint8_t>(text.begin(), text.end());
}

std::string ToyModel::detokenize(const std::vector<std::uint8_t>& tokens) {
  return std::string(tokens.begin(), tokens.end());
}

Mat ToyModel::patch_features(const ImageTensor& image) const {
  const std::size_t g = arch_.patch_grid;
  const std::size_t h = image.height(), w = image.width();
  Mat feats(g * g, 3);
  for (std::size_t pi = 0; pi < g; ++pi) {
    const std::size_t y0 = pi * h / g, y1 = (pi + 1) * h / g;
    for (std::size_t pj = 0; pj < g; ++pj) {
      const std::size_t x0 = pj * w / g, x1 = (pj + 1) * w / g;
      const double npix = static_cast<double>((y1 - y0) * (x1 - x0));
      for (std::size_t c = 0; c < 3; ++c) {
        double s = 0.0;
        for (std::size_t y = y0; y < y1; ++y)
          for (std::size_t x = x0; x < x1; ++x) s += image.at(c, y, x);
        feats(pi * g + pj, c) = s / npix;
      }
    }
  }
  return feats;
}

void ToyModel::scatter_patch_grad(const Mat& patch_grad, const ImageTensor& image,
                                  Tensor& out) const {
  const std::size_t g = arch_.patch_grid;
  const std::size_t h = image.height(), w = image.width();
  for (std::size_t pi = 0; pi < g; ++pi) {
    const std::size_t y0 = pi * h / g, y1 = (pi + 1) * h / g;
    for (std::size_t pj = 0; pj < g; ++pj) {
      const std::size_t x0 = pj * w / g, x1 = (pj + 1) * w / g;
      const double inv_npix = 1.0 / static_cast<double>((y1 - y0) * (x1 - x0));
      for (std::size_t c = 0; c < 3; ++c) {
        const double gpx = patch_grad(pi * g + pj, c) * inv_npix;
        for (std::size_t y = y0; y < y1; ++y)
          for (std::size_t x = x0; x < x1; ++x) out.at(c, y, x) = static_cast<float>(gpx);
      }
    }
  }
}

ToyModel::ForwardOut ToyModel::forward(const ImageTensor& image,
                                       const std::vector<std::uint8_t>& tokens,
                                       const std::optional<InterventionHook>& hook,
                                       bool want_logits, std::size_t hook_row) const {
  image.validate();
  if (image.height() < arch_.patch_grid || image.width() < arch_.patch_grid) {
    throw numeric_error("image smaller than patch grid");
  }
  const std::size_t d = arch_.d;
  const std::size_t n_vis = arch_.patch_grid * arch_.patch_grid;
  const std::size_t seq = n_vis + tokens.size();
  if (tokens.empty()) throw usage_error("input text tokenizes to zero tokens");
  if (seq > arch_.max_seq) throw numeric_error("sequence overflow beyond max length");
  if (hook && hook->layer >= arch_.layers) throw usage_error("hook layer out of range");

  ForwardOut out;
  Graph& g = out.graph;

  out.patch_leaf = g.leaf(patch_features(image));
  NodeId vis = g.add_rowvec(g.matmul(out.patch_leaf, g.leaf(patch_proj_)),
                            g.leaf(patch_bias_));
  Mat tok(tokens.size(), d);
  for (std::size_t i = 0; i < tokens.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) tok(i, j) = token_emb_(tokens[i], j);
  NodeId x = g.concat_rows(vis, g.leaf(std::move(tok)));
  Mat pos(seq, d);
  for (std::size_t i = 0; i < seq; ++i)
    for (std::size_t j = 0; j < d; ++j) pos(i, j) = pos_emb_(i, j);
  x = g.add(x, g.leaf(std::move(pos)));

  const std::size_t dh = d / arch_.heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  out.input_len = seq;  // all tokens here are input tokens; generation appends

  for (std::size_t li = 0; li < arch_.layers; ++li) {
    const auto& L = layers_[li];
    NodeId hn = g.rmsnorm(x, g.leaf(L.ln1_g));
    NodeId q = g.matmul(hn, g.leaf(L.wq));
    NodeId k = g.matmul(hn, g.leaf(L.wk));
    NodeId v = g.matmul(hn, g.leaf(L.wv));
    std::vector<NodeId> heads;
    for (std::size_t hi = 0; hi < arch_.heads; ++hi) {
      NodeId qh = g.col_slice(q, hi * dh, dh);
      NodeId kh = g.col_slice(k, hi * dh, dh);
      NodeId vh = g.col_slice(v, hi * dh, dh);
      NodeId scores = g.scale(g.matmul(qh, kh, false, true), att_scale);
      NodeId probs = g.causal_softmax(scores);
      heads.push_back(g.matmul(probs, vh));
    }
    NodeId attn = g.matmul(g.concat_cols(heads), g.leaf(L.wo));
    x = g.add(x, attn);
    NodeId mn = g.rmsnorm(x, g.leaf(L.ln2_g));
    NodeId hid = g.tanh_op(g.add_rowvec(g.matmul(mn, g.leaf(L.w1)), g.leaf(L.b1)));
    NodeId mlp = g.add_rowvec(g.matmul(hid, g.leaf(L.w2)), g.leaf(L.b2));
    x = g.add(x, mlp);
    out.layer_out.push_back(x);
    if (hook && hook->layer == li) {
      const Mat& blk = g.val(x);
      if (hook_row >= blk.rows) throw numeric_error("hook row out of range");
      HiddenState h(d);
      for (std::size_t j = 0; j < d; ++j) h[j] = blk(hook_row, j);
      HiddenState edited = hook->edit(h);
      if (edited.size() != d) throw numeric_error("hook edit changed hidden width");
      x = g.set_row_const(x, hook_row, edited);
    }
  }

  if (want_logits) {
    NodeId fn = g.rmsnorm(x, g.leaf(final_ln_g_));
    out.logits = g.matmul(fn, g.leaf(unembed_));
  }
  return out;
}

HiddenState ToyModel::forward_hidden(const ImageTensor& image, const std::string& text,
                                     std::size_t layer) const {
  if (layer >= arch_.layers) throw usage_error("layer index out of range");
  auto tokens = tokenize(text);
  ForwardOut fwd = forward(image, tokens, std::nullopt, /*want_logits=*/false);
  const Mat& h = fwd.graph.val(fwd.layer_out[layer]);
  const std::size_t row = fwd.input_len - 1;
  HiddenState out(arch_.d);
  for (std::size_t j = 0; j < arch_.d; ++j) out[j] = h(row, j);
  return out;
}

Mat ToyModel::forward_logits(const ImageTensor& image, const std::string& text,
                             const std::vector<std::uint8_t>& target) const {
  if (target.empty()) throw usage_error("target must be non-empty");
  auto tokens = tokenize(text);
  if (tokens.empty()) throw usage_error("input text tokenizes to zero tokens");
  const std::size_t prefix_len = tokens.size();
  // Teacher forcing: position t is conditioned on image + text + target[0..t-1].
  tokens.insert(tokens.end(), target.begin(), target.end() - 1);
  ForwardOut fwd = forward(image, tokens, std::nullopt, /*want_logits=*/true);
  const Mat& all = fwd.graph.val(fwd.logits);
  const std::size_t first = arch_.patch_grid * arch_.patch_grid + prefix_len - 1;
  Mat out(target.size(), arch_.vocab);
  for (std::size_t t = 0; t < target.size(); ++t)
    for (std::size_t j = 0; j < arch_.vocab; ++j) out(t, j) = all(first + t, j);
  return out;
}

std::pair<LossValue, Tensor> ToyModel::loss_and_grad(const ImageTensor& image,
                                                     const std::string& text,
                                                     const LossSpec& spec) const {
  auto tokens = tokenize(text);
  if (tokens.empty()) throw usage_error("input text tokenizes to zero tokens");
  const std::size_t prefix_len = tokens.size();
  const bool want_ce = !spec.ce_target.empty() && spec.ce_weight != 0.0;
  if (want_ce) {
    tokens.insert(tokens.end(), spec.ce_target.begin(), spec.ce_target.end() - 1);
  }
  ForwardOut fwd = forward(image, tokens, std::nullopt, want_ce);
  Graph& g = fwd.graph;
  const std::size_t last_input = arch_.patch_grid * arch_.patch_grid + prefix_len - 1;

  LossValue value;
  std::optional<NodeId> total;
  if (spec.proj_form != LossSpec::ProjForm::none) {
    if (spec.direction.size() != arch_.d) throw numeric_error("direction length mismatch");
    if (spec.layer >= arch_.layers) throw usage_error("loss layer out of range");
    NodeId s = g.row_dot_const(fwd.layer_out[spec.layer], last_input, spec.direction);
    value.projection = g.scalar(s);
    NodeId term = s;
    if (spec.proj_form == LossSpec::ProjForm::push_above) {
      term = g.relu(g.add_scalar_const(g.scale(s, -1.0), spec.margin));
    } else if (spec.proj_form == LossSpec::ProjForm::push_below) {
      term = g.relu(g.add_scalar_const(s, -spec.margin));
    }
    value.proj_term = g.scalar(term);
    total = g.scale(term, spec.proj_weight);
  }
  if (want_ce) {
    std::vector<std::size_t> targets(spec.ce_target.begin(), spec.ce_target.end());
    NodeId rows = g.row_slice(fwd.logits, last_input, spec.ce_target.size());
    NodeId ce = g.cross_entropy(rows, targets);
    value.ce_term = g.scalar(ce);
    NodeId weighted = g.scale(ce, spec.ce_weight);
    total = total ? g.add(*total, weighted) : weighted;
  }
  if (!total) throw usage_error("loss spec has no terms");
  value.total = g.scalar(*total);

  g.backward(*total);
  Tensor grad({3, image.height(), image.width()});
  scatter_patch_grad(g.grad(fwd.patch_leaf), image, grad);
  return {value, std::move(grad)};
}

LossValue ToyModel::loss_only(const ImageTensor& image, const std::string& text,
                              const LossSpec& spec) const {
  // The forward pass dominates; reuse the full path and drop the gradient.
  return loss_and_grad(image, text, spec).first;
}

std::string ToyModel::generate(const ImageTensor& image, const std::string& text,
                               std::size_t max_tokens,
                               const std::optional<InterventionHook>& hook) const {
  if (max_tokens < 1) throw usage_error("max_tokens must be >= 1");
  auto input_tokens = tokenize(text);
  if (input_tokens.empty()) throw usage_error("input text tokenizes to zero tokens");
  const std::size_t last_input = arch_.patch_grid * arch_.patch_grid + input_tokens.size() - 1;

  std::vector<std::uint8_t> generated;
  std::vector<std::uint8_t> tokens = input_tokens;
  while (generated.size() < max_tokens) {
    std::optional<InterventionHook> step_hook = hook;
    if (hook && !hook->reapply_each_step && !generated.empty()) step_hook.reset();

    // The hook edits the last-input-token row before later layers consume it.
    ForwardOut fwd = forward(image, tokens, step_hook, /*want_logits=*/true, last_input);
    const Mat& logits = fwd.graph.val(fwd.logits);
    const std::size_t last_row = logits.rows - 1;
    std::size_t best = 0;
    double best_v = logits(last_row, 0);
    for (std::size_t j = 1; j < arch_.vocab; ++j) {
      if (logits(last_row, j) > best_v) {
        best_v = logits(last_row, j);
        best = j;
      }
    }
    const std::uint8_t byte = static_cast<std::uint8_t>(best);
    generated.push_back(byte);
    if (byte == kEosByte) break;
    tokens.push_back(byte);
    if (arch_.patch_grid * arch_.patch_grid + tokens.size() > arch_.max_seq) break;
  }
  return detokenize(generated);
}

}  // namespace davsp
