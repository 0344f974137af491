#include "davsp/transform.hpp"

#include <algorithm>
#include <cmath>

namespace davsp {

Tensor make_mask(std::size_t h, std::size_t w, std::size_t p) {
  if (p < 1) throw usage_error("padding width must be >= 1");
  if (2 * p >= std::min(h, w)) {
    throw usage_error("invalid padding: 2p must be smaller than min(H, W)");
  }
  Tensor m({3, h, w});
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const bool border = y < p || y >= h - p || x < p || x >= w - p;
        m.at(c, y, x) = border ? 1.0f : 0.0f;
      }
    }
  }
  return m;
}

Tensor resize_bilinear(const Tensor& src, std::size_t out_h, std::size_t out_w) {
  if (src.rank() != 3) throw numeric_error("resize expects a 3xHxW tensor");
  const std::size_t c_n = src.dim(0), in_h = src.dim(1), in_w = src.dim(2);
  if (out_h < 1 || out_w < 1) throw numeric_error("degenerate resize target");
  Tensor dst({c_n, out_h, out_w});
  const double sy = static_cast<double>(in_h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(in_w) / static_cast<double>(out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    // Half-pixel centers, clamped at the edges (no corner alignment).
    double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(in_h - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, in_h - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(in_w - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, in_w - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < c_n; ++c) {
        // Lerp form keeps constants and identity resizes exact.
        const double top = src.at(c, y0, x0) + wx * (src.at(c, y0, x1) - src.at(c, y0, x0));
        const double bot = src.at(c, y1, x0) + wx * (src.at(c, y1, x1) - src.at(c, y1, x0));
        dst.at(c, y, x) = static_cast<float>(top + wy * (bot - top));
      }
    }
  }
  return dst;
}

ImageTensor resize_and_center(const ImageTensor& image, std::size_t p) {
  image.validate();
  const std::size_t h = image.height(), w = image.width();
  if (p < 1 || 2 * p >= std::min(h, w)) {
    throw usage_error("invalid padding: 2p must be smaller than min(H, W)");
  }
  const std::size_t in_h = h - 2 * p, in_w = w - 2 * p;
  Tensor inner = resize_bilinear(image.t, in_h, in_w);
  Tensor canvas({3, h, w});  // zero canvas
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < in_h; ++y) {
      for (std::size_t x = 0; x < in_w; ++x) {
        canvas.at(c, y + p, x + p) = inner.at(c, y, x);
      }
    }
  }
  return ImageTensor(std::move(canvas));
}

VisualSafetyPrompt VisualSafetyPrompt::zeros(std::size_t h, std::size_t w, std::size_t p) {
  VisualSafetyPrompt vsp;
  vsp.delta = Tensor({3, h, w});
  vsp.mask = make_mask(h, w, p);
  vsp.padding = p;
  return vsp;
}

void VisualSafetyPrompt::validate() const {
  if (!delta.same_shape(mask) || delta.rank() != 3 || delta.dim(0) != 3) {
    throw numeric_error("vsp delta/mask must share a 3xHxW shape");
  }
  Tensor expected = make_mask(height(), width(), padding);
  if (!mask.bit_equal(expected)) {
    throw numeric_error("vsp mask is not the frame mask of width p");
  }
  for (std::size_t i = 0; i < delta.size(); ++i) {
    const float d = delta[i];
    if (!std::isfinite(d) || d < 0.0f || d > 1.0f) {
      throw numeric_error("vsp delta entries must lie in [0,1]");
    }
    if (mask[i] == 0.0f && d != 0.0f) {
      throw numeric_error("vsp delta must be zero off the mask");
    }
  }
}

ImageTensor apply_vsp(const ImageTensor& image, const VisualSafetyPrompt& vsp) {
  vsp.validate();
  ImageTensor out = resize_and_center(image, vsp.padding);
  if (out.height() != vsp.height() || out.width() != vsp.width()) {
    throw numeric_error("vsp shape does not match image shape");
  }
  for (std::size_t i = 0; i < out.t.size(); ++i) {
    if (vsp.mask[i] != 0.0f) out.t[i] = vsp.delta[i];
  }
  return out;
}

ImageTensor apply_additive(const ImageTensor& image, const Tensor& delta, float epsilon) {
  image.validate();
  if (!image.t.same_shape(delta)) throw numeric_error("delta shape must match image");
  if (epsilon < 0.0f) throw usage_error("epsilon must be nonnegative");
  Tensor out = image.t;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float d = std::clamp(delta[i], -epsilon, epsilon);
    out[i] = std::clamp(out[i] + d, 0.0f, 1.0f);
  }
  return ImageTensor(std::move(out));
}

TextualSafetyPrompt default_textual_prompt() {
  TextualSafetyPrompt tau;
  tau.text =
      "First assess whether the request is harmful. If it is, refuse and "
      "answer: I'm sorry, I cannot help with that.";
  tau.source_tag = "builtin-static";
  return tau;
}

std::string compose_text(const TextualSafetyPrompt& tau, const std::string& user_text) {
  if (tau.text.empty()) throw usage_error("textual safety prompt must be non-empty");
  return tau.text + "\n" + user_text;
}

}  // namespace davsp
