#pragma once

#include <optional>
#include <string>

#include "davsp/tensor.hpp"

namespace davsp {

// Trainable padding frame delta with its binary mask. The mask is 1 on the
// border of width p and 0 on the (H-2p)x(W-2p) interior, identical per channel.
struct VisualSafetyPrompt {
  Tensor delta;  // 3xHxW, entries in [0,1]
  Tensor mask;   // 3xHxW, entries in {0,1}
  std::size_t padding = 0;

  std::size_t height() const { return delta.dim(1); }
  std::size_t width() const { return delta.dim(2); }

  static VisualSafetyPrompt zeros(std::size_t h, std::size_t w, std::size_t p);
  void validate() const;
};

struct TextualSafetyPrompt {
  std::string text;
  std::string source_tag;  // provenance, also a double-prefixing guard
};

// Frame mask of width p: ones on the border, zeros on the interior.
Tensor make_mask(std::size_t h, std::size_t w, std::size_t p);

// Bilinear-resize the image to (H-2p)x(W-2p) and center it on a zero canvas.
ImageTensor resize_and_center(const ImageTensor& image, std::size_t p);

// m .* delta + resize_and_center(image, p). Interior pixels depend only on the
// image; border pixels depend only on delta.
ImageTensor apply_vsp(const ImageTensor& image, const VisualSafetyPrompt& vsp);

// Additive-perturbation baseline: clamp(image + clamp(delta, -eps, eps), 0, 1).
ImageTensor apply_additive(const ImageTensor& image, const Tensor& delta, float epsilon);

// [tau; user_text] with a newline separator.
std::string compose_text(const TextualSafetyPrompt& tau, const std::string& user_text);

// Built-in static textual safety prompt used when none is supplied.
TextualSafetyPrompt default_textual_prompt();

// Standalone bilinear resize (half-pixel centers, no antialiasing), used by
// resize_and_center and exposed for oracle tests.
Tensor resize_bilinear(const Tensor& src, std::size_t out_h, std::size_t out_w);

}  // namespace davsp
