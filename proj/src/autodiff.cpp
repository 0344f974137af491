#include "davsp/autodiff.hpp"

#include <cmath>

namespace davsp {
namespace ad {

Graph::NodeId Graph::push(Mat value, std::function<void(Graph&)> bwd) {
  Node n;
  n.grad = Mat(value.rows, value.cols);
  n.val = std::move(value);
  n.backward = std::move(bwd);
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

Graph::NodeId Graph::leaf(Mat value) { return push(std::move(value), {}); }

double Graph::scalar(NodeId id) const {
  if (nodes_[id].val.size() != 1) throw numeric_error("scalar() on non-1x1 node");
  return nodes_[id].val.v[0];
}

Graph::NodeId Graph::matmul(NodeId a, NodeId b, bool trans_a, bool trans_b) {
  const Mat& A = nodes_[a].val;
  const Mat& B = nodes_[b].val;
  const std::size_t m = trans_a ? A.cols : A.rows;
  const std::size_t k = trans_a ? A.rows : A.cols;
  const std::size_t kb = trans_b ? B.cols : B.rows;
  const std::size_t n = trans_b ? B.rows : B.cols;
  if (k != kb) throw numeric_error("matmul shape mismatch");
  Mat C(m, n);
  auto at = [](const Mat& M, bool t, std::size_t r, std::size_t c) {
    return t ? M(c, r) : M(r, c);
  };
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += at(A, trans_a, i, p) * at(B, trans_b, p, j);
      C(i, j) = s;
    }
  }
  NodeId out = push(std::move(C), {});
  nodes_[out].backward = [a, b, trans_a, trans_b, out, m, n, k](Graph& g) {
    const Mat& G = g.nodes_[out].grad;
    const Mat& A = g.nodes_[a].val;
    const Mat& B = g.nodes_[b].val;
    Mat& GA = g.nodes_[a].grad;
    Mat& GB = g.nodes_[b].grad;
    auto at = [](const Mat& M, bool t, std::size_t r, std::size_t c) {
      return t ? M(c, r) : M(r, c);
    };
    // dA = G B^T (with transposition bookkeeping), dB = A^T G.
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += G(i, j) * at(B, trans_b, p, j);
        if (trans_a) GA(p, i) += s; else GA(i, p) += s;
      }
    }
    for (std::size_t p = 0; p < k; ++p) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += at(A, trans_a, i, p) * G(i, j);
        if (trans_b) GB(j, p) += s; else GB(p, j) += s;
      }
    }
  };
  return out;
}

Graph::NodeId Graph::add(NodeId a, NodeId b) {
  const Mat& A = nodes_[a].val;
  const Mat& B = nodes_[b].val;
  if (A.rows != B.rows || A.cols != B.cols) throw numeric_error("add shape mismatch");
  Mat C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C.v[i] += B.v[i];
  NodeId out = push(std::move(C), {});
  nodes_[out].backward = [a, b, out](Graph& g) {
    const Mat& G = g.nodes_[out].grad;
    for (std::size_t i = 0; i < G.size(); ++i) {
      g.nodes_[a].grad.v[i] += G.v[i];
      g.nodes_[b].grad.v[i] += G.v[i];
    }
  };
  return out;
}

Graph::NodeId Graph::add_rowvec(NodeId a, NodeId row) {
  const Mat& A = nodes_[a].val;
  const Mat& R = nodes_[row].val;
  if (R.rows != 1 || R.cols != A.cols) throw numeric_error("add_rowvec shape mismatch");
  Mat C = A;
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) C(i, j) += R(0, j);
  NodeId out = push(std::move(C), {});
  nodes_[out].backward = [a, row, out](Graph& g) {
    const Mat& G = g.nodes_[out].grad;
    Mat& GA = g.nodes_[a].grad;
    Mat& GR = g.nodes_[row].grad;
    for (std::size_t i = 0; i < G.rows; ++i)
      for (std::size_t j = 0; j < G.cols; ++j) {
        GA(i, j) += G(i, j);
        GR(0, j) += G(i, j);
      }
  };
  return out;
}

Graph::NodeId Graph::mul(NodeId a, NodeId b) {
  const Mat& A = nodes_[a].val;
  const Mat& B = nodes_[b].val;
  if (A.rows != B.rows || A.cols != B.cols) throw numeric_error("mul shape mismatch");
  Mat C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C.v[i] *= B.v[i];
  NodeId out = push(std::move(C), {});
  nodes_[out].backward = [a, b, out](Graph& g) {
    const Mat& G = g.nodes_[out].grad;
    for (std::size_t i = 0; i < G.size(); ++i) {
      g.nodes_[a].grad.v[i] += G.v[i] * g.nodes_[b].val.v[i];
      g.nodes_[b].grad.v[i] += G.v[i] * g.nodes_[a].val.v[i];
    }
  };
  return out;
}

Graph::NodeId Graph::scale(NodeId a, double c) {
  Mat C = nodes_[a].val;
  for (double& x : C.v) x *= c;
  NodeId out = push(std::move(C), {});
  nodes_[out].backward = [a, c, out](Graph& g) {
    const Mat& G = g.nodes_[out].grad;
    for (std::size_t i = 0; i < G.size(); ++i) g.nodes_[a].grad.v[i] += c * G.v[i];
  };
  return out;
}

Graph::NodeId Graph::tanh_op(NodeId a) {
  Mat C = nodes_[a].val;
  for (double& x : C.v) x = std::tanh(x);
  NodeId out = push(std::move(C), {});
  nodes_[out].backward = [a, out](Graph& g) {
    const Mat& G = g.nodes_[out].grad;
    const Mat& Y = g.nodes_[out].val;
    for (std::size_t i = 0; i < G.size(); ++i)
      g.nodes_[a].grad.v[i] += G.v[i] * (1.0 - Y.v[i] * Y.v[i]);
  };
  return out;
}

Graph::NodeId Graph::relu(NodeId a) {
  Mat C = nodes_[a].val;
  for (double& x : C.v) x = x > 0.0 ? x : 0.0;
  NodeId out = push(std::move(C), {});
  nodes_[out].backward = [a, out](Graph& g) {
    const Mat& G = g.nodes_[out].grad;
    const Mat& X = g.nodes_[a].val;
    for (std::size_t i = 0; i < G.size(); ++i)
      if (X.v[i] > 0.0) g.nodes_[a].grad.v[i] += G.v[i];
  };
  return out;
}

Graph::NodeId Graph::rmsnorm(NodeId a, NodeId gain) {
  const Mat& A = nodes_[a].val;
  const Mat& Gn = nodes_[gain].val;
  if (Gn.rows != 1 || Gn.cols != A.cols) throw numeric_error("rmsnorm gain shape mismatch");
  constexpr double eps = 1e-6;
  const std::size_t d = A.cols;
  Mat C(A.rows, A.cols);
  std::vector<double> inv_rms(A.rows);
  for (std::size_t i = 0; i < A.rows; ++i) {
    double ms = 0.0;
    for (std::size_t j = 0; j < d; ++j) ms += A(i, j) * A(i, j);
    ms = ms / static_cast<double>(d) + eps;
    inv_rms[i] = 1.0 / std::sqrt(ms);
    for (std::size_t j = 0; j < d; ++j) C(i, j) = A(i, j) * Gn(0, j) * inv_rms[i];
  }
  NodeId out = push(std::move(C), {});
  nodes_[out].backward = [a, gain, out, inv_rms, d](Graph& g) {
    const Mat& G = g.nodes_[out].grad;
    const Mat& A = g.nodes_[a].val;
    const Mat& Gn = g.nodes_[gain].val;
    Mat& GA = g.nodes_[a].grad;
    Mat& GG = g.nodes_[gain].grad;
    for (std::size_t i = 0; i < A.rows; ++i) {
      const double r = inv_rms[i];
      double dot = 0.0;  // sum_j G_ij * g_j * x_ij
      for (std::size_t j = 0; j < d; ++j) dot += G(i, j) * Gn(0, j) * A(i, j);
      for (std::size_t j = 0; j < d; ++j) {
        GA(i, j) += G(i, j) * Gn(0, j) * r -
                    A(i, j) * r * r * r * dot / static_cast<double>(d);
        GG(0, j) += G(i, j) * A(i, j) * r;
      }
    }
  };
  return out;
}

Graph::NodeId Graph::causal_softmax(NodeId scores) {
  const Mat& S = nodes_[scores].val;
  if (S.rows != S.cols) throw numeric_error("causal_softmax expects a square matrix");
  Mat P(S.rows, S.cols);
  for (std::size_t i = 0; i < S.rows; ++i) {
    double mx = -1e300;
    for (std::size_t j = 0; j <= i; ++j) mx = std::max(mx, S(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j <= i; ++j) z += std::exp(S(i, j) - mx);
    for (std::size_t j = 0; j <= i; ++j) P(i, j) = std::exp(S(i, j) - mx) / z;
    // masked entries stay 0
  }
  NodeId out = push(std::move(P), {});
  nodes_[out].backward = [scores, out](Graph& g) {
    const Mat& G = g.nodes_[out].grad;
    const Mat& P = g.nodes_[out].val;
    Mat& GS = g.nodes_[scores].grad;
    for (std::size_t i = 0; i < P.rows; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j <= i; ++j) dot += G(i, j) * P(i, j);
      for (std::size_t j = 0; j <= i; ++j) GS(i, j) += P(i, j) * (G(i, j) - dot);
    }
  };
  return out;
}

Graph::NodeId Graph::col_slice(NodeId a, std::size_t begin, std::size_t count) {
  const Mat& A = nodes_[a].val;
  if (begin + count > A.cols) throw numeric_error("col_slice out of range");
  Mat C(A.rows, count);
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < count; ++j) C(i, j) = A(i, begin + j);
  NodeId out = push(std::move(C), {});
  nodes_[out].backward = [a, begin, count, out](Graph& g) {
    const Mat& G = g.nodes_[out].grad;
    Mat& GA = g.nodes_[a].grad;
    for (std::size_t i = 0; i < G.rows; ++i)
      for (std::size_t j = 0; j < count; ++j) GA(i, begin + j) += G(i, j);
  };
  return out;
}

Graph::NodeId Graph::concat_cols(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw numeric_error("concat_cols of nothing");
  const std::size_t rows = nodes_[parts[0]].val.rows;
  std::size_t cols = 0;
  for (NodeId p : parts) {
    if (nodes_[p].val.rows != rows) throw numeric_error("concat_cols row mismatch");
    cols += nodes_[p].val.cols;
  }
  Mat C(rows, cols);
  std::size_t off = 0;
  for (NodeId p : parts) {
    const Mat& P = nodes_[p].val;
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < P.cols; ++j) C(i, off + j) = P(i, j);
    off += P.cols;
  }
  NodeId out = push(std::move(C), {});
  std::vector<NodeId> parts_copy = parts;
  nodes_[out].backward = [parts_copy, out](Graph& g) {
    const Mat& G = g.nodes_[out].grad;
    std::size_t off = 0;
    for (NodeId p : parts_copy) {
      Mat& GP = g.nodes_[p].grad;
      for (std::size_t i = 0; i < GP.rows; ++i)
        for (std::size_t j = 0; j < GP.cols; ++j) GP(i, j) += G(i, off + j);
      off += GP.cols;
    }
  };
  return out;
}

Graph::NodeId Graph::concat_rows(NodeId a, NodeId b) {
  const Mat& A = nodes_[a].val;
  const Mat& B = nodes_[b].val;
  if (A.cols != B.cols) throw numeric_error("concat_rows col mismatch");
  Mat C(A.rows + B.rows, A.cols);
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) C(i, j) = A(i, j);
  for (std::size_t i = 0; i < B.rows; ++i)
    for (std::size_t j = 0; j < B.cols; ++j) C(A.rows + i, j) = B(i, j);
  NodeId out = push(std::move(C), {});
  const std::size_t a_rows = A.rows;
  nodes_[out].backward = [a, b, a_rows, out](Graph& g) {
    const Mat& G = g.nodes_[out].grad;
    Mat& GA = g.nodes_[a].grad;
    Mat& GB = g.nodes_[b].grad;
    for (std::size_t i = 0; i < GA.rows; ++i)
      for (std::size_t j = 0; j < G.cols; ++j) GA(i, j) += G(i, j);
    for (std::size_t i = 0; i < GB.rows; ++i)
      for (std::size_t j = 0; j < G.cols; ++j) GB(i, j) += G(a_rows + i, j);
  };
  return out;
}

Graph::NodeId Graph::row_slice(NodeId a, std::size_t begin, std::size_t count) {
  const Mat& A = nodes_[a].val;
  if (begin + count > A.rows) throw numeric_error("row_slice out of range");
  Mat C(count, A.cols);
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) C(i, j) = A(begin + i, j);
  NodeId out = push(std::move(C), {});
  nodes_[out].backward = [a, begin, count, out](Graph& g) {
    const Mat& G = g.nodes_[out].grad;
    Mat& GA = g.nodes_[a].grad;
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t j = 0; j < G.cols; ++j) GA(begin + i, j) += G(i, j);
  };
  return out;
}

Graph::NodeId Graph::row_select(NodeId a, std::size_t row) {
  const Mat& A = nodes_[a].val;
  if (row >= A.rows) throw numeric_error("row_select out of range");
  Mat C(1, A.cols);
  for (std::size_t j = 0; j < A.cols; ++j) C(0, j) = A(row, j);
  NodeId out = push(std::move(C), {});
  nodes_[out].backward = [a, row, out](Graph& g) {
    const Mat& G = g.nodes_[out].grad;
    Mat& GA = g.nodes_[a].grad;
    for (std::size_t j = 0; j < G.cols; ++j) GA(row, j) += G(0, j);
  };
  return out;
}

Graph::NodeId Graph::set_row_const(NodeId a, std::size_t row, const std::vector<double>& values) {
  const Mat& A = nodes_[a].val;
  if (row >= A.rows || values.size() != A.cols) throw numeric_error("set_row_const shape mismatch");
  Mat C = A;
  for (std::size_t j = 0; j < A.cols; ++j) C(row, j) = values[j];
  NodeId out = push(std::move(C), {});
  nodes_[out].backward = [a, row, out](Graph& g) {
    const Mat& G = g.nodes_[out].grad;
    Mat& GA = g.nodes_[a].grad;
    for (std::size_t i = 0; i < G.rows; ++i) {
      if (i == row) continue;  // injected values are constants
      for (std::size_t j = 0; j < G.cols; ++j) GA(i, j) += G(i, j);
    }
  };
  return out;
}

Graph::NodeId Graph::cross_entropy(NodeId logits, const std::vector<std::size_t>& targets) {
  const Mat& L = nodes_[logits].val;
  if (targets.size() != L.rows || L.rows == 0) throw numeric_error("cross_entropy target mismatch");
  Mat probs(L.rows, L.cols);
  double loss = 0.0;
  for (std::size_t i = 0; i < L.rows; ++i) {
    double mx = -1e300;
    for (std::size_t j = 0; j < L.cols; ++j) mx = std::max(mx, L(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < L.cols; ++j) z += std::exp(L(i, j) - mx);
    for (std::size_t j = 0; j < L.cols; ++j) probs(i, j) = std::exp(L(i, j) - mx) / z;
    if (targets[i] >= L.cols) throw numeric_error("cross_entropy target out of vocab");
    loss -= std::log(std::max(probs(i, targets[i]), 1e-300));
  }
  loss /= static_cast<double>(L.rows);
  Mat C(1, 1);
  C(0, 0) = loss;
  NodeId out = push(std::move(C), {});
  nodes_[out].backward = [logits, targets, probs, out](Graph& g) {
    const double go = g.nodes_[out].grad(0, 0);
    Mat& GL = g.nodes_[logits].grad;
    const double inv_n = 1.0 / static_cast<double>(probs.rows);
    for (std::size_t i = 0; i < probs.rows; ++i)
      for (std::size_t j = 0; j < probs.cols; ++j) {
        double d = probs(i, j);
        if (j == targets[i]) d -= 1.0;
        GL(i, j) += go * inv_n * d;
      }
  };
  return out;
}

Graph::NodeId Graph::row_dot_const(NodeId a, std::size_t row, const std::vector<double>& w) {
  const Mat& A = nodes_[a].val;
  if (row >= A.rows || w.size() != A.cols) throw numeric_error("row_dot_const shape mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < A.cols; ++j) s += A(row, j) * w[j];
  Mat C(1, 1);
  C(0, 0) = s;
  NodeId out = push(std::move(C), {});
  nodes_[out].backward = [a, row, w, out](Graph& g) {
    const double go = g.nodes_[out].grad(0, 0);
    Mat& GA = g.nodes_[a].grad;
    for (std::size_t j = 0; j < w.size(); ++j) GA(row, j) += go * w[j];
  };
  return out;
}

Graph::NodeId Graph::add_scalar_const(NodeId a, double c) {
  Mat C = nodes_[a].val;
  for (double& x : C.v) x += c;
  NodeId out = push(std::move(C), {});
  nodes_[out].backward = [a, out](Graph& g) {
    const Mat& G = g.nodes_[out].grad;
    for (std::size_t i = 0; i < G.size(); ++i) g.nodes_[a].grad.v[i] += G.v[i];
  };
  return out;
}

void Graph::backward(NodeId out) {
  if (nodes_[out].val.size() != 1) throw numeric_error("backward() requires a scalar output");
  nodes_[out].grad.v[0] = 1.0;
  for (std::size_t i = out + 1; i-- > 0;) {
    if (nodes_[i].backward) nodes_[i].backward(*this);
  }
}

}  // namespace ad
}  // namespace davsp
