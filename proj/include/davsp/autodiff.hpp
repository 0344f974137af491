#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "davsp/error.hpp"

namespace davsp {
namespace ad {

// Dense row-major matrix of doubles; the value type of every graph node.
struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
  std::size_t size() const { return v.size(); }
};

// Reverse-mode tape. Nodes are created through op helpers; backward() walks
// the tape in reverse and accumulates gradients for every node.
class Graph {
 public:
  using NodeId = std::size_t;

  struct Node {
    Mat val;
    Mat grad;
    std::function<void(Graph&)> backward;  // empty for leaves
  };

  NodeId leaf(Mat value);

  const Mat& val(NodeId id) const { return nodes_[id].val; }
  Mat& grad(NodeId id) { return nodes_[id].grad; }

  // ops
  NodeId matmul(NodeId a, NodeId b, bool trans_a = false, bool trans_b = false);
  NodeId add(NodeId a, NodeId b);                 // same shape
  NodeId add_rowvec(NodeId a, NodeId row);        // broadcast a 1xC row over rows
  NodeId mul(NodeId a, NodeId b);                 // hadamard
  NodeId scale(NodeId a, double c);
  NodeId tanh_op(NodeId a);
  NodeId relu(NodeId a);
  NodeId rmsnorm(NodeId a, NodeId gain);          // per-row, gain is 1xC
  NodeId causal_softmax(NodeId scores);           // row i attends to cols <= i
  NodeId col_slice(NodeId a, std::size_t begin, std::size_t count);
  NodeId concat_cols(const std::vector<NodeId>& parts);
  NodeId concat_rows(NodeId a, NodeId b);
  NodeId row_slice(NodeId a, std::size_t begin, std::size_t count);
  NodeId row_select(NodeId a, std::size_t row);   // 1xC view of one row
  // Replace one row with constant values; gradient does not flow into the row.
  NodeId set_row_const(NodeId a, std::size_t row, const std::vector<double>& values);
  // Mean cross-entropy of per-row logits against target class indices.
  NodeId cross_entropy(NodeId logits, const std::vector<std::size_t>& targets);
  // Scalar dot of row `row` of a with a constant vector.
  NodeId row_dot_const(NodeId a, std::size_t row, const std::vector<double>& w);
  NodeId add_scalar_const(NodeId a, double c);    // 1x1 nodes

  double scalar(NodeId id) const;

  // Seed d(out)/d(out) = 1 and run the tape backwards. `out` must be 1x1.
  void backward(NodeId out);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  NodeId push(Mat value, std::function<void(Graph&)> bwd);
  std::vector<Node> nodes_;
};

}  // namespace ad
}  // namespace davsp
