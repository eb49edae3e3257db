// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace emr::ad {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Handle to a node on a Tape. Only meaningful for the tape that created it.
struct Var {
  std::size_t id = 0;
};

/// Matrix-valued reverse-mode tape. Every operation records its value and a
/// closure that pushes the node's adjoint to its operands; backward() walks
/// the nodes in reverse creation order, which is a valid topological order.
class Tape {
 public:
  Var leaf(Matrix value);

  [[nodiscard]] const Matrix& value(Var v) const { return nodes_[v.id].value; }
  [[nodiscard]] const Matrix& grad(Var v) const { return nodes_[v.id].grad; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

  /// Seeds d(out)/d(out) = 1; `out` must be 1x1.
  void backward(Var out);

  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);  // a * b^T
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var add_row(Var a, Var row);  // broadcast a 1xN row over every row of a
  Var scale(Var a, double s);
  Var relu(Var a);
  /// Row-wise softmax. With `causal`, entry (i, j) for j > i is masked out.
  Var softmax_rows(Var a, bool causal = false);
  Var cols(Var a, Index start, Index count);
  Var rows(Var a, Index start, Index count);
  Var hconcat(std::span<const Var> parts);
  Var sum_squares(Var a);  // 1x1

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void()> back;
  };

  Var push(Matrix value, std::function<void()> back = {});
  Matrix& g(Var v) { return nodes_[v.id].grad; }
  const Matrix& val(Var v) const { return nodes_[v.id].value; }

  std::vector<Node> nodes_;
};

}  // namespace emr::ad
