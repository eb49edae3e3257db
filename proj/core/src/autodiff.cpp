// SPDX-License-Identifier: Apache-2.0
#include "emreselect/autodiff.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace emr::ad {

Var Tape::push(Matrix value, std::function<void()> back) {
  Node n;
  n.grad = Matrix::Zero(value.rows(), value.cols());
  n.value = std::move(value);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::leaf(Matrix value) { return push(std::move(value)); }

void Tape::backward(Var out) {
  if (val(out).size() != 1) throw std::invalid_argument("backward() needs a scalar output");
  for (auto& n : nodes_) n.grad.setZero();
  g(out)(0, 0) = 1.0;
  for (std::size_t i = out.id + 1; i-- > 0;) {
    if (nodes_[i].back) nodes_[i].back();
  }
}

Var Tape::matmul(Var a, Var b) {
  if (val(a).cols() != val(b).rows()) throw std::invalid_argument("matmul shape mismatch");
  Var out = push(val(a) * val(b));
  nodes_[out.id].back = [this, a, b, out] {
    const Matrix& go = g(out);
    g(a).noalias() += go * val(b).transpose();
    g(b).noalias() += val(a).transpose() * go;
  };
  return out;
}

Var Tape::matmul_nt(Var a, Var b) {
  if (val(a).cols() != val(b).cols()) throw std::invalid_argument("matmul_nt shape mismatch");
  Var out = push(val(a) * val(b).transpose());
  nodes_[out.id].back = [this, a, b, out] {
    const Matrix& go = g(out);
    g(a).noalias() += go * val(b);
    g(b).noalias() += go.transpose() * val(a);
  };
  return out;
}

Var Tape::add(Var a, Var b) {
  Var out = push(val(a) + val(b));
  nodes_[out.id].back = [this, a, b, out] {
    g(a) += g(out);
    g(b) += g(out);
  };
  return out;
}

Var Tape::sub(Var a, Var b) {
  Var out = push(val(a) - val(b));
  nodes_[out.id].back = [this, a, b, out] {
    g(a) += g(out);
    g(b) -= g(out);
  };
  return out;
}

Var Tape::add_row(Var a, Var row) {
  if (val(row).rows() != 1 || val(row).cols() != val(a).cols()) {
    throw std::invalid_argument("add_row needs a 1xN row matching the operand width");
  }
  Var out = push(val(a).rowwise() + val(row).row(0));
  nodes_[out.id].back = [this, a, row, out] {
    g(a) += g(out);
    g(row) += g(out).colwise().sum();
  };
  return out;
}

Var Tape::scale(Var a, double s) {
  Var out = push(val(a) * s);
  nodes_[out.id].back = [this, a, s, out] { g(a) += g(out) * s; };
  return out;
}

Var Tape::relu(Var a) {
  Var out = push(val(a).cwiseMax(0.0));
  nodes_[out.id].back = [this, a, out] {
    g(a).array() += (val(a).array() > 0.0).cast<double>() * g(out).array();
  };
  return out;
}

Var Tape::softmax_rows(Var a, bool causal) {
  const Matrix& x = val(a);
  if (causal && x.rows() != x.cols()) throw std::invalid_argument("causal softmax needs a square matrix");
  Matrix y(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const Index width = causal ? i + 1 : x.cols();
    const double mx = x.row(i).head(width).maxCoeff();
    double total = 0.0;
    for (Index j = 0; j < x.cols(); ++j) {
      y(i, j) = j < width ? std::exp(x(i, j) - mx) : 0.0;
      total += y(i, j);
    }
    y.row(i) /= total;
  }
  Var out = push(std::move(y));
  nodes_[out.id].back = [this, a, out] {
    const Matrix& s = val(out);
    const Matrix& go = g(out);
    // dx_ij = s_ij * (go_ij - sum_k go_ik s_ik); masked entries have s = 0.
    const Eigen::VectorXd dots = (go.array() * s.array()).rowwise().sum();
    g(a).array() += s.array() * (go.colwise() - dots).array();
  };
  return out;
}

Var Tape::cols(Var a, Index start, Index count) {
  if (start < 0 || start + count > val(a).cols()) throw std::out_of_range("cols() slice out of range");
  Var out = push(val(a).middleCols(start, count));
  nodes_[out.id].back = [this, a, start, count, out] { g(a).middleCols(start, count) += g(out); };
  return out;
}

Var Tape::rows(Var a, Index start, Index count) {
  if (start < 0 || start + count > val(a).rows()) throw std::out_of_range("rows() slice out of range");
  Var out = push(val(a).middleRows(start, count));
  nodes_[out.id].back = [this, a, start, count, out] { g(a).middleRows(start, count) += g(out); };
  return out;
}

Var Tape::hconcat(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("hconcat of nothing");
  const Index r = val(parts[0]).rows();
  Index total = 0;
  for (Var p : parts) {
    if (val(p).rows() != r) throw std::invalid_argument("hconcat row mismatch");
    total += val(p).cols();
  }
  Matrix y(r, total);
  Index at = 0;
  for (Var p : parts) {
    y.middleCols(at, val(p).cols()) = val(p);
    at += val(p).cols();
  }
  std::vector<Var> ids(parts.begin(), parts.end());
  Var out = push(std::move(y));
  nodes_[out.id].back = [this, ids, out] {
    Index off = 0;
    for (Var p : ids) {
      const Index w = val(p).cols();
      g(p) += g(out).middleCols(off, w);
      off += w;
    }
  };
  return out;
}

Var Tape::sum_squares(Var a) {
  Matrix y(1, 1);
  y(0, 0) = val(a).squaredNorm();
  Var out = push(std::move(y));
  nodes_[out.id].back = [this, a, out] { g(a) += 2.0 * g(out)(0, 0) * val(a); };
  return out;
}

}  // namespace emr::ad
