#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <vector>

namespace tagcc {

// Dense row-major matrix of 64-bit floats. Scalars are 1x1, row vectors 1xn.
struct Tensor {
  std::vector<std::size_t> shape;  // {rows, cols}
  std::vector<double> values;

  Tensor() : shape{0, 0} {}
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : shape{rows, cols}, values(rows * cols, fill) {}

  static Tensor scalar(double v);
  static Tensor from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const { return shape[0]; }
  std::size_t cols() const { return shape[1]; }
  std::size_t size() const { return values.size(); }

  double& at(std::size_t r, std::size_t c) { return values[r * shape[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * shape[1] + c]; }
  const double* row(std::size_t r) const { return values.data() + r * shape[1]; }
  double* row(std::size_t r) { return values.data() + r * shape[1]; }

  bool is_scalar() const { return rows() == 1 && cols() == 1; }
  double scalar_value() const;
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  double row_norm(std::size_t r) const;
};

// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  int id() const { return id_; }
  bool valid() const { return id_ >= 0; }

 private:
  friend class Tape;
  explicit Var(int id) : id_(id) {}
  int id_ = -1;
};

// Records forward operations and replays them in reverse for gradients.
// Nodes are appended in execution order, so walking the records backwards
// visits them in reverse topological order exactly once.
class Tape {
 public:
  static constexpr double kLogFloor = 1e-12;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var scale(Var a, double c);
  Var add_rowvec(Var a, Var rowvec);  // a: m x n, rowvec: 1 x n
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var relu(Var a);
  Var log_floor(Var a);  // log(max(x, kLogFloor)); zero gradient below the floor
  Var softmax_rows(Var a);
  Var logsumexp_rows(Var a);  // m x n -> m x 1
  Var l2_normalize_rows(Var a);
  Var gather_rows(Var table, std::vector<int> indices);
  Var concat_cols(const std::vector<Var>& parts);
  Var diag(Var a);      // n x n -> n x 1
  Var col_mean(Var a);  // m x n -> 1 x n
  Var sum_all(Var a);   // -> 1 x 1
  Var mean_all(Var a);  // -> 1 x 1

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;

  // Computes gradients of a scalar loss w.r.t. every recorded node.
  // Accumulators are reset to zero on each call.
  void backward(Var loss);
  const Tensor& grad(Var v) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    std::function<void(Tape&, int)> backprop;  // self id passed in
  };

  Var push(Tensor value, const std::vector<Var>& parents,
           std::function<void(Tape&, int)> backprop);
  Tensor& grad_ref(int id) { return grads_[static_cast<std::size_t>(id)]; }
  const Tensor& node_value(int id) const {
    return nodes_[static_cast<std::size_t>(id)].value;
  }

  // deques keep references from value()/grad() stable while nodes are appended
  std::deque<Node> nodes_;
  std::deque<Tensor> grads_;
  bool grads_valid_ = false;
};

// Raw matrix product helpers shared with non-tape code (k-means, predict).
void mm_nn(const Tensor& a, const Tensor& b, Tensor& out);           // out = a*b
void mm_nt_acc(const Tensor& a, const Tensor& b, Tensor& out);       // out += a*b^T
void mm_tn_acc(const Tensor& a, const Tensor& b, Tensor& out);       // out += a^T*b

}  // namespace tagcc
