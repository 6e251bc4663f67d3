#include "tagcc/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tagcc {

namespace {

std::string shape_str(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) +
                                " vs " + shape_str(b));
  }
}

}  // namespace

Tensor Tensor::scalar(double v) {
  Tensor t(1, 1);
  t.values[0] = v;
  return t;
}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return Tensor(0, 0);
  Tensor t(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != t.cols()) {
      throw std::invalid_argument("from_rows: ragged rows");
    }
    for (std::size_t c = 0; c < t.cols(); ++c) t.at(r, c) = rows[r][c];
  }
  return t;
}

double Tensor::scalar_value() const {
  if (!is_scalar()) {
    throw std::invalid_argument("scalar_value: tensor is " + shape_str(*this));
  }
  return values[0];
}

bool Tensor::all_finite() const {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double Tensor::row_norm(std::size_t r) const {
  double s = 0.0;
  const double* p = row(r);
  for (std::size_t c = 0; c < cols(); ++c) s += p[c] * p[c];
  return std::sqrt(s);
}

void mm_nn(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  out = Tensor(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.row(i);
    double* orow = out.row(i);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b.row(p);
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

void mm_nt_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  // out[i,j] += dot(a.row(i), b.row(j)); a: m x k, b: n x k, out: m x n
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.row(i);
    double* orow = out.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b.row(j);
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      orow[j] += s;
    }
  }
}

void mm_tn_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  // out[i,j] += sum_r a[r,i] * b[r,j]; a: R x m, b: R x n, out: m x n
  const std::size_t rows = a.rows(), m = a.cols(), n = b.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* arow = a.row(r);
    const double* brow = b.row(r);
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* orow = out.row(i);
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

Var Tape::push(Tensor value, const std::vector<Var>& parents,
               std::function<void(Tape&, int)> backprop) {
  Node node;
  node.value = std::move(value);
  for (Var p : parents) {
    if (nodes_[static_cast<std::size_t>(p.id())].requires_grad) {
      node.requires_grad = true;
      break;
    }
  }
  if (node.requires_grad) node.backprop = std::move(backprop);
  nodes_.push_back(std::move(node));
  grads_valid_ = false;
  return Var(static_cast<int>(nodes_.size()) - 1);
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  grads_valid_ = false;
  return Var(static_cast<int>(nodes_.size()) - 1);
}

const Tensor& Tape::value(Var v) const {
  if (!v.valid() || static_cast<std::size_t>(v.id()) >= nodes_.size()) {
    throw std::invalid_argument("Tape::value: invalid var");
  }
  return nodes_[static_cast<std::size_t>(v.id())].value;
}

bool Tape::requires_grad(Var v) const {
  return nodes_[static_cast<std::size_t>(v.id())].requires_grad;
}

const Tensor& Tape::grad(Var v) const {
  if (!grads_valid_) throw std::logic_error("Tape::grad: call backward first");
  return grads_[static_cast<std::size_t>(v.id())];
}

void Tape::backward(Var loss) {
  const Tensor& lv = value(loss);
  if (!lv.is_scalar()) {
    throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(lv));
  }
  grads_.clear();
  for (const Node& n : nodes_) grads_.emplace_back(n.value.rows(), n.value.cols());
  grads_[static_cast<std::size_t>(loss.id())].values[0] = 1.0;
  for (int i = loss.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.backprop) n.backprop(*this, i);
  }
  grads_valid_ = true;
}

Var Tape::add(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require_same_shape(A, B, "add");
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += B.values[i];
  return push(std::move(out), {a, b}, [a, b](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad_ref(a.id());
      for (std::size_t i = 0; i < g.size(); ++i) ga.values[i] += g.values[i];
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_ref(b.id());
      for (std::size_t i = 0; i < g.size(); ++i) gb.values[i] += g.values[i];
    }
  });
}

Var Tape::sub(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require_same_shape(A, B, "sub");
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] -= B.values[i];
  return push(std::move(out), {a, b}, [a, b](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad_ref(a.id());
      for (std::size_t i = 0; i < g.size(); ++i) ga.values[i] += g.values[i];
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_ref(b.id());
      for (std::size_t i = 0; i < g.size(); ++i) gb.values[i] -= g.values[i];
    }
  });
}

Var Tape::mul(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require_same_shape(A, B, "mul");
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] *= B.values[i];
  return push(std::move(out), {a, b}, [a, b](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& A = t.node_value(a.id());
    const Tensor& B = t.node_value(b.id());
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad_ref(a.id());
      for (std::size_t i = 0; i < g.size(); ++i) ga.values[i] += g.values[i] * B.values[i];
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_ref(b.id());
      for (std::size_t i = 0; i < g.size(); ++i) gb.values[i] += g.values[i] * A.values[i];
    }
  });
}

Var Tape::scale(Var a, double c) {
  Tensor out = value(a);
  for (double& v : out.values) v *= c;
  return push(std::move(out), {a}, [a, c](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    if (!t.requires_grad(a)) return;
    Tensor& ga = t.grad_ref(a.id());
    for (std::size_t i = 0; i < g.size(); ++i) ga.values[i] += c * g.values[i];
  });
}

Var Tape::add_rowvec(Var a, Var rowvec) {
  const Tensor& A = value(a);
  const Tensor& B = value(rowvec);
  if (B.rows() != 1 || B.cols() != A.cols()) {
    throw std::invalid_argument("add_rowvec: need 1x" + std::to_string(A.cols()) +
                                ", got " + shape_str(B));
  }
  Tensor out = A;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    double* orow = out.row(r);
    for (std::size_t c = 0; c < out.cols(); ++c) orow[c] += B.values[c];
  }
  return push(std::move(out), {a, rowvec}, [a, rowvec](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad_ref(a.id());
      for (std::size_t i = 0; i < g.size(); ++i) ga.values[i] += g.values[i];
    }
    if (t.requires_grad(rowvec)) {
      Tensor& gb = t.grad_ref(rowvec.id());
      for (std::size_t r = 0; r < g.rows(); ++r) {
        const double* grow = g.row(r);
        for (std::size_t c = 0; c < g.cols(); ++c) gb.values[c] += grow[c];
      }
    }
  });
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.cols() != B.rows()) {
    throw std::invalid_argument("matmul: inner dimensions differ, " + shape_str(A) +
                                " * " + shape_str(B));
  }
  Tensor out;
  mm_nn(A, B, out);
  return push(std::move(out), {a, b}, [a, b](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& A = t.node_value(a.id());
    const Tensor& B = t.node_value(b.id());
    if (t.requires_grad(a)) mm_nt_acc(g, B, t.grad_ref(a.id()));
    if (t.requires_grad(b)) mm_tn_acc(A, g, t.grad_ref(b.id()));
  });
}

Var Tape::transpose(Var a) {
  const Tensor& A = value(a);
  Tensor out(A.cols(), A.rows());
  for (std::size_t r = 0; r < A.rows(); ++r) {
    for (std::size_t c = 0; c < A.cols(); ++c) out.at(c, r) = A.at(r, c);
  }
  return push(std::move(out), {a}, [a](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    if (!t.requires_grad(a)) return;
    Tensor& ga = t.grad_ref(a.id());
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t c = 0; c < g.cols(); ++c) ga.at(c, r) += g.at(r, c);
    }
  });
}

Var Tape::relu(Var a) {
  Tensor out = value(a);
  for (double& v : out.values) {
    if (v < 0.0) v = 0.0;
  }
  return push(std::move(out), {a}, [a](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& A = t.node_value(a.id());
    if (!t.requires_grad(a)) return;
    Tensor& ga = t.grad_ref(a.id());
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (A.values[i] > 0.0) ga.values[i] += g.values[i];
    }
  });
}

Var Tape::log_floor(Var a) {
  Tensor out = value(a);
  for (double& v : out.values) v = std::log(v < kLogFloor ? kLogFloor : v);
  return push(std::move(out), {a}, [a](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& A = t.node_value(a.id());
    if (!t.requires_grad(a)) return;
    Tensor& ga = t.grad_ref(a.id());
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (A.values[i] > kLogFloor) ga.values[i] += g.values[i] / A.values[i];
    }
  });
}

Var Tape::softmax_rows(Var a) {
  const Tensor& A = value(a);
  Tensor out(A.rows(), A.cols());
  for (std::size_t r = 0; r < A.rows(); ++r) {
    const double* arow = A.row(r);
    double* orow = out.row(r);
    double m = -HUGE_VAL;
    for (std::size_t c = 0; c < A.cols(); ++c) m = std::max(m, arow[c]);
    double denom = 0.0;
    for (std::size_t c = 0; c < A.cols(); ++c) {
      orow[c] = std::exp(arow[c] - m);
      denom += orow[c];
    }
    for (std::size_t c = 0; c < A.cols(); ++c) orow[c] /= denom;
  }
  return push(std::move(out), {a}, [a](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& P = t.node_value(self);
    if (!t.requires_grad(a)) return;
    Tensor& ga = t.grad_ref(a.id());
    for (std::size_t r = 0; r < g.rows(); ++r) {
      const double* grow = g.row(r);
      const double* prow = P.row(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) dot += grow[c] * prow[c];
      double* garow = ga.row(r);
      for (std::size_t c = 0; c < g.cols(); ++c) {
        garow[c] += prow[c] * (grow[c] - dot);
      }
    }
  });
}

Var Tape::logsumexp_rows(Var a) {
  const Tensor& A = value(a);
  if (A.cols() == 0) throw std::invalid_argument("logsumexp_rows: zero columns");
  Tensor out(A.rows(), 1);
  for (std::size_t r = 0; r < A.rows(); ++r) {
    const double* arow = A.row(r);
    double m = -HUGE_VAL;
    for (std::size_t c = 0; c < A.cols(); ++c) m = std::max(m, arow[c]);
    double s = 0.0;
    for (std::size_t c = 0; c < A.cols(); ++c) s += std::exp(arow[c] - m);
    out.values[r] = m + std::log(s);
  }
  return push(std::move(out), {a}, [a](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& A = t.node_value(a.id());
    const Tensor& L = t.node_value(self);
    if (!t.requires_grad(a)) return;
    Tensor& ga = t.grad_ref(a.id());
    for (std::size_t r = 0; r < A.rows(); ++r) {
      const double* arow = A.row(r);
      double* garow = ga.row(r);
      const double gv = g.values[r];
      const double lse = L.values[r];
      for (std::size_t c = 0; c < A.cols(); ++c) {
        garow[c] += gv * std::exp(arow[c] - lse);
      }
    }
  });
}

Var Tape::l2_normalize_rows(Var a) {
  const Tensor& A = value(a);
  Tensor out(A.rows(), A.cols());
  for (std::size_t r = 0; r < A.rows(); ++r) {
    const double norm = A.row_norm(r);
    if (norm <= 1e-12) {
      throw std::invalid_argument("l2_normalize_rows: degenerate row " +
                                  std::to_string(r) + " with norm " +
                                  std::to_string(norm));
    }
    const double* arow = A.row(r);
    double* orow = out.row(r);
    for (std::size_t c = 0; c < A.cols(); ++c) orow[c] = arow[c] / norm;
  }
  return push(std::move(out), {a}, [a](Tape& t, int self) {
    // d/dx (x/|x|) applied to upstream g: (g - z (z.g)) / |x|
    const Tensor& g = t.grad_ref(self);
    const Tensor& A = t.node_value(a.id());
    const Tensor& Z = t.node_value(self);
    if (!t.requires_grad(a)) return;
    Tensor& ga = t.grad_ref(a.id());
    for (std::size_t r = 0; r < A.rows(); ++r) {
      const double norm = A.row_norm(r);
      const double* grow = g.row(r);
      const double* zrow = Z.row(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < A.cols(); ++c) dot += grow[c] * zrow[c];
      double* garow = ga.row(r);
      for (std::size_t c = 0; c < A.cols(); ++c) {
        garow[c] += (grow[c] - zrow[c] * dot) / norm;
      }
    }
  });
}

Var Tape::gather_rows(Var table, std::vector<int> indices) {
  const Tensor& T = value(table);
  Tensor out(indices.size(), T.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    if (idx < 0 || static_cast<std::size_t>(idx) >= T.rows()) {
      throw std::out_of_range("gather_rows: index " + std::to_string(idx) +
                              " outside [0, " + std::to_string(T.rows()) + ")");
    }
    const double* srow = T.row(static_cast<std::size_t>(idx));
    double* orow = out.row(i);
    for (std::size_t c = 0; c < T.cols(); ++c) orow[c] = srow[c];
  }
  return push(std::move(out), {table},
              [table, idx = std::move(indices)](Tape& t, int self) {
                const Tensor& g = t.grad_ref(self);
                if (!t.requires_grad(table)) return;
                Tensor& gt = t.grad_ref(table.id());
                for (std::size_t i = 0; i < idx.size(); ++i) {
                  const double* grow = g.row(i);
                  double* trow = gt.row(static_cast<std::size_t>(idx[i]));
                  for (std::size_t c = 0; c < g.cols(); ++c) trow[c] += grow[c];
                }
              });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const std::size_t rows = value(parts[0]).rows();
  std::size_t total = 0;
  for (Var p : parts) {
    const Tensor& t = value(p);
    if (t.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    total += t.cols();
  }
  Tensor out(rows, total);
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& t = value(p);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* srow = t.row(r);
      double* orow = out.row(r) + off;
      for (std::size_t c = 0; c < t.cols(); ++c) orow[c] = srow[c];
    }
    off += t.cols();
  }
  std::vector<std::size_t> widths;
  widths.reserve(parts.size());
  for (Var p : parts) widths.push_back(value(p).cols());
  return push(std::move(out), parts,
              [parts, widths](Tape& t, int self) {
                const Tensor& g = t.grad_ref(self);
                std::size_t off = 0;
                for (std::size_t pi = 0; pi < parts.size(); ++pi) {
                  if (t.requires_grad(parts[pi])) {
                    Tensor& gp = t.grad_ref(parts[pi].id());
                    for (std::size_t r = 0; r < g.rows(); ++r) {
                      const double* grow = g.row(r) + off;
                      double* prow = gp.row(r);
                      for (std::size_t c = 0; c < widths[pi]; ++c) prow[c] += grow[c];
                    }
                  }
                  off += widths[pi];
                }
              });
}

Var Tape::diag(Var a) {
  const Tensor& A = value(a);
  if (A.rows() != A.cols()) {
    throw std::invalid_argument("diag: tensor is not square, " + shape_str(A));
  }
  Tensor out(A.rows(), 1);
  for (std::size_t r = 0; r < A.rows(); ++r) out.values[r] = A.at(r, r);
  return push(std::move(out), {a}, [a](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    if (!t.requires_grad(a)) return;
    Tensor& ga = t.grad_ref(a.id());
    for (std::size_t r = 0; r < g.rows(); ++r) ga.at(r, r) += g.values[r];
  });
}

Var Tape::col_mean(Var a) {
  const Tensor& A = value(a);
  if (A.rows() == 0) throw std::invalid_argument("col_mean: zero rows");
  Tensor out(1, A.cols());
  for (std::size_t r = 0; r < A.rows(); ++r) {
    const double* arow = A.row(r);
    for (std::size_t c = 0; c < A.cols(); ++c) out.values[c] += arow[c];
  }
  const double inv = 1.0 / static_cast<double>(A.rows());
  for (double& v : out.values) v *= inv;
  return push(std::move(out), {a}, [a](Tape& t, int self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& A = t.node_value(a.id());
    if (!t.requires_grad(a)) return;
    Tensor& ga = t.grad_ref(a.id());
    const double inv = 1.0 / static_cast<double>(A.rows());
    for (std::size_t r = 0; r < A.rows(); ++r) {
      double* garow = ga.row(r);
      for (std::size_t c = 0; c < A.cols(); ++c) garow[c] += g.values[c] * inv;
    }
  });
}

Var Tape::sum_all(Var a) {
  const Tensor& A = value(a);
  double s = 0.0;
  for (double v : A.values) s += v;
  return push(Tensor::scalar(s), {a}, [a](Tape& t, int self) {
    const double g = t.grad_ref(self).values[0];
    if (!t.requires_grad(a)) return;
    Tensor& ga = t.grad_ref(a.id());
    for (double& v : ga.values) v += g;
  });
}

Var Tape::mean_all(Var a) {
  const Tensor& A = value(a);
  if (A.size() == 0) throw std::invalid_argument("mean_all: empty tensor");
  double s = 0.0;
  for (double v : A.values) s += v;
  const double inv = 1.0 / static_cast<double>(A.size());
  return push(Tensor::scalar(s * inv), {a}, [a, inv](Tape& t, int self) {
    const double g = t.grad_ref(self).values[0] * inv;
    if (!t.requires_grad(a)) return;
    Tensor& ga = t.grad_ref(a.id());
    for (double& v : ga.values) v += g;
  });
}

}  // namespace tagcc
