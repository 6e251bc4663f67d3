#include "tagcc/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tagcc {

namespace {

void require_unit_rows(const Tensor& t, double tol, const char* what) {
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const double norm = t.row_norm(r);
    if (std::abs(norm - 1.0) > tol) {
      throw std::invalid_argument(std::string(what) + ": row " + std::to_string(r) +
                                  " has norm " + std::to_string(norm));
    }
  }
}

}  // namespace

void LossConfig::validate() const {
  if (tau_align <= 0.0 || tau_proto <= 0.0) {
    throw std::invalid_argument("loss temperatures must be > 0");
  }
  if (alpha < 0.0 || beta < 0.0) {
    throw std::invalid_argument("loss weights alpha/beta must be >= 0");
  }
}

Var alignment_loss(Tape& tape, Var z_tab, Var z_txt, double tau) {
  const Tensor& a = tape.value(z_tab);
  const Tensor& b = tape.value(z_txt);
  if (a.rows() == 0) throw std::invalid_argument("alignment_loss: empty batch");
  if (!a.same_shape(b)) throw std::invalid_argument("alignment_loss: shape mismatch");
  if (tau <= 0.0) throw std::invalid_argument("alignment_loss: tau must be > 0");
  require_unit_rows(a, 1e-6, "alignment_loss z_tab");
  require_unit_rows(b, 1e-6, "alignment_loss z_txt");

  // -log softmax(s_ii) == logsumexp(row i) - s_ii
  Var sims = tape.scale(tape.matmul(z_tab, tape.transpose(z_txt)), 1.0 / tau);
  Var per_sample = tape.sub(tape.logsumexp_rows(sims), tape.diag(sims));
  return tape.mean_all(per_sample);
}

Var soft_assign(Tape& tape, Var z_tab, Var centroids, double tau) {
  const Tensor& mu = tape.value(centroids);
  if (mu.rows() < 2) {
    throw std::invalid_argument("soft_assign: need k >= 2 centroids, got " +
                                std::to_string(mu.rows()));
  }
  if (tau <= 0.0) throw std::invalid_argument("soft_assign: tau must be > 0");
  require_unit_rows(tape.value(z_tab), 1e-6, "soft_assign z_tab");
  // loose tolerance: callers renormalize centroids between steps, and gradient
  // checks nudge raw centroid values by ~1e-5
  require_unit_rows(mu, 1e-3, "soft_assign centroids");

  Var sims = tape.scale(tape.matmul(z_tab, tape.transpose(centroids)), 1.0 / tau);
  return tape.softmax_rows(sims);
}

Tensor sharpen_targets(const Tensor& p) {
  const std::size_t rows = p.rows(), k = p.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) s += p.at(r, c);
    if (std::abs(s - 1.0) > 1e-6) {
      throw std::invalid_argument("sharpen_targets: row " + std::to_string(r) +
                                  " sums to " + std::to_string(s));
    }
  }
  std::vector<double> freq(k, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < k; ++c) freq[c] += p.at(r, c);
  }
  for (double& f : freq) {
    if (f < 1e-12) f = 1e-12;
  }
  Tensor q(rows, k);
  for (std::size_t r = 0; r < rows; ++r) {
    double denom = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double v = p.at(r, c) * p.at(r, c) / freq[c];
      q.at(r, c) = v;
      denom += v;
    }
    if (denom < 1e-12) denom = 1e-12;
    for (std::size_t c = 0; c < k; ++c) q.at(r, c) /= denom;
  }
  return q;
}

Var proto_loss(Tape& tape, Var p, const Tensor& q) {
  const Tensor& pv = tape.value(p);
  if (!pv.same_shape(q)) throw std::invalid_argument("proto_loss: P/Q shape mismatch");

  // KL(Q||P) = sum q log q - sum q log p, with 0 log 0 := 0 on the Q side.
  double q_log_q = 0.0;
  for (double v : q.values) {
    if (v > 0.0) q_log_q += v * std::log(v);
  }
  Var q_const = tape.constant(q);
  Var cross = tape.sum_all(tape.mul(q_const, tape.log_floor(p)));
  return tape.sub(tape.constant(Tensor::scalar(q_log_q)), cross);
}

Var entropy_reg(Tape& tape, Var p) {
  Var pbar = tape.col_mean(p);
  return tape.sum_all(tape.mul(pbar, tape.log_floor(pbar)));
}

Var total_loss(Tape& tape, Var align, Var proto, Var ent, const LossConfig& config,
               Stage stage) {
  config.validate();
  if (stage == Stage::warmup) return align;
  if (!proto.valid() || !ent.valid()) {
    throw std::invalid_argument("total_loss: refine stage needs proto and ent terms");
  }
  Var out = tape.add(align, tape.scale(proto, config.alpha));
  return tape.add(out, tape.scale(ent, config.beta));
}

}  // namespace tagcc
