#pragma once

#include "tagcc/tensor.hpp"

namespace tagcc {

struct LossConfig {
  double tau_align = 0.5;
  double tau_proto = 0.5;
  double alpha = 1.0;  // weight of the prototype loss
  double beta = 0.1;   // weight of the entropy regularizer

  void validate() const;
};

enum class Stage { warmup, refine };

// Batch-mean InfoNCE pairing each tabular row with its own anchor against the
// batch's other anchors. Both inputs must be row-normalized (checked at 1e-6).
Var alignment_loss(Tape& tape, Var z_tab, Var z_txt, double tau);

// Row-stochastic soft assignments from cosine similarities to the centroids.
Var soft_assign(Tape& tape, Var z_tab, Var centroids, double tau);

// Square-and-renormalize sharpening with per-cluster batch frequencies.
// Computed on detached values: no gradient flows through the result.
Tensor sharpen_targets(const Tensor& p);

// KL(Q || P) summed over the batch; Q is a constant target.
Var proto_loss(Tape& tape, Var p, const Tensor& q);

// Negative entropy of the batch-mean assignment, in [-log k, 0].
Var entropy_reg(Tape& tape, Var p);

// warmup: alignment only. refine: align + alpha*proto + beta*ent.
Var total_loss(Tape& tape, Var align, Var proto, Var ent, const LossConfig& config,
               Stage stage);

}  // namespace tagcc
