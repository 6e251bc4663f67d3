#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace tagcc {

// Co-occurrence counts between predicted and true partitions. Label values are
// remapped to dense ids in order of first appearance.
struct ContingencyTable {
  std::size_t k_pred = 0;
  std::size_t k_true = 0;
  std::vector<long long> counts;  // k_pred x k_true, row-major
  std::size_t n = 0;

  long long at(std::size_t p, std::size_t t) const { return counts[p * k_true + t]; }
};

ContingencyTable contingency(const std::vector<int>& pred, const std::vector<int>& truth);

// Fraction of agreeing samples under the best one-to-one cluster matching
// (Hungarian method on the contingency table).
double clustering_accuracy(const std::vector<int>& pred, const std::vector<int>& truth);

// Mutual information normalized by the arithmetic mean of the two entropies,
// natural logs. 1 for two identical single-cluster partitions, 0 if exactly
// one side has zero entropy.
double nmi(const std::vector<int>& pred, const std::vector<int>& truth);

// Adjusted Rand index; 1 when both partitions are identical (including the
// trivial case where adjustment degenerates to 0/0).
double ari(const std::vector<int>& pred, const std::vector<int>& truth);

// Maps arbitrary label strings to dense ints by first appearance.
std::vector<int> labels_to_ints(const std::vector<std::string>& labels);

// Minimum-cost perfect matching on a square cost matrix; returns per-row column
// assignment. Exposed for tests.
std::vector<std::size_t> hungarian_min_assignment(const std::vector<std::vector<double>>& cost);

}  // namespace tagcc
