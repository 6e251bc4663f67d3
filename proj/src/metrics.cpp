#include "tagcc/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

namespace tagcc {

namespace {

std::vector<int> densify(const std::vector<int>& labels, std::size_t& k_out) {
  std::unordered_map<int, int> remap;
  std::vector<int> out;
  out.reserve(labels.size());
  for (int v : labels) {
    auto [it, inserted] = remap.emplace(v, static_cast<int>(remap.size()));
    (void)inserted;
    out.push_back(it->second);
  }
  k_out = remap.size();
  return out;
}

void require_equal_lengths(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("label vectors differ in length: " +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  }
}

double entropy_of_counts(const std::vector<long long>& counts, std::size_t n) {
  double h = 0.0;
  for (long long c : counts) {
    if (c > 0) {
      const double p = static_cast<double>(c) / static_cast<double>(n);
      h -= p * std::log(p);
    }
  }
  return h;
}

double choose2(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace

ContingencyTable contingency(const std::vector<int>& pred,
                             const std::vector<int>& truth) {
  require_equal_lengths(pred, truth);
  ContingencyTable table;
  table.n = pred.size();
  std::vector<int> p = densify(pred, table.k_pred);
  std::vector<int> t = densify(truth, table.k_true);
  table.counts.assign(table.k_pred * table.k_true, 0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    ++table.counts[static_cast<std::size_t>(p[i]) * table.k_true +
                   static_cast<std::size_t>(t[i])];
  }
  return table;
}

std::vector<std::size_t> hungarian_min_assignment(
    const std::vector<std::vector<double>>& cost) {
  // O(n^3) Hungarian with row/column potentials. 1-based internals.
  const std::size_t n = cost.size();
  for (const auto& row : cost) {
    if (row.size() != n) throw std::invalid_argument("hungarian: matrix not square");
  }
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> way(n + 1, 0), match(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n, 0);
  for (std::size_t j = 1; j <= n; ++j) {
    if (match[j] != 0) assignment[match[j] - 1] = j - 1;
  }
  return assignment;
}

double clustering_accuracy(const std::vector<int>& pred,
                           const std::vector<int>& truth) {
  require_equal_lengths(pred, truth);
  if (pred.empty()) throw std::invalid_argument("clustering_accuracy: empty labels");
  const ContingencyTable table = contingency(pred, truth);
  const std::size_t dim = std::max(table.k_pred, table.k_true);
  std::vector<std::vector<double>> cost(dim, std::vector<double>(dim, 0.0));
  for (std::size_t p = 0; p < table.k_pred; ++p) {
    for (std::size_t t = 0; t < table.k_true; ++t) {
      cost[p][t] = -static_cast<double>(table.at(p, t));
    }
  }
  const std::vector<std::size_t> assignment = hungarian_min_assignment(cost);
  long long agree = 0;
  for (std::size_t p = 0; p < table.k_pred; ++p) {
    const std::size_t t = assignment[p];
    if (t < table.k_true) agree += table.at(p, t);
  }
  return static_cast<double>(agree) / static_cast<double>(table.n);
}

double nmi(const std::vector<int>& pred, const std::vector<int>& truth) {
  require_equal_lengths(pred, truth);
  if (pred.empty()) throw std::invalid_argument("nmi: empty labels");
  const ContingencyTable table = contingency(pred, truth);
  const std::size_t n = table.n;

  std::vector<long long> row_sums(table.k_pred, 0), col_sums(table.k_true, 0);
  for (std::size_t p = 0; p < table.k_pred; ++p) {
    for (std::size_t t = 0; t < table.k_true; ++t) {
      row_sums[p] += table.at(p, t);
      col_sums[t] += table.at(p, t);
    }
  }
  const double h_pred = entropy_of_counts(row_sums, n);
  const double h_true = entropy_of_counts(col_sums, n);
  if (h_pred == 0.0 && h_true == 0.0) return 1.0;  // identical single-cluster partitions
  if (h_pred == 0.0 || h_true == 0.0) return 0.0;

  double mi = 0.0;
  for (std::size_t p = 0; p < table.k_pred; ++p) {
    for (std::size_t t = 0; t < table.k_true; ++t) {
      const long long c = table.at(p, t);
      if (c == 0) continue;
      const double pij = static_cast<double>(c) / static_cast<double>(n);
      const double pi = static_cast<double>(row_sums[p]) / static_cast<double>(n);
      const double pj = static_cast<double>(col_sums[t]) / static_cast<double>(n);
      mi += pij * std::log(pij / (pi * pj));
    }
  }
  return mi / (0.5 * (h_pred + h_true));
}

double ari(const std::vector<int>& pred, const std::vector<int>& truth) {
  require_equal_lengths(pred, truth);
  if (pred.size() < 2) throw std::invalid_argument("ari: need at least 2 samples");
  const ContingencyTable table = contingency(pred, truth);

  std::vector<long long> row_sums(table.k_pred, 0), col_sums(table.k_true, 0);
  double index = 0.0;
  for (std::size_t p = 0; p < table.k_pred; ++p) {
    for (std::size_t t = 0; t < table.k_true; ++t) {
      const long long c = table.at(p, t);
      row_sums[p] += c;
      col_sums[t] += c;
      index += choose2(static_cast<double>(c));
    }
  }
  double sum_a = 0.0, sum_b = 0.0;
  for (long long c : row_sums) sum_a += choose2(static_cast<double>(c));
  for (long long c : col_sums) sum_b += choose2(static_cast<double>(c));
  const double total_pairs = choose2(static_cast<double>(table.n));
  const double expected = sum_a * sum_b / total_pairs;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) {
    // Degenerate adjustment (e.g. both partitions all-singletons or identical
    // trivial partitions): agreement is perfect exactly when index == max.
    return index == max_index ? 1.0 : 0.0;
  }
  return (index - expected) / (max_index - expected);
}

std::vector<int> labels_to_ints(const std::vector<std::string>& labels) {
  std::unordered_map<std::string, int> remap;
  std::vector<int> out;
  out.reserve(labels.size());
  for (const std::string& s : labels) {
    auto [it, inserted] = remap.emplace(s, static_cast<int>(remap.size()));
    (void)inserted;
    out.push_back(it->second);
  }
  return out;
}

}  // namespace tagcc
