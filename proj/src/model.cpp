#include "tagcc/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "tagcc/common.hpp"

namespace tagcc {

namespace {

Tensor glorot_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in,
                      std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(rows, cols);
  for (double& v : t.values) v = (2.0 * rng.next_double() - 1.0) * a;
  return t;
}

void add_linear(ModelParams& p, const std::string& prefix, std::size_t in,
                std::size_t out, Rng& rng) {
  p.add(prefix + ".w", glorot_uniform(in, out, in, out, rng));
  p.add(prefix + ".b", Tensor(1, out));
}

}  // namespace

void ModelDims::validate() const {
  if (d_e == 0 || h1 == 0 || h2 == 0 || h_p == 0 || d == 0 || d_plm == 0) {
    throw ValidationError("model dims must all be positive");
  }
  if (proj_depth != 1 && proj_depth != 2) {
    throw ValidationError("proj_depth must be 1 or 2");
  }
}

Tensor& ModelParams::get(const std::string& name) {
  auto it = index.find(name);
  if (it == index.end()) throw std::invalid_argument("unknown parameter: " + name);
  return params[it->second].second;
}

const Tensor& ModelParams::get(const std::string& name) const {
  auto it = index.find(name);
  if (it == index.end()) throw std::invalid_argument("unknown parameter: " + name);
  return params[it->second].second;
}

void ModelParams::add(const std::string& name, Tensor t) {
  if (index.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
  index.emplace(name, params.size());
  params.emplace_back(name, std::move(t));
}

Tensor random_unit_rows(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double norm = 0.0;
    double* row = t.row(r);
    while (norm < 1e-12) {
      norm = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        row[c] = rng.next_gaussian();
        norm += row[c] * row[c];
      }
      norm = std::sqrt(norm);
    }
    for (std::size_t c = 0; c < cols; ++c) row[c] /= norm;
  }
  return t;
}

ModelParams init_params(const Schema& schema, const ModelDims& dims,
                        std::uint64_t seed) {
  dims.validate();
  ModelParams p;
  p.dims = dims;
  p.k = static_cast<std::size_t>(schema.k_star);

  Rng rng(mix_seed(seed, 0x7061726d) /* "parm" */);

  std::size_t num_i = 0, cat_i = 0;
  for (const FeatureSpec& f : schema.features) {
    if (f.is_numeric()) {
      const std::string prefix = "num." + std::to_string(num_i++);
      p.add(prefix + ".w", glorot_uniform(1, dims.d_e, 1, dims.d_e, rng));
      p.add(prefix + ".b", Tensor(1, dims.d_e));
    } else {
      const std::string prefix = "cat." + std::to_string(cat_i++);
      p.add(prefix + ".emb",
            glorot_uniform(f.categories.size(), dims.d_e, f.categories.size(),
                           dims.d_e, rng));
    }
  }
  p.numeric_count = num_i;
  p.categorical_count = cat_i;

  const std::size_t fused = schema.feature_count() * dims.d_e;
  add_linear(p, "tab.l1", fused, dims.h1, rng);
  add_linear(p, "tab.l2", dims.h1, dims.h2, rng);
  add_linear(p, "sem", dims.d_plm, dims.h2, rng);
  if (dims.proj_depth == 2) {
    add_linear(p, "proj_tab.l1", dims.h2, dims.h_p, rng);
    add_linear(p, "proj_tab.l2", dims.h_p, dims.d, rng);
    add_linear(p, "proj_txt.l1", dims.h2, dims.h_p, rng);
    add_linear(p, "proj_txt.l2", dims.h_p, dims.d, rng);
  } else {
    add_linear(p, "proj_tab.l1", dims.h2, dims.d, rng);
    add_linear(p, "proj_txt.l1", dims.h2, dims.d, rng);
  }
  p.add("centroids", random_unit_rows(p.k, dims.d, mix_seed(seed, 0x6d75)));
  return p;
}

Var ParamVars::get(const std::string& name) const {
  auto it = vars.find(name);
  if (it == vars.end()) throw std::invalid_argument("unregistered parameter: " + name);
  return it->second;
}

ParamVars register_params(Tape& tape, const ModelParams& params,
                          const std::vector<std::string>& trainable) {
  ParamVars out;
  for (const auto& [name, tensor] : params.params) {
    const bool grad =
        std::find(trainable.begin(), trainable.end(), name) != trainable.end();
    out.vars.emplace(name, tape.leaf(tensor, grad));
  }
  return out;
}

ParamVars register_params_const(Tape& tape, const ModelParams& params) {
  return register_params(tape, params, {});
}

Batch make_batch(const EncodedDataset& dataset, const std::vector<std::size_t>& rows) {
  Batch batch;
  batch.size = rows.size();
  batch.numeric_columns.reserve(dataset.numeric_count());
  for (std::size_t j = 0; j < dataset.numeric_count(); ++j) {
    Tensor col(rows.size(), 1);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      col.values[i] = dataset.numeric_values.at(rows[i], j);
    }
    batch.numeric_columns.push_back(std::move(col));
  }
  batch.cat_columns.reserve(dataset.categorical_count());
  for (std::size_t j = 0; j < dataset.categorical_count(); ++j) {
    std::vector<int> col(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      col[i] = dataset.cat_index(rows[i], j);
    }
    batch.cat_columns.push_back(std::move(col));
  }
  return batch;
}

Var encode_tabular(Tape& tape, const ParamVars& params, const Schema& schema,
                   const EncodedDataset& dataset, const Batch& batch) {
  if (batch.numeric_columns.size() != dataset.numeric_count() ||
      batch.cat_columns.size() != dataset.categorical_count()) {
    throw std::invalid_argument("encode_tabular: batch layout mismatch");
  }
  std::vector<Var> parts(schema.feature_count());
  std::size_t num_i = 0, cat_i = 0;
  for (std::size_t pos = 0; pos < schema.feature_count(); ++pos) {
    if (schema.features[pos].is_numeric()) {
      const std::string prefix = "num." + std::to_string(num_i);
      Var xcol = tape.constant(batch.numeric_columns[num_i]);
      Var e = tape.matmul(xcol, params.get(prefix + ".w"));
      parts[pos] = tape.add_rowvec(e, params.get(prefix + ".b"));
      ++num_i;
    } else {
      const std::string prefix = "cat." + std::to_string(cat_i);
      parts[pos] = tape.gather_rows(params.get(prefix + ".emb"),
                                    batch.cat_columns[cat_i]);
      ++cat_i;
    }
  }
  Var fused = tape.concat_cols(parts);
  Var h = tape.relu(
      tape.add_rowvec(tape.matmul(fused, params.get("tab.l1.w")), params.get("tab.l1.b")));
  return tape.add_rowvec(tape.matmul(h, params.get("tab.l2.w")), params.get("tab.l2.b"));
}

Var adapt_semantic(Tape& tape, const ParamVars& params, Var embeddings) {
  const Tensor& e = tape.value(embeddings);
  const Tensor& w = tape.value(params.get("sem.w"));
  if (e.cols() != w.rows()) {
    throw std::invalid_argument("adapt_semantic: embedding dim " +
                                std::to_string(e.cols()) + " does not match adapter " +
                                std::to_string(w.rows()));
  }
  return tape.add_rowvec(tape.matmul(embeddings, params.get("sem.w")),
                         params.get("sem.b"));
}

Var project(Tape& tape, const ParamVars& params, Branch which, Var x, int proj_depth) {
  const std::string prefix = which == Branch::tab ? "proj_tab" : "proj_txt";
  Var h = tape.add_rowvec(tape.matmul(x, params.get(prefix + ".l1.w")),
                          params.get(prefix + ".l1.b"));
  if (proj_depth == 2) {
    h = tape.add_rowvec(tape.matmul(tape.relu(h), params.get(prefix + ".l2.w")),
                        params.get(prefix + ".l2.b"));
  }
  return tape.l2_normalize_rows(h);
}

namespace {

double dot_rows(const Tensor& a, std::size_t ra, const Tensor& b, std::size_t rb) {
  const double* pa = a.row(ra);
  const double* pb = b.row(rb);
  double s = 0.0;
  for (std::size_t c = 0; c < a.cols(); ++c) s += pa[c] * pb[c];
  return s;
}

}  // namespace

namespace {

// One spherical k-means run; returns the centroids and the summed cosine
// similarity of every point to its assigned centroid.
std::pair<Tensor, double> spherical_kmeans_once(const Tensor& z_tab, std::size_t k,
                                                std::uint64_t seed) {
  const std::size_t n = z_tab.rows(), d = z_tab.cols();
  Rng rng(seed);

  // D^2 seeding with squared chordal distance 2 - 2<x, c>.
  std::vector<std::size_t> centers;
  std::vector<bool> chosen(n, false);
  std::vector<double> dist2(n, 0.0);
  const std::size_t first = rng.next_index(n);
  centers.push_back(first);
  chosen[first] = true;
  for (std::size_t i = 0; i < n; ++i) {
    dist2[i] = std::max(0.0, 2.0 - 2.0 * dot_rows(z_tab, i, z_tab, first));
  }
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!chosen[i]) total += dist2[i];
    }
    std::size_t next = n;
    if (total > 1e-12) {
      double target = rng.next_double() * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (chosen[i]) continue;
        target -= dist2[i];
        if (target <= 0.0) {
          next = i;
          break;
        }
      }
    }
    if (next == n) {
      // all remaining mass is zero (duplicate points); take lowest unchosen index
      for (std::size_t i = 0; i < n; ++i) {
        if (!chosen[i]) {
          next = i;
          break;
        }
      }
    }
    centers.push_back(next);
    chosen[next] = true;
    for (std::size_t i = 0; i < n; ++i) {
      const double cand = std::max(0.0, 2.0 - 2.0 * dot_rows(z_tab, i, z_tab, next));
      dist2[i] = std::min(dist2[i], cand);
    }
  }

  Tensor mu(k, d);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t c = 0; c < d; ++c) mu.at(j, c) = z_tab.at(centers[j], c);
  }

  std::vector<std::size_t> assign(n, 0);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    std::vector<double> best_sim(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double bs = -HUGE_VAL;
      for (std::size_t j = 0; j < k; ++j) {
        const double s = dot_rows(z_tab, i, mu, j);
        if (s > bs) {
          bs = s;
          best = j;
        }
      }
      best_sim[i] = bs;
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;

    Tensor sums(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      double* srow = sums.row(assign[i]);
      const double* zrow = z_tab.row(i);
      for (std::size_t c = 0; c < d; ++c) srow[c] += zrow[c];
      ++counts[assign[i]];
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] == 0) {
        // re-seed an empty cluster with the point farthest from its centroid
        std::size_t worst = 0;
        double ws = HUGE_VAL;
        for (std::size_t i = 0; i < n; ++i) {
          if (best_sim[i] < ws) {
            ws = best_sim[i];
            worst = i;
          }
        }
        for (std::size_t c = 0; c < d; ++c) sums.at(j, c) = z_tab.at(worst, c);
        best_sim[worst] = HUGE_VAL;
        counts[j] = 1;
      }
      double norm = 0.0;
      const double* srow = sums.row(j);
      for (std::size_t c = 0; c < d; ++c) norm += srow[c] * srow[c];
      norm = std::sqrt(norm);
      if (norm < 1e-12) {
        for (std::size_t c = 0; c < d; ++c) mu.at(j, c) = z_tab.at(j % n, c);
      } else {
        for (std::size_t c = 0; c < d; ++c) mu.at(j, c) = srow[c] / norm;
      }
    }
  }

  double objective = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double bs = -HUGE_VAL;
    for (std::size_t j = 0; j < k; ++j) bs = std::max(bs, dot_rows(z_tab, i, mu, j));
    objective += bs;
  }
  return {std::move(mu), objective};
}

}  // namespace

Tensor init_centroids(const Tensor& z_tab, std::size_t k, std::uint64_t seed) {
  const std::size_t n = z_tab.rows();
  if (n < k) {
    throw std::invalid_argument("init_centroids: n=" + std::to_string(n) +
                                " < k=" + std::to_string(k));
  }
  for (std::size_t r = 0; r < n; ++r) {
    if (std::abs(z_tab.row_norm(r) - 1.0) > 1e-6) {
      throw std::invalid_argument("init_centroids: row " + std::to_string(r) +
                                  " is not unit-norm");
    }
  }
  // best of a fixed number of restarts; sub-seeds keep the result a pure
  // function of (z_tab, k, seed)
  constexpr int kRestarts = 10;
  Tensor best;
  double best_objective = -HUGE_VAL;
  for (int r = 0; r < kRestarts; ++r) {
    auto [mu, objective] = spherical_kmeans_once(
        z_tab, k, mix_seed(seed, 0x636b70 + static_cast<std::uint64_t>(r)));
    if (objective > best_objective) {
      best_objective = objective;
      best = std::move(mu);
    }
  }
  return best;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const std::string& schema_fp, std::uint64_t seed) {
  nlohmann::json doc;
  doc["schema_fingerprint"] = schema_fp;
  doc["seed"] = seed;
  doc["k"] = params.k;
  doc["numeric_count"] = params.numeric_count;
  doc["categorical_count"] = params.categorical_count;
  doc["dims"] = {{"d_e", params.dims.d_e}, {"h1", params.dims.h1},
                 {"h2", params.dims.h2},   {"h_p", params.dims.h_p},
                 {"d", params.dims.d},     {"d_plm", params.dims.d_plm},
                 {"proj_depth", params.dims.proj_depth}};
  nlohmann::json plist = nlohmann::json::array();
  for (const auto& [name, tensor] : params.params) {
    plist.push_back({{"name", name},
                     {"shape", tensor.shape},
                     {"values", tensor.values}});
  }
  doc["params"] = std::move(plist);
  write_text_file(path, doc.dump());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint parse failure: " + std::string(e.what()));
  }
  Checkpoint ckpt;
  try {
    ckpt.schema_fingerprint = doc.at("schema_fingerprint").get<std::string>();
    ckpt.seed = doc.at("seed").get<std::uint64_t>();
    ckpt.params.k = doc.at("k").get<std::size_t>();
    ckpt.params.numeric_count = doc.at("numeric_count").get<std::size_t>();
    ckpt.params.categorical_count = doc.at("categorical_count").get<std::size_t>();
    const auto& dims = doc.at("dims");
    ckpt.params.dims.d_e = dims.at("d_e").get<std::size_t>();
    ckpt.params.dims.h1 = dims.at("h1").get<std::size_t>();
    ckpt.params.dims.h2 = dims.at("h2").get<std::size_t>();
    ckpt.params.dims.h_p = dims.at("h_p").get<std::size_t>();
    ckpt.params.dims.d = dims.at("d").get<std::size_t>();
    ckpt.params.dims.d_plm = dims.at("d_plm").get<std::size_t>();
    ckpt.params.dims.proj_depth = dims.at("proj_depth").get<int>();
    for (const auto& pj : doc.at("params")) {
      Tensor t;
      t.shape = pj.at("shape").get<std::vector<std::size_t>>();
      t.values = pj.at("values").get<std::vector<double>>();
      if (t.shape.size() != 2 || t.shape[0] * t.shape[1] != t.values.size()) {
        throw ValidationError("checkpoint tensor shape mismatch");
      }
      ckpt.params.add(pj.at("name").get<std::string>(), std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint field failure: " + std::string(e.what()));
  }
  return ckpt;
}

}  // namespace tagcc
