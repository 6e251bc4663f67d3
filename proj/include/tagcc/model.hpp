#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tagcc/dataset.hpp"
#include "tagcc/tensor.hpp"

namespace tagcc {

struct ModelDims {
  std::size_t d_e = 16;    // per-feature embedding width
  std::size_t h1 = 256;    // first fused-MLP width
  std::size_t h2 = 128;    // shared latent width of both branches
  std::size_t h_p = 128;   // projection-head hidden width
  std::size_t d = 64;      // hypersphere dimension
  std::size_t d_plm = 384; // text-backbone dimension, overridden by the loaded matrix
  int proj_depth = 2;      // 1 = linear head, 2 = hidden layer + ReLU

  void validate() const;
};

// All learnable state: per-feature embedders, fused MLP, semantic adapter,
// both projection heads, and the centroids. Stored as an ordered list of
// named tensors so initialization, optimization, and checkpoints iterate in
// one fixed order.
struct ModelParams {
  ModelDims dims;
  std::size_t k = 0;
  std::size_t numeric_count = 0;
  std::size_t categorical_count = 0;
  std::vector<std::pair<std::string, Tensor>> params;
  std::unordered_map<std::string, std::size_t> index;

  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const { return index.count(name) > 0; }
  void add(const std::string& name, Tensor t);
};

// Glorot-uniform weights, zero biases, random unit-norm centroid placeholders.
ModelParams init_params(const Schema& schema, const ModelDims& dims, std::uint64_t seed);

// Random unit-norm rows (used for centroid placeholders and diagnostics).
Tensor random_unit_rows(std::size_t rows, std::size_t cols, std::uint64_t seed);

enum class Branch { tab, txt };

// Tape-registered views of the parameters, produced once per step.
struct ParamVars {
  std::unordered_map<std::string, Var> vars;
  Var get(const std::string& name) const;
};

// Registers every parameter as a leaf; names in `trainable` get gradients.
ParamVars register_params(Tape& tape, const ModelParams& params,
                          const std::vector<std::string>& trainable);
ParamVars register_params_const(Tape& tape, const ModelParams& params);

// One batch of encoded rows, addressed by dataset positions.
struct Batch {
  std::vector<Tensor> numeric_columns;        // one B x 1 tensor per numeric feature
  std::vector<std::vector<int>> cat_columns;  // one index list per categorical feature
  std::size_t size = 0;
};
Batch make_batch(const EncodedDataset& dataset, const std::vector<std::size_t>& rows);

// Type-specific feature embeddings, concatenated in schema order, fused by the
// two-layer MLP.
Var encode_tabular(Tape& tape, const ParamVars& params, const Schema& schema,
                   const EncodedDataset& dataset, const Batch& batch);

// Affine adapter on top of frozen backbone embeddings.
Var adapt_semantic(Tape& tape, const ParamVars& params, Var embeddings);

// Projection head followed by row normalization onto the unit hypersphere.
Var project(Tape& tape, const ParamVars& params, Branch which, Var x, int proj_depth);

// Spherical k-means (cosine similarity, renormalized means) with D^2 seeding.
// Rows must be unit-norm; deterministic per seed.
Tensor init_centroids(const Tensor& z_tab, std::size_t k, std::uint64_t seed);

// Checkpoint IO; round trips are bit-exact.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const std::string& schema_fp, std::uint64_t seed);
struct Checkpoint {
  ModelParams params;
  std::string schema_fingerprint;
  std::uint64_t seed = 0;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tagcc
