#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tagcc/anchors.hpp"
#include "tagcc/net.hpp"
#include "tagcc/tensor.hpp"

namespace tagcc {

// Frozen backbone embeddings, one vector per anchor in row_id order. Treated
// as a constant during training; no module mutates it once loaded.
struct EmbeddingMatrix {
  std::size_t dim = 0;
  std::vector<int> row_ids;
  Tensor vectors;  // n x dim
  std::string provider_id;

  std::size_t n() const { return row_ids.size(); }
  void validate() const;
  std::uint64_t content_hash() const;

  // Row slice aligned to positions (for batches and permutations).
  Tensor gather(const std::vector<std::size_t>& positions) const;
};

// Embeds each anchor via the remote service. Identical texts are requested
// once and share one vector. Batched requests with bounded concurrency.
EmbeddingMatrix embed_texts(const std::vector<Anchor>& anchors,
                            const ClientConfig& config, int batch_size = 32);

// Precomputed-embedding file: a JSON header record carrying dim/provider_id,
// then one record with row_id and vector per line.
void save_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& matrix);
EmbeddingMatrix load_embeddings_file(const std::filesystem::path& path);

// Loads and validates alignment against an anchor set (same row_ids, same order).
EmbeddingMatrix load_precomputed(const std::filesystem::path& path,
                                 const std::vector<Anchor>& anchors);

}  // namespace tagcc
