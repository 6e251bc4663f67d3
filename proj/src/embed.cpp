#include "tagcc/embed.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "tagcc/common.hpp"

namespace tagcc {

void EmbeddingMatrix::validate() const {
  if (dim == 0) throw ValidationError("embedding matrix has dim 0");
  if (vectors.rows() != row_ids.size() || vectors.cols() != dim) {
    throw ValidationError("embedding matrix shape does not match row_ids/dim");
  }
  if (!vectors.all_finite()) {
    throw ValidationError("embedding matrix contains non-finite values");
  }
}

std::uint64_t EmbeddingMatrix::content_hash() const {
  std::uint64_t h = fnv1a64(vectors.values.data(),
                            vectors.values.size() * sizeof(double));
  h ^= fnv1a64(row_ids.data(), row_ids.size() * sizeof(int));
  return h;
}

Tensor EmbeddingMatrix::gather(const std::vector<std::size_t>& positions) const {
  Tensor out(positions.size(), dim);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const double* src = vectors.row(positions[i]);
    double* dst = out.row(i);
    for (std::size_t c = 0; c < dim; ++c) dst[c] = src[c];
  }
  return out;
}

EmbeddingMatrix embed_texts(const std::vector<Anchor>& anchors,
                            const ClientConfig& config, int batch_size) {
  if (anchors.empty()) throw ValidationError("embed_texts: no anchors");
  if (batch_size < 1) throw ValidationError("embed_texts: batch_size must be >= 1");

  // identical texts share one request and one vector
  std::vector<std::string> unique_texts;
  std::unordered_map<std::string, std::size_t> text_index;
  for (const Anchor& a : anchors) {
    if (text_index.emplace(a.text, unique_texts.size()).second) {
      unique_texts.push_back(a.text);
    }
  }

  const std::size_t batches =
      (unique_texts.size() + static_cast<std::size_t>(batch_size) - 1) /
      static_cast<std::size_t>(batch_size);
  std::vector<std::vector<std::vector<double>>> results(batches);

  EmbeddingClient client(config);
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;

  auto worker = [&]() {
    while (true) {
      {
        std::lock_guard lock(error_mutex);
        if (first_error) return;
      }
      const std::size_t b = next.fetch_add(1);
      if (b >= batches) return;
      const std::size_t begin = b * static_cast<std::size_t>(batch_size);
      const std::size_t end =
          std::min(unique_texts.size(), begin + static_cast<std::size_t>(batch_size));
      std::vector<std::string> chunk(unique_texts.begin() + static_cast<long>(begin),
                                     unique_texts.begin() + static_cast<long>(end));
      try {
        results[b] = client.embed(chunk);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  const int threads =
      std::max(1, std::min<int>(config.max_concurrency, static_cast<int>(batches)));
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);

  std::vector<std::vector<double>> by_text(unique_texts.size());
  for (std::size_t b = 0; b < batches; ++b) {
    const std::size_t begin = b * static_cast<std::size_t>(batch_size);
    for (std::size_t i = 0; i < results[b].size(); ++i) {
      by_text[begin + i] = std::move(results[b][i]);
    }
  }

  const std::size_t dim = by_text.empty() ? 0 : by_text[0].size();
  for (std::size_t i = 0; i < by_text.size(); ++i) {
    if (by_text[i].size() != dim) {
      throw TransportError("embedding dimension inconsistency: got " +
                           std::to_string(by_text[i].size()) + " and " +
                           std::to_string(dim));
    }
  }

  EmbeddingMatrix matrix;
  matrix.dim = dim;
  matrix.provider_id = client.provider_id();
  matrix.vectors = Tensor(anchors.size(), dim);
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    matrix.row_ids.push_back(anchors[i].row_id);
    const std::vector<double>& v = by_text[text_index.at(anchors[i].text)];
    double* dst = matrix.vectors.row(i);
    for (std::size_t c = 0; c < dim; ++c) dst[c] = v[c];
  }
  matrix.validate();
  return matrix;
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& matrix) {
  matrix.validate();
  std::ostringstream out;
  nlohmann::json header;
  header["type"] = "header";
  header["dim"] = matrix.dim;
  header["provider_id"] = matrix.provider_id;
  out << header.dump() << "\n";
  for (std::size_t i = 0; i < matrix.n(); ++i) {
    nlohmann::json rec;
    rec["row_id"] = matrix.row_ids[i];
    std::vector<double> v(matrix.vectors.row(i), matrix.vectors.row(i) + matrix.dim);
    rec["vector"] = v;
    out << rec.dump() << "\n";
  }
  write_text_file(path, out.str());
}

EmbeddingMatrix load_embeddings_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open embeddings file: " + path.string());

  EmbeddingMatrix matrix;
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("embeddings file " + path.string() + " line " +
                            std::to_string(line_no) + ": " + e.what());
    }
    if (rec.value("type", "") == "header") {
      matrix.dim = rec.at("dim").get<std::size_t>();
      matrix.provider_id = rec.value("provider_id", std::string());
      have_header = true;
      continue;
    }
    matrix.row_ids.push_back(rec.at("row_id").get<int>());
    rows.push_back(rec.at("vector").get<std::vector<double>>());
  }
  if (!have_header) {
    throw ValidationError("embeddings file " + path.string() + " has no header record");
  }
  matrix.vectors = Tensor(rows.size(), matrix.dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != matrix.dim) {
      throw ValidationError("embeddings file row " + std::to_string(matrix.row_ids[i]) +
                            " has dim " + std::to_string(rows[i].size()) +
                            ", header says " + std::to_string(matrix.dim));
    }
    double* dst = matrix.vectors.row(i);
    for (std::size_t c = 0; c < matrix.dim; ++c) dst[c] = rows[i][c];
  }
  matrix.validate();
  return matrix;
}

EmbeddingMatrix load_precomputed(const std::filesystem::path& path,
                                 const std::vector<Anchor>& anchors) {
  EmbeddingMatrix matrix = load_embeddings_file(path);
  if (matrix.n() != anchors.size()) {
    throw ValidationError("embeddings file has " + std::to_string(matrix.n()) +
                          " rows, anchor set has " + std::to_string(anchors.size()));
  }
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (matrix.row_ids[i] != anchors[i].row_id) {
      throw ValidationError("embeddings row_id " + std::to_string(matrix.row_ids[i]) +
                            " at position " + std::to_string(i) +
                            " does not match anchor row_id " +
                            std::to_string(anchors[i].row_id));
    }
  }
  return matrix;
}

}  // namespace tagcc
