// Regenerates the offline fixtures under tests/fixtures/: anchor files from a
// plain text list (one line per data row) or the built-in serialization
// fallback, and embedding files from the deterministic lexical embedder that
// stands in for a remote backbone in offline runs.
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tagcc/anchors.hpp"
#include "tagcc/common.hpp"
#include "tagcc/dataset.hpp"
#include "tagcc/embed.hpp"
#include "text_embed.hpp"

using namespace tagcc;

namespace {

constexpr const char* kExpertProtocol =
    "1. Identify the broad kind of the sample from its most telling fields before "
    "writing anything. 2. Describe the sample in one or two plain-language sentences "
    "from a domain expert's perspective, interpreting coded values as real-world "
    "concepts. 3. Mention only traits that help distinguish this sample from samples "
    "of a different kind; omit bookkeeping fields.";

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

int make_anchor_file(const std::string& data_path, const std::string& schema_path,
                     const std::string& texts_path, const std::string& out_path) {
  const Schema schema = load_schema(schema_path);
  const RawTable table = drop_missing(load_table(data_path, schema));
  const std::string fp = schema_fingerprint(schema);

  AnchorCache cache;
  TransformationProtocol protocol;
  protocol.schema_fp = fp;

  if (texts_path.empty()) {
    const PromptKit prompts = default_prompt_kit();
    protocol = synthesize_protocol(schema, prompts, nullptr, nullptr);
    cache.set_protocol(protocol, "fallback");
    for (std::size_t i = 0; i < table.n(); ++i) {
      const Anchor a = serialize_fallback(schema, table.row_ids[i], table.rows[i]);
      AnchorCache::Entry e;
      e.row_id = a.row_id;
      e.row_hash = row_content_hash(table.rows[i]);
      e.protocol_hash = protocol_hash(protocol);
      e.schema_fp = fp;
      e.source = AnchorSource::fallback;
      e.text = a.text;
      cache.put(e);
    }
  } else {
    const std::vector<std::string> texts = read_lines(texts_path);
    if (texts.size() != table.n()) {
      throw ValidationError("texts file has " + std::to_string(texts.size()) +
                            " lines, table has " + std::to_string(table.n()) + " rows");
    }
    protocol.instruction_text = kExpertProtocol;
    const PromptKit prompts = default_prompt_kit();
    protocol.meta_principles = {prompts.meta_horizontal, prompts.meta_vertical};
    cache.set_protocol(protocol, prompts.hash());
    for (std::size_t i = 0; i < table.n(); ++i) {
      if (texts[i].empty()) throw ValidationError("empty anchor text at row " +
                                                  std::to_string(i));
      AnchorCache::Entry e;
      e.row_id = table.row_ids[i];
      e.row_hash = row_content_hash(table.rows[i]);
      e.protocol_hash = protocol_hash(protocol);
      e.schema_fp = fp;
      e.source = AnchorSource::llm;
      e.text = texts[i];
      cache.put(e);
    }
  }
  cache.save(out_path);
  std::cout << "wrote " << table.n() << " anchors to " << out_path << "\n";
  return 0;
}

int make_embedding_file(const std::string& anchors_path, std::size_t dim,
                        const std::string& out_path) {
  const AnchorFile file = read_anchor_file(anchors_path);
  if (file.anchors.empty()) throw ValidationError("anchor file is empty");
  std::vector<std::string> texts;
  texts.reserve(file.anchors.size());
  for (const Anchor& a : file.anchors) texts.push_back(a.text);
  const auto vectors = tagcc::testing::lexical_embedding_set(texts, dim);

  EmbeddingMatrix matrix;
  matrix.dim = dim;
  matrix.provider_id = tagcc::testing::kLexicalSetProviderId;
  matrix.vectors = Tensor(file.anchors.size(), dim);
  for (std::size_t i = 0; i < file.anchors.size(); ++i) {
    matrix.row_ids.push_back(file.anchors[i].row_id);
    for (std::size_t c = 0; c < dim; ++c) matrix.vectors.at(i, c) = vectors[i][c];
  }
  save_embeddings(out_path, matrix);
  std::cout << "wrote " << matrix.n() << " x " << dim << " embeddings to " << out_path
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fixture generator for offline anchors/embeddings"};
  app.require_subcommand(1);

  std::string data_path, schema_path, texts_path, anchors_path, out_path;
  std::size_t dim = 128;

  CLI::App* anchors = app.add_subcommand("anchors", "build an anchor file");
  anchors->add_option("--data", data_path)->required();
  anchors->add_option("--schema", schema_path)->required();
  anchors->add_option("--texts", texts_path,
                      "one anchor text per row; omit for fallback serialization");
  anchors->add_option("--out", out_path)->required();

  CLI::App* embed = app.add_subcommand("embed", "build an embedding file");
  embed->add_option("--anchors", anchors_path)->required();
  embed->add_option("--dim", dim);
  embed->add_option("--out", out_path)->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (anchors->parsed()) {
      return make_anchor_file(data_path, schema_path, texts_path, out_path);
    }
    if (embed->parsed()) return make_embedding_file(anchors_path, dim, out_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
