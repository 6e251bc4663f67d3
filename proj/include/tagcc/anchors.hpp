#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <tuple>
#include <vector>

#include "tagcc/dataset.hpp"
#include "tagcc/net.hpp"

namespace tagcc {

// Prompt texts live in versioned template files (prompts/) so they can be
// revised without code changes; compiled-in defaults mirror the shipped files.
struct PromptKit {
  std::string protocol_template;  // slots: {{meta_horizontal}} {{meta_vertical}}
  std::string meta_horizontal;
  std::string meta_vertical;

  std::string hash() const;
};

PromptKit default_prompt_kit();
PromptKit load_prompt_kit(const std::filesystem::path& dir);

std::string render_schema_block(const Schema& schema);
std::string render_row_block(const Schema& schema, const std::vector<std::string>& cells);

struct TransformationProtocol {
  std::string instruction_text;
  std::string schema_fp;
  std::vector<std::string> meta_principles;  // the two constraint texts applied
};

enum class AnchorSource { llm, fallback };
std::string to_string(AnchorSource s);
AnchorSource anchor_source_from_string(const std::string& s);

struct Anchor {
  int row_id = 0;
  std::string text;
  AnchorSource source = AnchorSource::fallback;
};

// Lookups are keyed on (schema fingerprint, row content hash, protocol hash),
// so identical rows share one generated text. The persisted anchor file keeps
// one record per row_id. Readers share, writers are exclusive.
class AnchorCache {
 public:
  struct Entry {
    int row_id = 0;
    std::string row_hash;
    std::string protocol_hash;
    std::string schema_fp;
    AnchorSource source = AnchorSource::fallback;
    std::string text;
  };

  AnchorCache() = default;
  AnchorCache(const AnchorCache&) = delete;
  AnchorCache& operator=(const AnchorCache&) = delete;

  // Merges records from an existing cache file; a missing file is a cold cache.
  void load_file(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::optional<Entry> find(const std::string& schema_fp, const std::string& row_hash,
                            const std::string& protocol_hash) const;
  void put(Entry entry);

  void set_protocol(const TransformationProtocol& protocol, const std::string& prompt_hash);
  std::optional<TransformationProtocol> protocol(const std::string& schema_fp,
                                                 const std::string& prompt_hash) const;

  // Anchors for one (schema, protocol) pair, ordered by row_id.
  std::vector<Anchor> anchors_for(const std::string& schema_fp,
                                  const std::string& protocol_hash) const;
  std::vector<Anchor> all_anchors_sorted() const;
  std::optional<TransformationProtocol> any_protocol() const;
  std::size_t size() const;

 private:
  // primary store: one entry per row, file order = (schema, protocol, row_id)
  std::map<std::tuple<std::string, std::string, int>, Entry> rows_;
  // content index for cache hits; duplicate rows point at one shared text
  std::map<std::tuple<std::string, std::string, std::string>, Entry> by_content_;
  std::map<std::pair<std::string, std::string>, TransformationProtocol> protocols_;
  mutable std::shared_mutex mutex_;
};

std::string protocol_hash(const TransformationProtocol& protocol);

// Asks the model to distill the schema into a transformation protocol under
// both meta-principles. client == nullptr selects dry-run mode: a canned
// serialization protocol with no network traffic.
TransformationProtocol synthesize_protocol(const Schema& schema, const PromptKit& prompts,
                                           ChatClient* client, AnchorCache* cache);

// Protocol-guided description of one row; cached per (schema, row, protocol).
Anchor generate_anchor(const Schema& schema, int row_id,
                       const std::vector<std::string>& cells,
                       const TransformationProtocol& protocol, ChatClient& client,
                       AnchorCache& cache);

// Generates anchors for every row with bounded concurrency; output ordered by
// row_id regardless of completion order.
std::vector<Anchor> generate_anchors(const Schema& schema, const RawTable& table,
                                     const TransformationProtocol& protocol,
                                     ChatClient& client, AnchorCache& cache,
                                     int max_concurrency = 4);

// Deterministic "The <name> is <value>." serialization in schema order.
Anchor serialize_fallback(const Schema& schema, int row_id,
                          const std::vector<std::string>& cells);
std::vector<Anchor> serialize_fallback_all(const Schema& schema, const RawTable& table);

// Permutation behind perturb_anchors: identity outside the perturbed subset,
// a single cycle (hence a derangement) inside it.
std::vector<std::size_t> perturbation_permutation(std::size_t n, double epsilon,
                                                  std::uint64_t seed);

// Swaps the anchors of ceil(epsilon*n) rows among each other. Preserves the
// multiset of texts; deterministic per seed.
std::vector<Anchor> perturb_anchors(const std::vector<Anchor>& anchors, double epsilon,
                                    std::uint64_t seed);

// Anchor file IO (same format the cache persists).
void write_anchor_file(const std::filesystem::path& path, const AnchorCache& cache);
struct AnchorFile {
  std::optional<TransformationProtocol> protocol;
  std::vector<Anchor> anchors;  // ordered by row_id
};
AnchorFile read_anchor_file(const std::filesystem::path& path);

}  // namespace tagcc
