#include "tagcc/anchors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "tagcc/common.hpp"

namespace tagcc {

namespace {

constexpr const char* kDefaultProtocolTemplate =
    "You are a protocol synthesizer for tabular data description. Given the dataset\n"
    "schema below, write a concise transformation protocol: a short numbered list of\n"
    "instructions that an annotator will follow to turn one table row into a brief,\n"
    "discriminative natural-language description of the sample.\n"
    "\n"
    "The protocol must apply both principles:\n"
    "1) {{meta_horizontal}}\n"
    "2) {{meta_vertical}}\n"
    "\n"
    "Respond with the protocol text only.";

constexpr const char* kDefaultMetaHorizontal =
    "Horizontal salience: maximize information density. Keep only the fields that "
    "matter for telling samples apart and filter out administrative noise such as "
    "identifiers, bookkeeping codes, and fields irrelevant to the analytic goal.";

constexpr const char* kDefaultMetaVertical =
    "Vertical distinctiveness: maximize semantic separability. Interpret symbolic or "
    "coded values into open-world concepts from the domain expert's perspective, so "
    "that samples of a different nature read as clearly different descriptions.";

constexpr const char* kFallbackInstruction =
    "Serialize the row directly: for each feature in schema order, emit the sentence "
    "'The <feature name> is <value>.' and join the sentences with single spaces.";

std::string replace_all(std::string text, const std::string& needle,
                        const std::string& replacement) {
  std::size_t pos = 0;
  while ((pos = text.find(needle, pos)) != std::string::npos) {
    text.replace(pos, needle.size(), replacement);
    pos += replacement.size();
  }
  return text;
}

}  // namespace

std::string PromptKit::hash() const {
  return hash_hex(protocol_template + "\x1e" + meta_horizontal + "\x1e" + meta_vertical);
}

PromptKit default_prompt_kit() {
  PromptKit kit;
  kit.protocol_template = kDefaultProtocolTemplate;
  kit.meta_horizontal = kDefaultMetaHorizontal;
  kit.meta_vertical = kDefaultMetaVertical;
  return kit;
}

PromptKit load_prompt_kit(const std::filesystem::path& dir) {
  PromptKit kit;
  kit.protocol_template = read_text_file(dir / "protocol_request.txt");
  kit.meta_horizontal = read_text_file(dir / "meta_horizontal.txt");
  kit.meta_vertical = read_text_file(dir / "meta_vertical.txt");
  if (kit.protocol_template.empty() || kit.meta_horizontal.empty() ||
      kit.meta_vertical.empty()) {
    throw ValidationError("prompt kit in " + dir.string() + " has empty templates");
  }
  return kit;
}

std::string render_schema_block(const Schema& schema) {
  std::ostringstream out;
  out << "Dataset: " << schema.dataset_name << "\n";
  if (!schema.context.empty()) out << "Context: " << schema.context << "\n";
  out << "Clusters sought: " << schema.k_star << "\n";
  out << "Features:\n";
  for (const FeatureSpec& f : schema.features) {
    out << "- " << f.name;
    if (f.is_numeric()) {
      out << " (numeric)";
    } else {
      out << " (categorical: ";
      for (std::size_t i = 0; i < f.categories.size(); ++i) {
        if (i > 0) out << ", ";
        out << f.categories[i];
      }
      out << ")";
    }
    if (!f.description.empty()) out << ": " << f.description;
    out << "\n";
  }
  return out.str();
}

std::string render_row_block(const Schema& schema,
                             const std::vector<std::string>& cells) {
  if (cells.size() != schema.feature_count()) {
    throw ValidationError("row block: cell count does not match schema");
  }
  std::ostringstream out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    out << schema.features[i].name << ": " << cells[i] << "\n";
  }
  return out.str();
}

std::string to_string(AnchorSource s) {
  return s == AnchorSource::llm ? "llm" : "fallback";
}

AnchorSource anchor_source_from_string(const std::string& s) {
  if (s == "llm") return AnchorSource::llm;
  if (s == "fallback") return AnchorSource::fallback;
  throw ValidationError("unknown anchor source '" + s + "'");
}

std::string protocol_hash(const TransformationProtocol& protocol) {
  return hash_hex(protocol.instruction_text);
}

void AnchorCache::load_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("anchor cache " + path.string() + " line " +
                            std::to_string(line_no) + ": " + e.what());
    }
    const std::string type = rec.value("type", "anchor");
    if (type == "protocol") {
      TransformationProtocol protocol;
      protocol.instruction_text = rec.at("instruction_text").get<std::string>();
      protocol.schema_fp = rec.at("schema_fingerprint").get<std::string>();
      protocol.meta_principles =
          rec.value("meta_principles", std::vector<std::string>{});
      set_protocol(protocol, rec.value("prompt_hash", std::string()));
    } else {
      Entry e;
      e.row_id = rec.at("row_id").get<int>();
      e.row_hash = rec.at("row_hash").get<std::string>();
      e.protocol_hash = rec.at("protocol_hash").get<std::string>();
      e.schema_fp = rec.at("schema_fingerprint").get<std::string>();
      e.source = anchor_source_from_string(rec.at("source").get<std::string>());
      e.text = rec.at("text").get<std::string>();
      put(std::move(e));
    }
  }
}

void AnchorCache::save(const std::filesystem::path& path) const {
  std::shared_lock lock(mutex_);
  std::ostringstream out;
  for (const auto& [key, protocol] : protocols_) {
    nlohmann::json rec;
    rec["type"] = "protocol";
    rec["instruction_text"] = protocol.instruction_text;
    rec["schema_fingerprint"] = protocol.schema_fp;
    rec["meta_principles"] = protocol.meta_principles;
    rec["prompt_hash"] = key.second;
    out << rec.dump() << "\n";
  }
  // map iteration is key-ordered, so the file is byte-stable across runs
  for (const auto& [key, e] : rows_) {
    nlohmann::json rec;
    rec["type"] = "anchor";
    rec["row_id"] = e.row_id;
    rec["row_hash"] = e.row_hash;
    rec["protocol_hash"] = e.protocol_hash;
    rec["schema_fingerprint"] = e.schema_fp;
    rec["source"] = to_string(e.source);
    rec["text"] = e.text;
    out << rec.dump() << "\n";
  }
  write_text_file(path, out.str());
}

std::optional<AnchorCache::Entry> AnchorCache::find(const std::string& schema_fp,
                                                    const std::string& row_hash,
                                                    const std::string& proto_hash) const {
  std::shared_lock lock(mutex_);
  auto it = by_content_.find(std::make_tuple(schema_fp, row_hash, proto_hash));
  if (it == by_content_.end()) return std::nullopt;
  return it->second;
}

void AnchorCache::put(Entry entry) {
  std::unique_lock lock(mutex_);
  by_content_[std::make_tuple(entry.schema_fp, entry.row_hash, entry.protocol_hash)] =
      entry;
  rows_[std::make_tuple(entry.schema_fp, entry.protocol_hash, entry.row_id)] =
      std::move(entry);
}

void AnchorCache::set_protocol(const TransformationProtocol& protocol,
                               const std::string& prompt_hash) {
  std::unique_lock lock(mutex_);
  protocols_[std::make_pair(protocol.schema_fp, prompt_hash)] = protocol;
}

std::optional<TransformationProtocol> AnchorCache::protocol(
    const std::string& schema_fp, const std::string& prompt_hash) const {
  std::shared_lock lock(mutex_);
  auto it = protocols_.find(std::make_pair(schema_fp, prompt_hash));
  if (it == protocols_.end()) return std::nullopt;
  return it->second;
}

std::vector<Anchor> AnchorCache::anchors_for(const std::string& schema_fp,
                                             const std::string& proto_hash) const {
  std::shared_lock lock(mutex_);
  std::vector<Anchor> out;
  for (const auto& [key, e] : rows_) {
    if (e.schema_fp == schema_fp && e.protocol_hash == proto_hash) {
      out.push_back(Anchor{e.row_id, e.text, e.source});
    }
  }
  std::sort(out.begin(), out.end(),
            [](const Anchor& a, const Anchor& b) { return a.row_id < b.row_id; });
  return out;
}

std::vector<Anchor> AnchorCache::all_anchors_sorted() const {
  std::shared_lock lock(mutex_);
  std::vector<Anchor> out;
  for (const auto& [key, e] : rows_) {
    out.push_back(Anchor{e.row_id, e.text, e.source});
  }
  std::sort(out.begin(), out.end(),
            [](const Anchor& a, const Anchor& b) { return a.row_id < b.row_id; });
  return out;
}

std::optional<TransformationProtocol> AnchorCache::any_protocol() const {
  std::shared_lock lock(mutex_);
  if (protocols_.empty()) return std::nullopt;
  return protocols_.begin()->second;
}

std::size_t AnchorCache::size() const {
  std::shared_lock lock(mutex_);
  return rows_.size();
}

TransformationProtocol synthesize_protocol(const Schema& schema, const PromptKit& prompts,
                                           ChatClient* client, AnchorCache* cache) {
  TransformationProtocol protocol;
  protocol.schema_fp = schema_fingerprint(schema);

  if (client == nullptr) {
    // dry-run: the deterministic serialization protocol, no network traffic
    protocol.instruction_text = kFallbackInstruction;
    return protocol;
  }

  const std::string prompt_hash = prompts.hash();
  if (cache) {
    if (auto cached = cache->protocol(protocol.schema_fp, prompt_hash)) return *cached;
  }

  std::string system_msg = prompts.protocol_template;
  system_msg = replace_all(system_msg, "{{meta_horizontal}}", prompts.meta_horizontal);
  system_msg = replace_all(system_msg, "{{meta_vertical}}", prompts.meta_vertical);
  const std::string user_msg = render_schema_block(schema);

  protocol.instruction_text = client->complete(system_msg, user_msg);
  if (protocol.instruction_text.empty()) {
    throw TransportError("protocol synthesis returned empty text");
  }
  protocol.meta_principles = {prompts.meta_horizontal, prompts.meta_vertical};
  if (cache) cache->set_protocol(protocol, prompt_hash);
  return protocol;
}

Anchor generate_anchor(const Schema& schema, int row_id,
                       const std::vector<std::string>& cells,
                       const TransformationProtocol& protocol, ChatClient& client,
                       AnchorCache& cache) {
  const std::string schema_fp = schema_fingerprint(schema);
  if (protocol.schema_fp != schema_fp) {
    throw ValidationError("protocol fingerprint " + protocol.schema_fp +
                          " does not match schema " + schema_fp);
  }
  const std::string row_hash = row_content_hash(cells);
  const std::string proto_hash = protocol_hash(protocol);
  if (auto hit = cache.find(schema_fp, row_hash, proto_hash)) {
    return Anchor{row_id, hit->text, hit->source};
  }

  const std::string text =
      client.complete(protocol.instruction_text, render_row_block(schema, cells));
  if (text.empty()) throw TransportError("anchor generation returned empty text");

  AnchorCache::Entry entry;
  entry.row_id = row_id;
  entry.row_hash = row_hash;
  entry.protocol_hash = proto_hash;
  entry.schema_fp = schema_fp;
  entry.source = AnchorSource::llm;
  entry.text = text;
  cache.put(std::move(entry));
  return Anchor{row_id, text, AnchorSource::llm};
}

std::vector<Anchor> generate_anchors(const Schema& schema, const RawTable& table,
                                     const TransformationProtocol& protocol,
                                     ChatClient& client, AnchorCache& cache,
                                     int max_concurrency) {
  const std::size_t n = table.n();
  std::vector<Anchor> out(n);
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;

  auto worker = [&]() {
    while (true) {
      {
        std::lock_guard lock(error_mutex);
        if (first_error) return;
      }
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        out[i] = generate_anchor(schema, table.row_ids[i], table.rows[i], protocol,
                                 client, cache);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  const int threads = std::max(1, std::min<int>(max_concurrency, static_cast<int>(n)));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);

  std::sort(out.begin(), out.end(),
            [](const Anchor& a, const Anchor& b) { return a.row_id < b.row_id; });
  return out;
}

Anchor serialize_fallback(const Schema& schema, int row_id,
                          const std::vector<std::string>& cells) {
  if (cells.size() != schema.feature_count()) {
    throw ValidationError("serialize_fallback: cell count does not match schema");
  }
  if (row_has_missing(cells)) {
    throw ValidationError("serialize_fallback: row has missing values");
  }
  std::ostringstream out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i > 0) out << " ";
    out << "The " << schema.features[i].name << " is " << cells[i] << ".";
  }
  return Anchor{row_id, out.str(), AnchorSource::fallback};
}

std::vector<Anchor> serialize_fallback_all(const Schema& schema, const RawTable& table) {
  std::vector<Anchor> out;
  out.reserve(table.n());
  for (std::size_t i = 0; i < table.n(); ++i) {
    out.push_back(serialize_fallback(schema, table.row_ids[i], table.rows[i]));
  }
  return out;
}

std::vector<std::size_t> perturbation_permutation(std::size_t n, double epsilon,
                                                  std::uint64_t seed) {
  if (epsilon < 0.0 || epsilon > 1.0) {
    throw std::invalid_argument("epsilon must be in [0, 1], got " +
                                std::to_string(epsilon));
  }
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  if (epsilon == 0.0 || n < 2) return perm;

  std::size_t subset = static_cast<std::size_t>(
      std::ceil(epsilon * static_cast<double>(n)));
  subset = std::min(subset, n);
  if (subset < 2) subset = 2;  // a 1-element subset cannot be deranged

  Rng rng(mix_seed(seed, 0x70657274) /* "pert" */);
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  // partial Fisher-Yates: the first `subset` entries are the chosen rows
  for (std::size_t i = 0; i < subset; ++i) {
    const std::size_t j = i + rng.next_index(n - i);
    std::swap(pool[i], pool[j]);
  }
  std::vector<std::size_t> chosen(pool.begin(), pool.begin() + static_cast<long>(subset));
  std::sort(chosen.begin(), chosen.end());

  // Sattolo's algorithm yields a single cycle over the subset: a derangement.
  std::vector<std::size_t> cycle = chosen;
  for (std::size_t i = cycle.size() - 1; i > 0; --i) {
    const std::size_t j = rng.next_index(i);
    std::swap(cycle[i], cycle[j]);
  }
  for (std::size_t i = 0; i < chosen.size(); ++i) perm[chosen[i]] = cycle[i];
  return perm;
}

std::vector<Anchor> perturb_anchors(const std::vector<Anchor>& anchors, double epsilon,
                                    std::uint64_t seed) {
  const std::vector<std::size_t> perm =
      perturbation_permutation(anchors.size(), epsilon, seed);
  std::vector<Anchor> out(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    out[i] = anchors[perm[i]];
    out[i].row_id = anchors[i].row_id;  // anchor moves, row identity stays
  }
  return out;
}

void write_anchor_file(const std::filesystem::path& path, const AnchorCache& cache) {
  cache.save(path);
}

AnchorFile read_anchor_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ValidationError("anchor file not found: " + path.string());
  }
  AnchorCache cache;
  cache.load_file(path);
  AnchorFile out;
  out.protocol = cache.any_protocol();
  out.anchors = cache.all_anchors_sorted();
  return out;
}

}  // namespace tagcc
