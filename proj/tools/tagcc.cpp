#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tagcc/anchors.hpp"
#include "tagcc/common.hpp"
#include "tagcc/dataset.hpp"
#include "tagcc/embed.hpp"
#include "tagcc/manifest.hpp"
#include "tagcc/metrics.hpp"
#include "tagcc/model.hpp"
#include "tagcc/net.hpp"
#include "tagcc/train.hpp"

namespace fs = std::filesystem;
using namespace tagcc;

namespace {

struct LoadedData {
  Schema schema;
  RawTable table;  // after missing-value removal
  EncodedDataset dataset;
};

LoadedData load_data(const fs::path& data_path, const fs::path& schema_path) {
  LoadedData out;
  out.schema = load_schema(schema_path);
  out.table = drop_missing(load_table(data_path, out.schema));
  if (out.table.n() == 0) {
    throw ValidationError("no complete rows remain after missing-value removal");
  }
  out.dataset = encode(out.table, out.schema);
  return out;
}

struct CommonOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "JSON config file");
  cmd->add_option("--seed", opts.seed, "random seed (overrides config)");
  cmd->add_option("--out", opts.out_dir, "output directory");
}

TrainConfig resolve_config(const CommonOpts& opts) {
  TrainConfig cfg;
  if (!opts.config_path.empty()) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(read_text_file(opts.config_path));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("config parse failure: " + std::string(e.what()));
    }
    cfg = train_config_from_json(doc);
  }
  if (opts.seed) cfg.seed = *opts.seed;
  return cfg;
}

void write_assignments(const fs::path& path, const std::vector<int>& row_ids,
                       const std::vector<int>& assignments) {
  std::ostringstream out;
  out << "row_id,cluster\n";
  for (std::size_t i = 0; i < row_ids.size(); ++i) {
    out << row_ids[i] << "," << assignments[i] << "\n";
  }
  write_text_file(path, out.str());
}

std::vector<std::pair<int, int>> read_assignments(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open assignments file: " + path.string());
  std::vector<std::pair<int, int>> out;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first && line == "row_id,cluster") {
      first = false;
      continue;
    }
    first = false;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw ValidationError("malformed assignment line: " + line);
    }
    out.emplace_back(std::stoi(line.substr(0, comma)),
                     std::stoi(line.substr(comma + 1)));
  }
  return out;
}

// Joins predicted assignments with per-source-row truth labels by row_id.
std::pair<std::vector<int>, std::vector<int>> align_labels(
    const std::vector<std::pair<int, int>>& pred, const std::vector<int>& truth) {
  std::vector<int> p, t;
  for (const auto& [row_id, cluster] : pred) {
    if (row_id < 0 || static_cast<std::size_t>(row_id) >= truth.size()) {
      throw ValidationError("assignment row_id " + std::to_string(row_id) +
                            " has no matching truth label (file has " +
                            std::to_string(truth.size()) + " labels)");
    }
    p.push_back(cluster);
    t.push_back(truth[static_cast<std::size_t>(row_id)]);
  }
  if (p.empty()) throw ValidationError("assignments file is empty");
  return {p, t};
}

std::string anchor_source_tag(const std::vector<Anchor>& anchors) {
  if (anchors.empty()) return "unknown";
  const bool any_llm = std::any_of(anchors.begin(), anchors.end(), [](const Anchor& a) {
    return a.source == AnchorSource::llm;
  });
  return any_llm ? "llm" : "fallback";
}

void require_llm_env(const ClientConfig& cfg) {
  if (cfg.url.empty() || cfg.model.empty() || cfg.api_key.empty()) {
    throw ValidationError(
        "LLM endpoint is not configured: set TAGCC_LLM_URL, TAGCC_LLM_MODEL and "
        "TAGCC_LLM_KEY, or pass --fallback");
  }
}

void populate_fallback_cache(AnchorCache& cache, const Schema& schema,
                             const RawTable& table,
                             const TransformationProtocol& protocol) {
  const std::string fp = schema_fingerprint(schema);
  const std::string ph = protocol_hash(protocol);
  for (std::size_t i = 0; i < table.n(); ++i) {
    const Anchor anchor = serialize_fallback(schema, table.row_ids[i], table.rows[i]);
    AnchorCache::Entry entry;
    entry.row_id = anchor.row_id;
    entry.row_hash = row_content_hash(table.rows[i]);
    entry.protocol_hash = ph;
    entry.schema_fp = fp;
    entry.source = AnchorSource::fallback;
    entry.text = anchor.text;
    cache.put(std::move(entry));
  }
}

// ------------------------------------------------------------------ anchor --

int cmd_anchor(const std::string& data_path, const std::string& schema_path,
               bool fallback, const std::string& prompts_dir,
               const std::string& cache_path, const CommonOpts& opts) {
  const LoadedData data = load_data(data_path, schema_path);
  fs::create_directories(opts.out_dir);
  const fs::path anchors_path = fs::path(opts.out_dir) / "anchors.jsonl";

  AnchorCache cache;
  const fs::path warm = cache_path.empty() ? anchors_path : fs::path(cache_path);
  cache.load_file(warm);

  const PromptKit prompts =
      prompts_dir.empty() ? default_prompt_kit() : load_prompt_kit(prompts_dir);

  TransformationProtocol protocol;
  std::vector<Anchor> anchors;
  if (fallback) {
    protocol = synthesize_protocol(data.schema, prompts, nullptr, nullptr);
    cache.set_protocol(protocol, "fallback");
    populate_fallback_cache(cache, data.schema, data.table, protocol);
    anchors = cache.anchors_for(schema_fingerprint(data.schema),
                                protocol_hash(protocol));
  } else {
    ClientConfig client_cfg = chat_config_from_env();
    require_llm_env(client_cfg);
    ChatClient client(client_cfg);
    protocol = synthesize_protocol(data.schema, prompts, &client, &cache);
    anchors = generate_anchors(data.schema, data.table, protocol, client, cache,
                               client_cfg.max_concurrency);
    std::cerr << "anchor: " << client.request_count() << " requests for "
              << anchors.size() << " rows\n";
  }
  cache.save(anchors_path);

  RunManifest manifest;
  manifest.command = "anchor";
  manifest.config = {{"fallback", fallback}};
  manifest.schema_fingerprint = schema_fingerprint(data.schema);
  manifest.anchor_source = fallback ? "fallback" : "llm";
  manifest.seed = opts.seed.value_or(0);
  manifest.add_input(data_path);
  manifest.add_input(schema_path);
  manifest.add_artifact(anchors_path);
  write_manifest(fs::path(opts.out_dir) / "manifest.json", manifest);

  std::cout << "wrote " << anchors.size() << " anchors to " << anchors_path.string()
            << "\n";
  return 0;
}

// ------------------------------------------------------------------- embed --

int cmd_embed(const std::string& anchors_path, int batch_size, const CommonOpts& opts) {
  const AnchorFile file = read_anchor_file(anchors_path);
  if (file.anchors.empty()) throw ValidationError("anchor file has no anchors");

  ClientConfig cfg = embedding_config_from_env();
  if (cfg.url.empty() || cfg.model.empty()) {
    throw ValidationError(
        "embedding endpoint is not configured: set TAGCC_EMB_URL and TAGCC_EMB_MODEL");
  }
  const EmbeddingMatrix matrix = embed_texts(file.anchors, cfg, batch_size);

  fs::create_directories(opts.out_dir);
  const fs::path emb_path = fs::path(opts.out_dir) / "embeddings.jsonl";
  save_embeddings(emb_path, matrix);

  RunManifest manifest;
  manifest.command = "embed";
  manifest.config = {{"batch_size", batch_size}};
  manifest.anchor_source = anchor_source_tag(file.anchors);
  manifest.embedding_provider = matrix.provider_id;
  manifest.seed = opts.seed.value_or(0);
  manifest.add_input(anchors_path);
  manifest.add_artifact(emb_path);
  write_manifest(fs::path(opts.out_dir) / "manifest.json", manifest);

  std::cout << "wrote " << matrix.n() << " embeddings (dim " << matrix.dim << ") to "
            << emb_path.string() << "\n";
  return 0;
}

// ------------------------------------------------------------------- train --

int cmd_train(const std::string& data_path, const std::string& schema_path,
              const std::string& embeddings_path, const std::string& anchors_path,
              const std::string& mode_str, std::optional<int> t_warm,
              std::optional<int> epochs, std::optional<int> batch_size,
              const CommonOpts& opts) {
  const LoadedData data = load_data(data_path, schema_path);
  TrainConfig cfg = resolve_config(opts);
  if (!mode_str.empty()) cfg.ablation_mode = ablation_mode_from_string(mode_str);
  if (t_warm) cfg.t_warm = *t_warm;
  if (epochs) cfg.epochs_total = *epochs;
  if (batch_size) cfg.batch_size = *batch_size;
  cfg.validate();

  std::string anchor_tag = "unknown";
  std::optional<EmbeddingMatrix> embeddings;
  if (!embeddings_path.empty()) {
    if (!anchors_path.empty()) {
      const AnchorFile anchors = read_anchor_file(anchors_path);
      embeddings = load_precomputed(embeddings_path, anchors.anchors);
      anchor_tag = anchor_source_tag(anchors.anchors);
    } else {
      embeddings = load_embeddings_file(embeddings_path);
    }
  } else if (cfg.ablation_mode != AblationMode::ttc) {
    throw ValidationError("mode " + to_string(cfg.ablation_mode) +
                          " needs --embeddings (only ttc trains without them)");
  }

  const TrainOutput out =
      train(data.dataset, data.schema, embeddings ? &*embeddings : nullptr, cfg);

  fs::create_directories(opts.out_dir);
  const fs::path out_dir(opts.out_dir);
  const std::string schema_fp = schema_fingerprint(data.schema);
  save_checkpoint(out_dir / "checkpoint.json", out.params, schema_fp, cfg.seed);
  write_train_log(out_dir / "train_log.jsonl", out.log);
  write_assignments(out_dir / "assignments.csv", data.dataset.row_ids,
                    out.result.assignments);

  RunManifest manifest;
  manifest.command = "train";
  manifest.config = train_config_to_json(cfg);
  manifest.schema_fingerprint = schema_fp;
  manifest.anchor_source = anchor_tag;
  manifest.embedding_provider = embeddings ? embeddings->provider_id : "";
  manifest.seed = cfg.seed;
  manifest.add_input(data_path);
  manifest.add_input(schema_path);
  if (!embeddings_path.empty()) manifest.add_input(embeddings_path);
  manifest.add_artifact(out_dir / "checkpoint.json");
  manifest.add_artifact(out_dir / "train_log.jsonl");
  manifest.add_artifact(out_dir / "assignments.csv");
  write_manifest(out_dir / "manifest.json", manifest);

  std::cout << "trained " << to_string(cfg.ablation_mode) << " for "
            << cfg.epochs_total << " epochs; artifacts in " << out_dir.string() << "\n";
  return 0;
}

// -------------------------------------------------------------------- eval --

struct MetricRow {
  std::string pred_path;
  double acc = 0.0, nmi_v = 0.0, ari_v = 0.0;
};

int cmd_eval(std::vector<std::string> pred_paths, const std::string& truth_path,
             int repeat, const CommonOpts& opts) {
  if (repeat > 0 && pred_paths.size() == 1 &&
      pred_paths[0].find("{seed}") != std::string::npos) {
    const std::string pattern = pred_paths[0];
    pred_paths.clear();
    for (int s = 0; s < repeat; ++s) {
      std::string p = pattern;
      p.replace(p.find("{seed}"), 6, std::to_string(s));
      pred_paths.push_back(p);
    }
  }
  if (pred_paths.empty()) throw ValidationError("no prediction files given");
  if (repeat > 0 && pred_paths.size() != static_cast<std::size_t>(repeat)) {
    throw ValidationError("--repeat " + std::to_string(repeat) + " given with " +
                          std::to_string(pred_paths.size()) + " prediction files");
  }

  const std::vector<int> truth = labels_to_ints(load_label_file(truth_path));

  std::vector<MetricRow> rows;
  for (const std::string& pred_path : pred_paths) {
    const auto [p, t] = align_labels(read_assignments(pred_path), truth);
    MetricRow row;
    row.pred_path = pred_path;
    row.acc = clustering_accuracy(p, t);
    row.nmi_v = nmi(p, t);
    row.ari_v = ari(p, t);
    rows.push_back(row);
  }

  auto mean_std = [&](auto getter) {
    double mean = 0.0;
    for (const MetricRow& r : rows) mean += getter(r);
    mean /= static_cast<double>(rows.size());
    double var = 0.0;
    for (const MetricRow& r : rows) {
      const double d = getter(r) - mean;
      var += d * d;
    }
    var /= static_cast<double>(rows.size());
    return std::make_pair(mean, std::sqrt(var));
  };
  const auto [acc_m, acc_s] = mean_std([](const MetricRow& r) { return r.acc; });
  const auto [nmi_m, nmi_s] = mean_std([](const MetricRow& r) { return r.nmi_v; });
  const auto [ari_m, ari_s] = mean_std([](const MetricRow& r) { return r.ari_v; });

  nlohmann::json report;
  report["runs"] = nlohmann::json::array();
  for (const MetricRow& r : rows) {
    report["runs"].push_back({{"pred", r.pred_path},
                              {"acc", r.acc},
                              {"nmi", r.nmi_v},
                              {"ari", r.ari_v}});
    std::cout << r.pred_path << "  ACC " << r.acc << "  NMI " << r.nmi_v << "  ARI "
              << r.ari_v << "\n";
  }
  report["mean"] = {{"acc", acc_m}, {"nmi", nmi_m}, {"ari", ari_m}};
  report["std"] = {{"acc", acc_s}, {"nmi", nmi_s}, {"ari", ari_s}};
  if (rows.size() > 1) {
    std::cout << "mean +/- std over " << rows.size() << " runs:"
              << "  ACC " << acc_m << " +/- " << acc_s << "  NMI " << nmi_m << " +/- "
              << nmi_s << "  ARI " << ari_m << " +/- " << ari_s << "\n";
  }

  fs::create_directories(opts.out_dir);
  const fs::path report_path = fs::path(opts.out_dir) / "metrics.json";
  write_text_file(report_path, report.dump(2) + "\n");

  RunManifest manifest;
  manifest.command = "eval";
  manifest.config = {{"repeat", repeat}};
  manifest.seed = opts.seed.value_or(0);
  for (const std::string& p : pred_paths) manifest.add_input(p);
  manifest.add_input(truth_path);
  manifest.add_artifact(report_path);
  manifest.metrics = report;
  write_manifest(fs::path(opts.out_dir) / "manifest.json", manifest);
  return 0;
}

// ------------------------------------------------------------------ export --

int cmd_export(const std::string& checkpoint_path, const std::string& data_path,
               const std::string& schema_path, const std::string& labels_path,
               const CommonOpts& opts) {
  const LoadedData data = load_data(data_path, schema_path);
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  const std::string schema_fp = schema_fingerprint(data.schema);
  if (ckpt.schema_fingerprint != schema_fp) {
    throw ValidationError("checkpoint was trained for schema " +
                          ckpt.schema_fingerprint + ", data has " + schema_fp);
  }

  std::vector<std::string> labels;
  if (!labels_path.empty()) labels = load_label_file(labels_path);

  const ClusterResult result = predict(ckpt.params, data.dataset, data.schema, 0.5);

  fs::create_directories(opts.out_dir);
  const fs::path export_path = fs::path(opts.out_dir) / "embedding_export.jsonl";
  std::ostringstream out;
  nlohmann::json header;
  header["type"] = "header";
  header["d"] = result.embeddings.cols();
  header["schema_fingerprint"] = schema_fp;
  header["n"] = data.dataset.n;
  out << header.dump() << "\n";
  for (std::size_t i = 0; i < data.dataset.n; ++i) {
    nlohmann::json rec;
    const int row_id = data.dataset.row_ids[i];
    rec["row_id"] = row_id;
    if (!labels.empty()) {
      if (static_cast<std::size_t>(row_id) >= labels.size()) {
        throw ValidationError("label file shorter than data row_id " +
                              std::to_string(row_id));
      }
      rec["label"] = labels[static_cast<std::size_t>(row_id)];
    }
    std::vector<double> v(result.embeddings.row(i),
                          result.embeddings.row(i) + result.embeddings.cols());
    rec["vector"] = v;
    out << rec.dump() << "\n";
  }
  write_text_file(export_path, out.str());

  RunManifest manifest;
  manifest.command = "export";
  manifest.schema_fingerprint = schema_fp;
  manifest.seed = ckpt.seed;
  manifest.add_input(checkpoint_path);
  manifest.add_input(data_path);
  manifest.add_input(schema_path);
  manifest.add_artifact(export_path);
  write_manifest(fs::path(opts.out_dir) / "manifest.json", manifest);

  std::cout << "exported " << data.dataset.n << " x " << result.embeddings.cols()
            << " embeddings to " << export_path.string() << "\n";
  return 0;
}

// ----------------------------------------------------------------- perturb --

int cmd_perturb(const std::string& data_path, const std::string& schema_path,
                const std::string& anchors_path, const std::string& embeddings_path,
                const std::string& truth_path, std::vector<double> epsilons,
                int seed_count, const CommonOpts& opts) {
  const LoadedData data = load_data(data_path, schema_path);
  const AnchorFile anchors = read_anchor_file(anchors_path);
  const EmbeddingMatrix embeddings = load_precomputed(embeddings_path, anchors.anchors);
  const std::vector<int> truth = labels_to_ints(load_label_file(truth_path));
  TrainConfig cfg = resolve_config(opts);

  if (epsilons.empty()) epsilons = {0.0, 0.1, 0.2, 0.4};
  if (std::find(epsilons.begin(), epsilons.end(), 0.0) == epsilons.end()) {
    epsilons.insert(epsilons.begin(), 0.0);  // baseline run per seed
  }
  std::sort(epsilons.begin(), epsilons.end());
  if (seed_count < 1) throw ValidationError("--seeds must be >= 1");

  nlohmann::json report = nlohmann::json::array();
  std::cout << "epsilon  seed  acc      delta_acc\n";
  for (int s = 0; s < seed_count; ++s) {
    const std::uint64_t run_seed = cfg.seed + static_cast<std::uint64_t>(s);
    double baseline_acc = 0.0;
    for (double eps : epsilons) {
      const auto perm = perturbation_permutation(data.dataset.n, eps, run_seed);
      EmbeddingMatrix permuted;
      permuted.dim = embeddings.dim;
      permuted.row_ids = embeddings.row_ids;
      permuted.provider_id = embeddings.provider_id;
      permuted.vectors = Tensor(embeddings.n(), embeddings.dim);
      for (std::size_t i = 0; i < embeddings.n(); ++i) {
        const double* src = embeddings.vectors.row(perm[i]);
        double* dst = permuted.vectors.row(i);
        for (std::size_t c = 0; c < embeddings.dim; ++c) dst[c] = src[c];
      }

      TrainConfig run_cfg = cfg;
      run_cfg.seed = run_seed;
      const TrainOutput out = train(data.dataset, data.schema, &permuted, run_cfg);
      std::vector<int> pv, tv;
      for (std::size_t i = 0; i < data.dataset.n; ++i) {
        const int row_id = data.dataset.row_ids[i];
        if (static_cast<std::size_t>(row_id) >= truth.size()) {
          throw ValidationError("truth labels shorter than data");
        }
        pv.push_back(out.result.assignments[i]);
        tv.push_back(truth[static_cast<std::size_t>(row_id)]);
      }
      const double acc = clustering_accuracy(pv, tv);
      if (eps == 0.0) baseline_acc = acc;
      const double delta = baseline_acc - acc;
      report.push_back({{"epsilon", eps},
                        {"seed", run_seed},
                        {"acc", acc},
                        {"delta_acc", delta}});
      std::cout << eps << "      " << run_seed << "     " << acc << "  " << delta
                << "\n";
    }
  }

  fs::create_directories(opts.out_dir);
  const fs::path report_path = fs::path(opts.out_dir) / "robustness.jsonl";
  std::ostringstream lines;
  for (const auto& row : report) lines << row.dump() << "\n";
  write_text_file(report_path, lines.str());

  RunManifest manifest;
  manifest.command = "perturb";
  manifest.config = train_config_to_json(cfg);
  manifest.config["epsilons"] = epsilons;
  manifest.config["seeds"] = seed_count;
  manifest.schema_fingerprint = schema_fingerprint(data.schema);
  manifest.anchor_source = anchor_source_tag(anchors.anchors);
  manifest.embedding_provider = embeddings.provider_id;
  manifest.seed = cfg.seed;
  manifest.add_input(data_path);
  manifest.add_input(schema_path);
  manifest.add_input(anchors_path);
  manifest.add_input(embeddings_path);
  manifest.add_artifact(report_path);
  manifest.metrics = report;
  write_manifest(fs::path(opts.out_dir) / "manifest.json", manifest);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tagcc: semantic-anchored deep tabular clustering"};
  app.require_subcommand(1);

  std::string data_path, schema_path, embeddings_path, anchors_path, checkpoint_path;
  std::string truth_path, labels_path, prompts_dir, cache_path, mode_str;
  std::vector<std::string> pred_paths;
  std::vector<double> epsilons;
  bool fallback = false;
  int batch = 32, repeat = 0, seed_count = 3;
  std::optional<int> t_warm, epochs, batch_size;
  CommonOpts anchor_opts, embed_opts, train_opts, eval_opts, export_opts, perturb_opts;

  CLI::App* anchor = app.add_subcommand("anchor", "synthesize the protocol and anchors");
  anchor->add_option("--data", data_path)->required();
  anchor->add_option("--schema", schema_path)->required();
  anchor->add_flag("--fallback", fallback, "serialization anchors, no LLM traffic");
  anchor->add_option("--prompts", prompts_dir, "prompt template directory");
  anchor->add_option("--cache", cache_path, "warm cache file to reuse");
  add_common(anchor, anchor_opts);

  CLI::App* embed = app.add_subcommand("embed", "embed anchors via the remote backbone");
  embed->add_option("--anchors", anchors_path)->required();
  embed->add_option("--batch-size", batch, "texts per request");
  add_common(embed, embed_opts);

  CLI::App* train_cmd = app.add_subcommand("train", "run the two-stage curriculum");
  train_cmd->add_option("--data", data_path)->required();
  train_cmd->add_option("--schema", schema_path)->required();
  train_cmd->add_option("--embeddings", embeddings_path);
  train_cmd->add_option("--anchors", anchors_path, "anchor file for alignment checks");
  train_cmd->add_option("--mode", mode_str, "full | ttc | tlc | tcc");
  train_cmd->add_option("--t-warm", t_warm, "warm-up epochs");
  train_cmd->add_option("--epochs", epochs, "total epochs");
  train_cmd->add_option("--batch-size", batch_size, "mini-batch size");
  add_common(train_cmd, train_opts);

  CLI::App* eval_cmd = app.add_subcommand("eval", "score assignments against labels");
  eval_cmd->add_option("--pred", pred_paths, "assignment files (or one {seed} pattern)")
      ->required();
  eval_cmd->add_option("--truth", truth_path)->required();
  eval_cmd->add_option("--repeat", repeat, "expand {seed} over 0..R-1");
  add_common(eval_cmd, eval_opts);

  CLI::App* export_cmd = app.add_subcommand("export", "dump latent rows for plotting");
  export_cmd->add_option("--checkpoint", checkpoint_path)->required();
  export_cmd->add_option("--data", data_path)->required();
  export_cmd->add_option("--schema", schema_path)->required();
  export_cmd->add_option("--labels", labels_path);
  add_common(export_cmd, export_opts);

  CLI::App* perturb = app.add_subcommand("perturb", "anchor-swap robustness sweep");
  perturb->add_option("--data", data_path)->required();
  perturb->add_option("--schema", schema_path)->required();
  perturb->add_option("--anchors", anchors_path)->required();
  perturb->add_option("--embeddings", embeddings_path)->required();
  perturb->add_option("--truth", truth_path)->required();
  perturb->add_option("--epsilons", epsilons, "perturbation fractions");
  perturb->add_option("--seeds", seed_count, "seeds per epsilon");
  add_common(perturb, perturb_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (anchor->parsed()) {
      return cmd_anchor(data_path, schema_path, fallback, prompts_dir, cache_path,
                        anchor_opts);
    }
    if (embed->parsed()) return cmd_embed(anchors_path, batch, embed_opts);
    if (train_cmd->parsed()) {
      return cmd_train(data_path, schema_path, embeddings_path, anchors_path, mode_str,
                       t_warm, epochs, batch_size, train_opts);
    }
    if (eval_cmd->parsed()) return cmd_eval(pred_paths, truth_path, repeat, eval_opts);
    if (export_cmd->parsed()) {
      return cmd_export(checkpoint_path, data_path, schema_path, labels_path,
                        export_opts);
    }
    if (perturb->parsed()) {
      return cmd_perturb(data_path, schema_path, anchors_path, embeddings_path,
                         truth_path, epsilons, seed_count, perturb_opts);
    }
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
