#include "tagcc/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unordered_map>

#include "tagcc/common.hpp"

namespace tagcc {

namespace {

struct AdamSlot {
  Tensor m;
  Tensor v;
  long t = 0;
};

struct AdamState {
  std::unordered_map<std::string, AdamSlot> slots;
};

void adam_update(Tensor& param, const Tensor& grad, AdamSlot& slot,
                 const TrainConfig& cfg) {
  if (slot.t == 0) {
    slot.m = Tensor(param.rows(), param.cols());
    slot.v = Tensor(param.rows(), param.cols());
  }
  ++slot.t;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(slot.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(slot.t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad.values[i];
    slot.m.values[i] = b1 * slot.m.values[i] + (1.0 - b1) * g;
    slot.v.values[i] = b2 * slot.v.values[i] + (1.0 - b2) * g * g;
    const double mhat = slot.m.values[i] / bc1;
    const double vhat = slot.v.values[i] / bc2;
    param.values[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_epsilon);
  }
}

void renormalize_centroids(ModelParams& params) {
  Tensor& mu = params.get("centroids");
  for (std::size_t r = 0; r < mu.rows(); ++r) {
    const double norm = mu.row_norm(r);
    if (norm < 1e-12) {
      throw NumericError("centroid " + std::to_string(r) + " collapsed to zero norm");
    }
    double* row = mu.row(r);
    for (std::size_t c = 0; c < mu.cols(); ++c) row[c] /= norm;
  }
}

bool uses_text_branch(AblationMode mode) {
  return mode == AblationMode::full || mode == AblationMode::tcc ||
         mode == AblationMode::tlc;
}

bool uses_warmup(AblationMode mode) {
  return mode == AblationMode::full || mode == AblationMode::tcc;
}

// Latent rows that drive the clustering objective for a mode.
Tensor full_forward_latent(const ModelParams& params, const Schema& schema,
                           const EncodedDataset& dataset, const Tensor* embedding_rows,
                           AblationMode mode) {
  Tape tape;
  ParamVars vars = register_params_const(tape, params);
  std::vector<std::size_t> rows(dataset.n);
  for (std::size_t i = 0; i < dataset.n; ++i) rows[i] = i;
  if (mode == AblationMode::tlc) {
    Var emb = tape.constant(*embedding_rows);
    Var z = project(tape, vars, Branch::txt, adapt_semantic(tape, vars, emb),
                    params.dims.proj_depth);
    return tape.value(z);
  }
  Batch batch = make_batch(dataset, rows);
  Var z = project(tape, vars, Branch::tab,
                  encode_tabular(tape, vars, schema, dataset, batch),
                  params.dims.proj_depth);
  return tape.value(z);
}

Tensor soft_assign_values(const Tensor& z, const Tensor& mu, double tau) {
  Tensor sims;
  Tensor mu_t(mu.cols(), mu.rows());
  for (std::size_t r = 0; r < mu.rows(); ++r) {
    for (std::size_t c = 0; c < mu.cols(); ++c) mu_t.at(c, r) = mu.at(r, c);
  }
  mm_nn(z, mu_t, sims);
  Tensor p(sims.rows(), sims.cols());
  for (std::size_t r = 0; r < sims.rows(); ++r) {
    double m = -HUGE_VAL;
    for (std::size_t c = 0; c < sims.cols(); ++c) m = std::max(m, sims.at(r, c) / tau);
    double denom = 0.0;
    for (std::size_t c = 0; c < sims.cols(); ++c) {
      p.at(r, c) = std::exp(sims.at(r, c) / tau - m);
      denom += p.at(r, c);
    }
    for (std::size_t c = 0; c < sims.cols(); ++c) p.at(r, c) /= denom;
  }
  return p;
}

std::vector<int> argmax_rows(const Tensor& soft) {
  std::vector<int> out(soft.rows(), 0);
  for (std::size_t r = 0; r < soft.rows(); ++r) {
    double best = -HUGE_VAL;
    int best_j = 0;
    for (std::size_t c = 0; c < soft.cols(); ++c) {
      if (soft.at(r, c) > best) {
        best = soft.at(r, c);
        best_j = static_cast<int>(c);
      }
    }
    out[r] = best_j;
  }
  return out;
}

void dump_diagnostics(const ModelParams& params, const StepLosses& losses, int epoch,
                      std::size_t batch_index) {
  std::cerr << "non-finite loss at epoch " << epoch << " batch " << batch_index
            << ": align=" << (losses.align ? std::to_string(*losses.align) : "-")
            << " proto=" << (losses.proto ? std::to_string(*losses.proto) : "-")
            << " ent=" << (losses.ent ? std::to_string(*losses.ent) : "-")
            << " total=" << losses.total << "\n";
  for (const auto& [name, tensor] : params.params) {
    double norm = 0.0;
    for (double v : tensor.values) norm += v * v;
    std::cerr << "  " << name << " l2=" << std::sqrt(norm) << "\n";
  }
}

}  // namespace

std::string to_string(AblationMode m) {
  switch (m) {
    case AblationMode::full: return "full";
    case AblationMode::ttc: return "ttc";
    case AblationMode::tlc: return "tlc";
    case AblationMode::tcc: return "tcc";
  }
  return "full";
}

AblationMode ablation_mode_from_string(const std::string& s) {
  if (s == "full") return AblationMode::full;
  if (s == "ttc") return AblationMode::ttc;
  if (s == "tlc") return AblationMode::tlc;
  if (s == "tcc") return AblationMode::tcc;
  throw ValidationError("unknown ablation mode '" + s + "'");
}

void TrainConfig::validate() const {
  if (t_warm < 0 || t_warm >= epochs_total) {
    throw ValidationError("need 0 <= T_warm < epochs_total, got T_warm=" +
                          std::to_string(t_warm) + ", epochs_total=" +
                          std::to_string(epochs_total));
  }
  if (batch_size < 2) {
    throw ValidationError("batch_size must be >= 2 (alignment degenerates at B=1)");
  }
  if (learning_rate < 0.0) throw ValidationError("learning_rate must be >= 0");
  if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0) {
    throw ValidationError("adam moment decays must lie in [0, 1)");
  }
  if (adam_epsilon <= 0.0) throw ValidationError("adam_epsilon must be > 0");
  loss.validate();
  dims.validate();
}

TrainConfig train_config_from_json(const nlohmann::json& doc) {
  TrainConfig cfg;
  static const std::vector<std::string> top_keys = {
      "T_warm",      "epochs_total", "batch_size",        "learning_rate",
      "adam_beta1",  "adam_beta2",   "adam_epsilon",      "seed",
      "ablation_mode", "loss",       "dims",              "normalize_backbone",
      "ent_ramp",    "centroid_renorm"};
  for (const auto& [key, _] : doc.items()) {
    if (std::find(top_keys.begin(), top_keys.end(), key) == top_keys.end()) {
      throw ValidationError("unknown config key '" + key + "'");
    }
  }
  try {
    cfg.t_warm = doc.value("T_warm", cfg.t_warm);
    cfg.epochs_total = doc.value("epochs_total", cfg.epochs_total);
    cfg.batch_size = doc.value("batch_size", cfg.batch_size);
    cfg.learning_rate = doc.value("learning_rate", cfg.learning_rate);
    cfg.adam_beta1 = doc.value("adam_beta1", cfg.adam_beta1);
    cfg.adam_beta2 = doc.value("adam_beta2", cfg.adam_beta2);
    cfg.adam_epsilon = doc.value("adam_epsilon", cfg.adam_epsilon);
    cfg.seed = doc.value("seed", cfg.seed);
    if (doc.contains("ablation_mode")) {
      cfg.ablation_mode = ablation_mode_from_string(doc.at("ablation_mode"));
    }
    if (doc.contains("loss")) {
      const auto& lj = doc.at("loss");
      for (const auto& [key, _] : lj.items()) {
        if (key != "tau_align" && key != "tau_proto" && key != "alpha" && key != "beta") {
          throw ValidationError("unknown loss config key '" + key + "'");
        }
      }
      cfg.loss.tau_align = lj.value("tau_align", cfg.loss.tau_align);
      cfg.loss.tau_proto = lj.value("tau_proto", cfg.loss.tau_proto);
      cfg.loss.alpha = lj.value("alpha", cfg.loss.alpha);
      cfg.loss.beta = lj.value("beta", cfg.loss.beta);
    }
    if (doc.contains("dims")) {
      const auto& dj = doc.at("dims");
      for (const auto& [key, _] : dj.items()) {
        if (key != "d_e" && key != "h1" && key != "h2" && key != "h_p" && key != "d" &&
            key != "proj_depth") {
          throw ValidationError("unknown dims config key '" + key + "'");
        }
      }
      cfg.dims.d_e = dj.value("d_e", cfg.dims.d_e);
      cfg.dims.h1 = dj.value("h1", cfg.dims.h1);
      cfg.dims.h2 = dj.value("h2", cfg.dims.h2);
      cfg.dims.h_p = dj.value("h_p", cfg.dims.h_p);
      cfg.dims.d = dj.value("d", cfg.dims.d);
      cfg.dims.proj_depth = dj.value("proj_depth", cfg.dims.proj_depth);
    }
    cfg.normalize_backbone = doc.value("normalize_backbone", cfg.normalize_backbone);
    cfg.ent_ramp = doc.value("ent_ramp", cfg.ent_ramp);
    cfg.centroid_renorm = doc.value("centroid_renorm", cfg.centroid_renorm);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config parse failure: " + std::string(e.what()));
  }
  cfg.validate();
  return cfg;
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  nlohmann::json doc;
  doc["T_warm"] = cfg.t_warm;
  doc["epochs_total"] = cfg.epochs_total;
  doc["batch_size"] = cfg.batch_size;
  doc["learning_rate"] = cfg.learning_rate;
  doc["adam_beta1"] = cfg.adam_beta1;
  doc["adam_beta2"] = cfg.adam_beta2;
  doc["adam_epsilon"] = cfg.adam_epsilon;
  doc["seed"] = cfg.seed;
  doc["ablation_mode"] = to_string(cfg.ablation_mode);
  doc["loss"] = {{"tau_align", cfg.loss.tau_align},
                 {"tau_proto", cfg.loss.tau_proto},
                 {"alpha", cfg.loss.alpha},
                 {"beta", cfg.loss.beta}};
  doc["dims"] = {{"d_e", cfg.dims.d_e}, {"h1", cfg.dims.h1},   {"h2", cfg.dims.h2},
                 {"h_p", cfg.dims.h_p}, {"d", cfg.dims.d},
                 {"proj_depth", cfg.dims.proj_depth}};
  doc["normalize_backbone"] = cfg.normalize_backbone;
  doc["ent_ramp"] = cfg.ent_ramp;
  doc["centroid_renorm"] = cfg.centroid_renorm;
  return doc;
}

void write_train_log(const std::filesystem::path& path, const TrainLog& log) {
  std::ostringstream out;
  for (const EpochRecord& rec : log.epochs) {
    nlohmann::json j;
    j["epoch"] = rec.epoch;
    j["stage"] = rec.stage == Stage::warmup ? "warmup" : "refine";
    j["l_align"] = rec.l_align ? nlohmann::json(*rec.l_align) : nlohmann::json(nullptr);
    j["l_proto"] = rec.l_proto ? nlohmann::json(*rec.l_proto) : nlohmann::json(nullptr);
    j["l_ent"] = rec.l_ent ? nlohmann::json(*rec.l_ent) : nlohmann::json(nullptr);
    j["l_total"] = rec.l_total;
    j["seconds"] = rec.seconds;
    out << j.dump() << "\n";
  }
  write_text_file(path, out.str());
}

TrainLog read_train_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open train log: " + path.string());
  TrainLog log;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    EpochRecord rec;
    rec.epoch = j.at("epoch").get<int>();
    rec.stage = j.at("stage").get<std::string>() == "warmup" ? Stage::warmup : Stage::refine;
    if (!j.at("l_align").is_null()) rec.l_align = j.at("l_align").get<double>();
    if (!j.at("l_proto").is_null()) rec.l_proto = j.at("l_proto").get<double>();
    if (!j.at("l_ent").is_null()) rec.l_ent = j.at("l_ent").get<double>();
    rec.l_total = j.at("l_total").get<double>();
    rec.seconds = j.at("seconds").get<double>();
    log.epochs.push_back(rec);
  }
  return log;
}

std::vector<std::string> trainable_names(const ModelParams& params, AblationMode mode,
                                         Stage stage) {
  std::vector<std::string> out;
  for (const auto& [name, _] : params.params) {
    const bool is_centroid = name == "centroids";
    const bool is_tab = name.rfind("num.", 0) == 0 || name.rfind("cat.", 0) == 0 ||
                        name.rfind("tab.", 0) == 0 || name.rfind("proj_tab.", 0) == 0;
    const bool is_txt = name.rfind("sem.", 0) == 0 || name.rfind("proj_txt.", 0) == 0;
    bool take = false;
    switch (mode) {
      case AblationMode::full:
      case AblationMode::tcc:
        take = is_centroid ? stage == Stage::refine : true;
        break;
      case AblationMode::ttc:
        take = is_tab || is_centroid;
        break;
      case AblationMode::tlc:
        take = is_txt || is_centroid;
        break;
    }
    if (take) out.push_back(name);
  }
  return out;
}

Var build_batch_loss(Tape& tape, const ParamVars& vars, const Schema& schema,
                     const EncodedDataset& dataset, const std::vector<std::size_t>& rows,
                     const Tensor* embedding_rows, const TrainConfig& config, Stage stage,
                     const Tensor* q_override, StepLosses* losses_out) {
  const AblationMode mode = config.ablation_mode;
  const int depth = config.dims.proj_depth;

  Var z_tab, z_txt;
  if (mode != AblationMode::tlc) {
    Batch batch = make_batch(dataset, rows);
    z_tab = project(tape, vars, Branch::tab,
                    encode_tabular(tape, vars, schema, dataset, batch), depth);
  }
  if (uses_text_branch(mode)) {
    if (embedding_rows == nullptr) {
      throw ValidationError("mode " + to_string(mode) + " requires embeddings");
    }
    Var emb = tape.constant(*embedding_rows);
    z_txt = project(tape, vars, Branch::txt, adapt_semantic(tape, vars, emb), depth);
  }

  StepLosses step;
  Var total;
  if (mode == AblationMode::full || mode == AblationMode::tcc) {
    Var align = alignment_loss(tape, z_tab, z_txt, config.loss.tau_align);
    step.align = tape.value(align).scalar_value();
    if (stage == Stage::warmup) {
      total = total_loss(tape, align, Var(), Var(), config.loss, Stage::warmup);
    } else {
      Var p = soft_assign(tape, z_tab, vars.get("centroids"), config.loss.tau_proto);
      step.q = q_override ? *q_override : sharpen_targets(tape.value(p));
      Var proto = proto_loss(tape, p, step.q);
      Var ent = entropy_reg(tape, p);
      step.proto = tape.value(proto).scalar_value();
      step.ent = tape.value(ent).scalar_value();
      total = total_loss(tape, align, proto, ent, config.loss, Stage::refine);
    }
  } else {
    // single-branch deep clustering: alpha*proto + beta*ent over the active branch
    Var z = mode == AblationMode::ttc ? z_tab : z_txt;
    Var p = soft_assign(tape, z, vars.get("centroids"), config.loss.tau_proto);
    step.q = q_override ? *q_override : sharpen_targets(tape.value(p));
    Var proto = proto_loss(tape, p, step.q);
    Var ent = entropy_reg(tape, p);
    step.proto = tape.value(proto).scalar_value();
    step.ent = tape.value(ent).scalar_value();
    total = tape.add(tape.scale(proto, config.loss.alpha),
                     tape.scale(ent, config.loss.beta));
  }
  step.total = tape.value(total).scalar_value();
  if (losses_out) *losses_out = std::move(step);
  return total;
}

TrainOutput train(const EncodedDataset& dataset, const Schema& schema,
                  const EmbeddingMatrix* embeddings, const TrainConfig& config_in) {
  TrainConfig config = config_in;
  config.validate();
  const AblationMode mode = config.ablation_mode;
  const std::size_t k = static_cast<std::size_t>(schema.k_star);

  if (dataset.n == 0) throw ValidationError("train: dataset is empty");
  if (dataset.n < k) {
    throw ValidationError("train: n=" + std::to_string(dataset.n) + " < k=" +
                          std::to_string(k));
  }
  if (uses_text_branch(mode)) {
    if (embeddings == nullptr) {
      throw ValidationError("mode " + to_string(mode) + " requires an embedding matrix");
    }
    embeddings->validate();
    if (embeddings->n() != dataset.n) {
      throw ValidationError("embedding matrix has " + std::to_string(embeddings->n()) +
                            " rows, dataset has " + std::to_string(dataset.n));
    }
    for (std::size_t i = 0; i < dataset.n; ++i) {
      if (embeddings->row_ids[i] != dataset.row_ids[i]) {
        throw ValidationError("embedding row_ids misaligned with dataset at position " +
                              std::to_string(i));
      }
    }
    config.dims.d_plm = embeddings->dim;
  }

  // The loaded matrix itself is constant; normalization works on a local copy.
  Tensor emb_values;
  if (uses_text_branch(mode)) {
    emb_values = embeddings->vectors;
    if (config.normalize_backbone) {
      for (std::size_t r = 0; r < emb_values.rows(); ++r) {
        const double norm = emb_values.row_norm(r);
        if (norm > 1e-12) {
          double* row = emb_values.row(r);
          for (std::size_t c = 0; c < emb_values.cols(); ++c) row[c] /= norm;
        }
      }
    }
  }

  ModelParams params = init_params(schema, config.dims, config.seed);
  AdamState adam;
  TrainLog log;

  const int t_warm = uses_warmup(mode) ? config.t_warm : 0;
  const std::size_t batch_size =
      std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), dataset.n);
  bool centroids_ready = false;

  for (int epoch = 0; epoch < config.epochs_total; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const Stage stage = epoch < t_warm ? Stage::warmup : Stage::refine;

    if (stage == Stage::refine && !centroids_ready) {
      const Tensor z = full_forward_latent(params, schema, dataset,
                                           uses_text_branch(mode) ? &emb_values : nullptr,
                                           mode);
      params.get("centroids") = init_centroids(z, k, config.seed);
      centroids_ready = true;
    }

    std::vector<std::size_t> order(dataset.n);
    for (std::size_t i = 0; i < dataset.n; ++i) order[i] = i;
    Rng shuffle_rng(mix_seed(config.seed, 0x65706f63 + static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    const std::vector<std::string> trainable = trainable_names(params, mode, stage);

    double sum_align = 0.0, sum_proto = 0.0, sum_ent = 0.0, sum_total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < dataset.n; start += batch_size) {
      const std::size_t end = std::min(dataset.n, start + batch_size);
      if (end - start < 2) break;  // alignment is degenerate on singleton batches
      std::vector<std::size_t> rows(order.begin() + static_cast<long>(start),
                                    order.begin() + static_cast<long>(end));

      Tensor emb_rows;
      if (uses_text_branch(mode)) {
        emb_rows = Tensor(rows.size(), emb_values.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) {
          const double* src = emb_values.row(rows[i]);
          double* dst = emb_rows.row(i);
          for (std::size_t c = 0; c < emb_values.cols(); ++c) dst[c] = src[c];
        }
      }

      Tape tape;
      ParamVars vars = register_params(tape, params, trainable);
      StepLosses step;
      Var total = build_batch_loss(tape, vars, schema, dataset, rows,
                                   uses_text_branch(mode) ? &emb_rows : nullptr, config,
                                   stage, nullptr, &step);
      if (!std::isfinite(step.total)) {
        dump_diagnostics(params, step, epoch, batches);
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
      }
      tape.backward(total);
      for (const std::string& name : trainable) {
        adam_update(params.get(name), tape.grad(vars.get(name)), adam.slots[name],
                    config);
      }
      if (centroids_ready && config.centroid_renorm &&
          std::find(trainable.begin(), trainable.end(), "centroids") != trainable.end()) {
        renormalize_centroids(params);
      }

      if (step.align) sum_align += *step.align;
      if (step.proto) sum_proto += *step.proto;
      if (step.ent) sum_ent += *step.ent;
      sum_total += step.total;
      ++batches;
    }
    if (batches == 0) {
      throw ValidationError("train: no batch of size >= 2 could be formed");
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.stage = stage;
    const double inv = 1.0 / static_cast<double>(batches);
    if (mode == AblationMode::full || mode == AblationMode::tcc) {
      rec.l_align = sum_align * inv;
    }
    if (stage == Stage::refine) {
      rec.l_proto = sum_proto * inv;
      rec.l_ent = sum_ent * inv;
    }
    rec.l_total = sum_total * inv;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                      .count();
    log.epochs.push_back(rec);
  }

  TrainOutput out{std::move(params), std::move(log), {}};
  if (mode == AblationMode::tlc) {
    const Tensor z = full_forward_latent(out.params, schema, dataset, &emb_values, mode);
    ClusterResult result;
    result.embeddings = z;
    result.soft = soft_assign_values(z, out.params.get("centroids"),
                                     config.loss.tau_proto);
    result.assignments = argmax_rows(result.soft);
    out.result = std::move(result);
  } else {
    out.result = predict(out.params, dataset, schema, config.loss.tau_proto);
  }
  return out;
}

ClusterResult predict(const ModelParams& params, const EncodedDataset& dataset,
                      const Schema& schema, double tau_proto) {
  Tape tape;
  ParamVars vars = register_params_const(tape, params);
  std::vector<std::size_t> rows(dataset.n);
  for (std::size_t i = 0; i < dataset.n; ++i) rows[i] = i;
  Batch batch = make_batch(dataset, rows);
  Var z = project(tape, vars, Branch::tab,
                  encode_tabular(tape, vars, schema, dataset, batch),
                  params.dims.proj_depth);
  ClusterResult result;
  result.embeddings = tape.value(z);
  result.soft = soft_assign_values(result.embeddings, params.get("centroids"), tau_proto);
  result.assignments = argmax_rows(result.soft);
  return result;
}

TrainOutput run_ablation(AblationMode mode, const EncodedDataset& dataset,
                         const Schema& schema, const EmbeddingMatrix* embeddings,
                         TrainConfig config) {
  config.ablation_mode = mode;
  return train(dataset, schema, embeddings, config);
}

Tensor baseline_design_matrix(const EncodedDataset& dataset) {
  std::size_t width = dataset.numeric_count();
  std::vector<std::size_t> cat_widths(dataset.categorical_count(), 0);
  for (std::size_t j = 0; j < dataset.categorical_count(); ++j) {
    int max_idx = 0;
    for (std::size_t i = 0; i < dataset.n; ++i) {
      max_idx = std::max(max_idx, dataset.cat_index(i, j));
    }
    cat_widths[j] = static_cast<std::size_t>(max_idx) + 1;
    width += cat_widths[j];
  }
  Tensor design(dataset.n, width);
  for (std::size_t i = 0; i < dataset.n; ++i) {
    std::size_t off = 0;
    for (std::size_t j = 0; j < dataset.numeric_count(); ++j) {
      design.at(i, off++) = dataset.numeric_values.at(i, j);
    }
    for (std::size_t j = 0; j < dataset.categorical_count(); ++j) {
      design.at(i, off + static_cast<std::size_t>(dataset.cat_index(i, j))) = 1.0;
      off += cat_widths[j];
    }
  }
  return design;
}

ClusterResult run_kmeans_baseline(const EncodedDataset& dataset, std::size_t k,
                                  std::uint64_t seed) {
  const std::size_t n = dataset.n;
  if (k == 0) throw ValidationError("run_kmeans_baseline: k must be >= 1");
  if (n < k) {
    throw ValidationError("run_kmeans_baseline: n=" + std::to_string(n) + " < k=" +
                          std::to_string(k));
  }
  const Tensor x = baseline_design_matrix(dataset);
  const std::size_t d = x.cols();

  auto sqdist = [&](std::size_t i, const Tensor& centers, std::size_t j) {
    const double* a = x.row(i);
    const double* b = centers.row(j);
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = a[c] - b[c];
      s += diff * diff;
    }
    return s;
  };

  Rng rng(mix_seed(seed, 0x6b6d6e73) /* "kmns" */);
  Tensor centers(k, d);
  std::vector<double> dist2(n, HUGE_VAL);
  {
    const std::size_t first = rng.next_index(n);
    for (std::size_t c = 0; c < d; ++c) centers.at(0, c) = x.at(first, c);
    for (std::size_t i = 0; i < n; ++i) dist2[i] = sqdist(i, centers, 0);
    for (std::size_t j = 1; j < k; ++j) {
      double total = 0.0;
      for (double v : dist2) total += v;
      std::size_t pick = n;
      if (total > 1e-12) {
        double target = rng.next_double() * total;
        for (std::size_t i = 0; i < n; ++i) {
          target -= dist2[i];
          if (target <= 0.0) {
            pick = i;
            break;
          }
        }
      }
      if (pick == n) pick = j % n;
      for (std::size_t c = 0; c < d; ++c) centers.at(j, c) = x.at(pick, c);
      for (std::size_t i = 0; i < n; ++i) {
        dist2[i] = std::min(dist2[i], sqdist(i, centers, j));
      }
    }
  }

  std::vector<int> assign(n, 0);
  for (int iter = 0; iter < 300; ++iter) {
    bool changed = false;
    std::vector<double> best_d(n, HUGE_VAL);
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = HUGE_VAL;
      for (std::size_t j = 0; j < k; ++j) {
        const double dd = sqdist(i, centers, j);
        if (dd < bd) {
          bd = dd;
          best = static_cast<int>(j);
        }
      }
      best_d[i] = bd;
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;

    Tensor sums(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = x.row(i);
      double* srow = sums.row(static_cast<std::size_t>(assign[i]));
      for (std::size_t c = 0; c < d; ++c) srow[c] += row[c];
      ++counts[static_cast<std::size_t>(assign[i])];
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] == 0) {
        std::size_t worst = 0;
        double wd = -HUGE_VAL;
        for (std::size_t i = 0; i < n; ++i) {
          if (best_d[i] > wd) {
            wd = best_d[i];
            worst = i;
          }
        }
        for (std::size_t c = 0; c < d; ++c) centers.at(j, c) = x.at(worst, c);
        best_d[worst] = -HUGE_VAL;
      } else {
        const double inv = 1.0 / static_cast<double>(counts[j]);
        for (std::size_t c = 0; c < d; ++c) centers.at(j, c) = sums.at(j, c) * inv;
      }
    }
  }

  ClusterResult result;
  result.assignments = assign;
  result.soft = Tensor(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    result.soft.at(i, static_cast<std::size_t>(assign[i])) = 1.0;
  }
  result.embeddings = x;
  return result;
}

}  // namespace tagcc
