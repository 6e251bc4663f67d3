#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tagcc/dataset.hpp"
#include "tagcc/embed.hpp"
#include "tagcc/losses.hpp"
#include "tagcc/model.hpp"

namespace tagcc {

enum class AblationMode { full, ttc, tlc, tcc };
std::string to_string(AblationMode m);
AblationMode ablation_mode_from_string(const std::string& s);

struct TrainConfig {
  int t_warm = 50;
  int epochs_total = 200;
  int batch_size = 256;  // clamped to n at run time
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  LossConfig loss;
  std::uint64_t seed = 0;
  AblationMode ablation_mode = AblationMode::full;
  ModelDims dims;
  bool normalize_backbone = false;
  bool ent_ramp = false;  // reserved, no effect yet
  bool centroid_renorm = true;

  void validate() const;
};

// Strict parser; unknown keys are rejected. Field names follow the config-file
// contract (T_warm, epochs_total, batch_size, learning_rate, seed,
// ablation_mode, loss.{tau_align,tau_proto,alpha,beta}, dims.{...}).
TrainConfig train_config_from_json(const nlohmann::json& doc);
nlohmann::json train_config_to_json(const TrainConfig& config);

struct EpochRecord {
  int epoch = 0;
  Stage stage = Stage::warmup;
  std::optional<double> l_align;
  std::optional<double> l_proto;
  std::optional<double> l_ent;
  double l_total = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
};

void write_train_log(const std::filesystem::path& path, const TrainLog& log);
TrainLog read_train_log(const std::filesystem::path& path);

struct ClusterResult {
  std::vector<int> assignments;  // argmax of soft, ties toward the lowest index
  Tensor soft;                   // n x k
  Tensor embeddings;             // n x d latent snapshot driving the assignment
};

struct TrainOutput {
  ModelParams params;
  TrainLog log;
  ClusterResult result;
};

// Loss values of one step/batch; `q` is the detached sharpened target used.
struct StepLosses {
  std::optional<double> align;
  std::optional<double> proto;
  std::optional<double> ent;
  double total = 0.0;
  Tensor q;
};

// Builds the forward graph and the stage loss for one batch. `q_override`
// replaces the sharpened target (gradient checks hold Q fixed).
Var build_batch_loss(Tape& tape, const ParamVars& vars, const Schema& schema,
                     const EncodedDataset& dataset, const std::vector<std::size_t>& rows,
                     const Tensor* embedding_rows, const TrainConfig& config, Stage stage,
                     const Tensor* q_override, StepLosses* losses_out);

// Parameter names receiving gradients for a given mode and stage.
std::vector<std::string> trainable_names(const ModelParams& params, AblationMode mode,
                                         Stage stage);

// Two-stage curriculum: epochs [0, T_warm) optimize alignment only; at T_warm
// the centroids are initialized by spherical k-means over the full dataset and
// the full objective activates. Single-branch modes skip the warm-up.
// `embeddings` may be null only in ttc mode.
TrainOutput train(const EncodedDataset& dataset, const Schema& schema,
                  const EmbeddingMatrix* embeddings, const TrainConfig& config);

// Full forward pass; soft assignments under tau_proto, argmax labels.
ClusterResult predict(const ModelParams& params, const EncodedDataset& dataset,
                      const Schema& schema, double tau_proto);

// Convenience wrapper selecting an ablation mode.
TrainOutput run_ablation(AblationMode mode, const EncodedDataset& dataset,
                         const Schema& schema, const EmbeddingMatrix* embeddings,
                         TrainConfig config);

// Euclidean k-means (k-means++ seeding) on one-hot + standardized features.
ClusterResult run_kmeans_baseline(const EncodedDataset& dataset, std::size_t k,
                                  std::uint64_t seed);

// One-hot categorical columns + standardized numeric columns.
Tensor baseline_design_matrix(const EncodedDataset& dataset);

}  // namespace tagcc
