#pragma once

// VTG training: decompose the query, refine the grid, score the candidates,
// regress the scores onto scaled-IoU labels, step AdamW.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "prefiner/embed.hpp"
#include "prefiner/heads.hpp"
#include "prefiner/metrics.hpp"
#include "prefiner/optim.hpp"
#include "prefiner/refiner.hpp"
#include "prefiner/synth.hpp"

namespace prefiner {

/// Everything train-vtg learns.
struct VtgModel {
  RefinerParams refiner;
  VtgHead head;
  /// Refiner parameters first, then head scale and bias.
  std::vector<Tensor> parameters() const;
};

struct TrainConfig {
  std::uint64_t seed = 42;
  RefinerConfig refiner;
  std::size_t heads = 4;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  AdamWConfig adamw;
  VtgLabelConfig labels;
  RankConfig rank;
  /// Initial logit spread of the calibrated head. 0 keeps the bare head
  /// (a = 1, b = 0) and does not train it.
  double logit_spread = 3.0;
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 0 = before training
  double train_loss = 0.0;
  RankTable test;
};

struct TrainResult {
  VtgModel model;
  std::vector<EpochMetrics> history;
};

/// Everything the model needs from one sample, computed once.
struct PreparedSample {
  Tensor grid;
  Tensor sentence;
  PhraseVectors phrases;
  Segment gt;
  std::vector<Segment> candidates;
  std::vector<double> labels;
};

PreparedSample prepare_sample(const GroundingSample& s, const EmbeddingProvider& provider, const VtgLabelConfig& labels);

/// Candidates sorted by descending score (ties keep candidate order).
std::vector<Segment> rank_candidates(const VtgModel& model, const RefinerConfig& cfg, const PreparedSample& s);

RankTable evaluate_vtg(const VtgModel& model, const RefinerConfig& cfg, const std::vector<PreparedSample>& samples,
                       const RankConfig& rank = {});

/// Trains on `train`, reporting Rank n@m on `test` before training and after
/// every epoch. Throws Divergence on a non-finite loss.
TrainResult train_vtg(const std::vector<GroundingSample>& train, const std::vector<GroundingSample>& test,
                      const EmbeddingProvider& provider, const TrainConfig& cfg,
                      const std::function<void(const EpochMetrics&)>& on_epoch = {});

/// Header "epoch\ttrain_loss\tR1@0.1..." and one row per epoch.
std::string metrics_tsv(const std::vector<EpochMetrics>& history);

/// <path> holds the concatenated PRTK records, <path>.json their index.
void save_checkpoint(const std::filesystem::path& path, const VtgModel& model);
VtgModel load_checkpoint(const std::filesystem::path& path);

}  // namespace prefiner
