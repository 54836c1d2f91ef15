#pragma once

// Task heads and their losses.
//
// VTG: clip vectors are the slot means of the refined grid, a candidate's
// vector is the mean of its clips, and its score is
// sigmoid(<candidate, sentence> / sqrt(C)), optionally passed through a
// learned scalar affine map first (VtgHead).
//
// RVOS: sentence token rows cross-attend to the flattened refined tokens, the
// attended rows are mean-pooled into one vector e, and the logit of pixel
// (t, y, x) is <e, mask_features[t, y, x, :]>.

#include <cstddef>
#include <vector>

#include "prefiner/attention.hpp"
#include "prefiner/metrics.hpp"
#include "prefiner/segment.hpp"
#include "prefiner/tensor.hpp"

namespace prefiner {

struct VtgLabelConfig {
  double tau_min = 0.3;
  double tau_max = 0.7;
};

struct RvosLossConfig {
  double lambda_f = 1.0;
  double lambda_v = 1.0;
};

/// [K] pre-sigmoid scores, one per candidate. Throws EmptyCandidates,
/// ShapeMismatch.
Tensor vtg_logits(const Tensor& grid, const Tensor& sentence, const std::vector<Segment>& candidates);
/// Scalar affine map a * logit + b on top of vtg_logits. The raw logits of
/// unit-norm embeddings span a few hundredths, far too little for the loss to
/// separate anything, and with no offset the only way to fit the mostly-zero
/// labels is to flip the sign of the grid.
struct VtgHead {
  Tensor scale;  // [1, 1]
  Tensor bias;   // [1]

  static VtgHead identity();
  /// a = spread / std(raw), b = log-odds(mean_label) - a * mean(raw): the
  /// calibrated logits have standard deviation `spread` and the average
  /// score starts at the label base rate.
  static VtgHead calibrated(const std::vector<double>& raw_logits, double mean_label, double spread);
  std::vector<Tensor> parameters() const { return {scale, bias}; }
  Tensor apply(const Tensor& logits) const;
};

/// sigmoid(vtg_logits(...)), through `head` when given.
Tensor vtg_scores(const Tensor& grid, const Tensor& sentence, const std::vector<Segment>& candidates,
                  const VtgHead* head = nullptr);

/// clamp((IoU - tau_min) / (tau_max - tau_min), 0, 1) per candidate.
/// Throws InvalidArgument unless 0 <= tau_min < tau_max <= 1.
std::vector<double> scaled_iou_labels(const std::vector<Segment>& candidates, const Segment& gt,
                                      const VtgLabelConfig& cfg = {});

/// Mean binary cross-entropy of scores [K] against soft labels, with the
/// scores clamped to [1e-12, 1 - 1e-12]. Throws LengthMismatch.
Tensor vtg_loss(const Tensor& scores, const std::vector<double>& labels);

struct RvosHeadConfig {
  std::size_t decoder_layers = 1;
  /// Let the grid tokens cross-attend to the sentence tokens (residually)
  /// before decoding.
  bool use_qbar = false;
};

struct RvosHeadParams {
  std::vector<AttentionParams> decoder;  // one per layer
  AttentionParams qbar;                  // used only with use_qbar

  static RvosHeadParams init(std::size_t c, std::size_t heads, const RvosHeadConfig& cfg, std::mt19937_64& rng);
  std::vector<Tensor> parameters(const RvosHeadConfig& cfg) const;
};

/// grid tokens attend to the sentence token rows [L, C]; returns grid + attended.
Tensor qbar_stage(const AttentionParams& attn, const Tensor& grid, const Tensor& sentence_tokens);

/// grid [N_f, T, C], sentence_tokens [L, C], mask_features [T, H, W, C];
/// returns logits [T, H, W].
Tensor rvos_mask_logits(const Tensor& grid, const Tensor& sentence_tokens, const std::vector<AttentionParams>& decoder,
                        const Tensor& mask_features);

/// lambda_f * mean_t(BCE_t + Dice_t) + lambda_v * Dice(volume), Dice with
/// smoothing 1. gt_masks holds 0/1 values. Throws ShapeMismatch,
/// NonBinaryGroundTruth.
Tensor rvos_loss(const Tensor& pred_logits, const Tensor& gt_masks, const RvosLossConfig& cfg = {});

/// Threshold sigmoid(logits) at 0.5 (i.e. logits > 0), one mask per frame.
std::vector<Mask> binarize_logits(const Tensor& logits);

}  // namespace prefiner
