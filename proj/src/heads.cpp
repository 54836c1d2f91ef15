#include "prefiner/heads.hpp"

#include <cmath>

#include "prefiner/error.hpp"

namespace prefiner {

namespace {

constexpr double kProbEps = 1e-12;

Tensor one_minus(const Tensor& x) { return add_scalar(scale(x, -1.0), 1.0); }

// -(y log p + (1 - y) log(1 - p)), elementwise, p clamped away from 0 and 1.
Tensor bce(const Tensor& probs, const Tensor& targets) {
  Tensor p = clamp(probs, kProbEps, 1.0 - kProbEps);
  Tensor pos = multiply(targets, log(p));
  Tensor neg = multiply(one_minus(targets), log(one_minus(p)));
  return scale(add(pos, neg), -1.0);
}

// 1 - (2 sum(p g) + 1) / (sum p + sum g + 1) along the last axis.
Tensor dice(const Tensor& p, const Tensor& g) {
  const std::size_t axis = p.rank() - 1;
  const double n = static_cast<double>(p.dim(axis));
  Tensor inter = scale(mean(multiply(p, g), axis), 2.0 * n);
  Tensor denom = add(scale(mean(p, axis), n), scale(mean(g, axis), n));
  return one_minus(multiply(add_scalar(inter, 1.0), pow(add_scalar(denom, 1.0), -1.0)));
}

}  // namespace

Tensor vtg_logits(const Tensor& grid, const Tensor& sentence, const std::vector<Segment>& candidates) {
  if (candidates.empty()) fail(ErrorCode::EmptyCandidates, "VTG head needs at least one candidate");
  if (grid.rank() != 3) fail(ErrorCode::ShapeMismatch, "VTG head: grid must be [N_f, T, C]");
  const std::size_t t = grid.dim(1), c = grid.dim(2);
  if (sentence.shape() != Shape{c}) {
    fail(ErrorCode::ShapeMismatch, "VTG head: sentence vector must be " + shape_string({c}));
  }
  std::vector<double> pool(candidates.size() * t, 0.0);
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const Segment& s = candidates[k];
    if (!s.valid_for(t)) {
      fail(ErrorCode::ShapeMismatch, "candidate [" + std::to_string(s.start) + "," + std::to_string(s.end) +
                                         ") outside [0," + std::to_string(t) + ")");
    }
    for (std::size_t j = s.start; j < s.end; ++j) pool[k * t + j] = 1.0 / static_cast<double>(s.width());
  }
  Tensor clips = mean(grid, 0);  // [T, C]
  Tensor segs = matmul(Tensor::from({candidates.size(), t}, std::move(pool)), clips);
  Tensor dots = matmul(segs, reshape(sentence, {c, 1}));
  return scale(reshape(dots, {candidates.size()}), 1.0 / std::sqrt(static_cast<double>(c)));
}

VtgHead VtgHead::identity() { return {Tensor::full({1, 1}, 1.0), Tensor::zeros({1})}; }

VtgHead VtgHead::calibrated(const std::vector<double>& raw_logits, double mean_label, double spread) {
  if (raw_logits.empty()) fail(ErrorCode::EmptyCandidates, "cannot calibrate on zero logits");
  if (!(mean_label > 0.0 && mean_label < 1.0)) fail(ErrorCode::InvalidArgument, "mean label must lie in (0, 1)");
  if (!(spread > 0.0)) fail(ErrorCode::InvalidArgument, "spread must be positive");
  double m1 = 0.0, m2 = 0.0;
  for (double v : raw_logits) m1 += v;
  m1 /= static_cast<double>(raw_logits.size());
  for (double v : raw_logits) m2 += (v - m1) * (v - m1);
  const double sd = std::sqrt(m2 / static_cast<double>(raw_logits.size()));
  const double a = sd > 0.0 ? spread / sd : 1.0;
  const double b = std::log(mean_label / (1.0 - mean_label)) - a * m1;
  return {Tensor::full({1, 1}, a), Tensor::full({1}, b)};
}

Tensor VtgHead::apply(const Tensor& logits) const {
  if (logits.rank() != 1) fail(ErrorCode::ShapeMismatch, "VTG head expects [K] logits");
  if (scale.shape() != Shape{1, 1} || bias.shape() != Shape{1}) fail(ErrorCode::ShapeMismatch, "VTG head: bad parameter shapes");
  const std::size_t k = logits.dim(0);
  return reshape(add(matmul(reshape(logits, {k, 1}), scale), bias), {k});
}

Tensor vtg_scores(const Tensor& grid, const Tensor& sentence, const std::vector<Segment>& candidates,
                  const VtgHead* head) {
  Tensor logits = vtg_logits(grid, sentence, candidates);
  return sigmoid(head != nullptr ? head->apply(logits) : logits);
}

std::vector<double> scaled_iou_labels(const std::vector<Segment>& candidates, const Segment& gt,
                                      const VtgLabelConfig& cfg) {
  if (!(cfg.tau_min >= 0.0 && cfg.tau_min < cfg.tau_max && cfg.tau_max <= 1.0)) {
    fail(ErrorCode::InvalidArgument, "need 0 <= tau_min < tau_max <= 1");
  }
  std::vector<double> out;
  out.reserve(candidates.size());
  for (const auto& s : candidates) {
    const double o = temporal_iou(s, gt);
    out.push_back(std::clamp((o - cfg.tau_min) / (cfg.tau_max - cfg.tau_min), 0.0, 1.0));
  }
  return out;
}

Tensor vtg_loss(const Tensor& scores, const std::vector<double>& labels) {
  if (scores.rank() != 1 || scores.size() != labels.size() || labels.empty()) {
    fail(ErrorCode::LengthMismatch, "VTG loss: " + std::to_string(scores.size()) + " scores vs " +
                                        std::to_string(labels.size()) + " labels");
  }
  return mean_all(bce(scores, Tensor::from({labels.size()}, labels)));
}

RvosHeadParams RvosHeadParams::init(std::size_t c, std::size_t heads, const RvosHeadConfig& cfg, std::mt19937_64& rng) {
  const double sd = 1.0 / std::sqrt(static_cast<double>(c));
  RvosHeadParams p;
  for (std::size_t i = 0; i < cfg.decoder_layers; ++i) p.decoder.push_back(AttentionParams::random(c, heads, rng, sd));
  if (cfg.use_qbar) p.qbar = AttentionParams::random(c, heads, rng, sd);
  return p;
}

std::vector<Tensor> RvosHeadParams::parameters(const RvosHeadConfig& cfg) const {
  std::vector<Tensor> out;
  for (const auto& layer : decoder) {
    for (const auto& t : layer.parameters()) out.push_back(t);
  }
  if (cfg.use_qbar) {
    for (const auto& t : qbar.parameters()) out.push_back(t);
  }
  return out;
}

Tensor qbar_stage(const AttentionParams& attn, const Tensor& grid, const Tensor& sentence_tokens) {
  if (grid.rank() != 3) fail(ErrorCode::ShapeMismatch, "grid must be [N_f, T, C]");
  const std::size_t nf = grid.dim(0), t = grid.dim(1), c = grid.dim(2);
  Tensor flat = reshape(grid, {nf * t, c});
  return add(grid, reshape(attention(attn, flat, sentence_tokens), {nf, t, c}));
}

Tensor rvos_mask_logits(const Tensor& grid, const Tensor& sentence_tokens, const std::vector<AttentionParams>& decoder,
                        const Tensor& mask_features) {
  if (grid.rank() != 3 || mask_features.rank() != 4 || sentence_tokens.rank() != 2) {
    fail(ErrorCode::ShapeMismatch, "RVOS head: expected grid [N_f,T,C], tokens [L,C], mask features [T,H,W,C]");
  }
  const std::size_t nf = grid.dim(0), t = grid.dim(1), c = grid.dim(2);
  if (sentence_tokens.dim(1) != c || mask_features.dim(3) != c) {
    fail(ErrorCode::ShapeMismatch, "RVOS head: channel widths differ");
  }
  if (decoder.empty()) fail(ErrorCode::InvalidArgument, "RVOS head needs at least one decoder layer");
  Tensor memory = reshape(grid, {nf * t, c});
  Tensor q = sentence_tokens;
  for (const auto& layer : decoder) q = attention(layer, q, memory);
  Tensor e = reshape(mean(q, 0), {c, 1});
  const std::size_t ft = mask_features.dim(0), h = mask_features.dim(1), w = mask_features.dim(2);
  Tensor logits = matmul(reshape(mask_features, {ft * h * w, c}), e);
  return reshape(logits, {ft, h, w});
}

Tensor rvos_loss(const Tensor& pred_logits, const Tensor& gt_masks, const RvosLossConfig& cfg) {
  if (pred_logits.shape() != gt_masks.shape() || pred_logits.rank() != 3) {
    fail(ErrorCode::ShapeMismatch, "RVOS loss: logits " + shape_string(pred_logits.shape()) + " vs masks " +
                                       shape_string(gt_masks.shape()));
  }
  for (double g : gt_masks.values()) {
    if (g != 0.0 && g != 1.0) fail(ErrorCode::NonBinaryGroundTruth, "RVOS loss: ground truth must be 0 or 1");
  }
  if (cfg.lambda_f < 0.0 || cfg.lambda_v < 0.0 || (cfg.lambda_f == 0.0 && cfg.lambda_v == 0.0)) {
    fail(ErrorCode::InvalidArgument, "RVOS loss: weights must be nonnegative and not both zero");
  }
  const std::size_t t = pred_logits.dim(0), hw = pred_logits.dim(1) * pred_logits.dim(2);
  Tensor p = reshape(sigmoid(pred_logits), {t, hw});
  Tensor g = reshape(gt_masks, {t, hw});
  Tensor frame_bce = mean(bce(p, g), 1);  // [T]
  Tensor frame_dice = dice(p, g);         // [T]
  Tensor l_f = mean_all(add(frame_bce, frame_dice));
  Tensor l_v = dice(reshape(p, {t * hw}), reshape(g, {t * hw}));
  return add(scale(l_f, cfg.lambda_f), scale(l_v, cfg.lambda_v));
}

std::vector<Mask> binarize_logits(const Tensor& logits) {
  if (logits.rank() != 3) fail(ErrorCode::ShapeMismatch, "mask logits must be [T, H, W]");
  const std::size_t t = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
  std::vector<Mask> out;
  for (std::size_t f = 0; f < t; ++f) {
    Mask m(h, w);
    for (std::size_t i = 0; i < h * w; ++i) m.pixels[i] = logits.values()[f * h * w + i] > 0.0 ? 1 : 0;
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace prefiner
