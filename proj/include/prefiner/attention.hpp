#pragma once

// Multi-head scaled dot-product attention built from tensor primitives.
//
// Rows are token vectors, so a projection is x * W for a C x C matrix W. With
// h heads of width d = C / h, each head computes
//   A = rowsoftmax(Q K^T / sqrt(d)),  out = A V
// and the heads are concatenated and multiplied by w_o.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "prefiner/tensor.hpp"

namespace prefiner {

struct AttentionParams {
  Tensor w_q, w_k, w_v, w_o;
  std::size_t heads = 4;
  /// Normalize every input row (zero mean, unit variance, no affine) before
  /// the projections.
  bool layer_norm = false;

  /// Projections drawn from N(0, stddev^2), marked trainable.
  static AttentionParams random(std::size_t c, std::size_t heads, std::mt19937_64& rng, double stddev);

  std::size_t dim() const { return w_q.dim(0); }
  std::vector<Tensor> parameters() const { return {w_q, w_k, w_v, w_o}; }
  /// Throws ShapeMismatch unless all four projections are C x C and heads divides C.
  void validate() const;
};

/// How a phrase vector joins a visual sequence of length n.
enum class LangRows {
  replicated,  // n copies of the phrase row (sequence length 2n)
  single,      // one phrase row (sequence length n + 1)
  none,        // no language rows
};

/// Which computation realizes LangRows::replicated.
enum class GuidedPath {
  /// Only the visual rows are queried; the n identical phrase keys are folded
  /// into one key with a log(n) logit bias. Same result, O(n) fewer rows.
  fast,
  /// Builds the full 2n-row sequence, attends over all of it, keeps the first n.
  literal,
};

/// queries: [B, nq, C] (or [nq, C]); keys: [B, nk, C] (or [nk, C]).
/// key_bias, if given, is a constant [nk] tensor added to every logit row.
Tensor attention(const AttentionParams& p, const Tensor& queries, const Tensor& keys, const Tensor* key_bias = nullptr);

/// Self-attention over seq: [n, C] or [B, n, C].
Tensor scaled_dot_attention(const AttentionParams& p, const Tensor& seq);

/// Self-attention over each of the B visual sequences [B, n, C] joined with
/// the phrase vector lang [C]; returns the refined visual rows [B, n, C].
Tensor guided_attention(const AttentionParams& p, const Tensor& visual, const Tensor& lang, LangRows rows,
                        GuidedPath path = GuidedPath::fast);

/// (x - mean) / sqrt(var + eps) along the last axis.
Tensor layer_norm_rows(const Tensor& x, double eps = 1e-5);

// ---- instrumentation ---------------------------------------------------------

struct ObserverAccess;

struct MacCount {
  std::uint64_t core = 0;        // QK^T and A V products
  std::uint64_t projection = 0;  // Q, K, V, O projections
};

/// Accumulates the MACs of every attention call on this thread into `sink`
/// while alive.
class MacCounterScope {
 public:
  explicit MacCounterScope(MacCount& sink);
  ~MacCounterScope();
  MacCounterScope(const MacCounterScope&) = delete;
  MacCounterScope& operator=(const MacCounterScope&) = delete;

 private:
  MacCount* previous_;
};

/// Calls `fn` with the attention weights [B, h, nq, nk] of every attention
/// call on this thread while alive.
class AttentionObserver {
 public:
  explicit AttentionObserver(std::function<void(const Tensor&)> fn);
  ~AttentionObserver();
  AttentionObserver(const AttentionObserver&) = delete;
  AttentionObserver& operator=(const AttentionObserver&) = delete;

 private:
  std::function<void(const Tensor&)> fn_;
  AttentionObserver* previous_;
  friend struct ObserverAccess;
};

}  // namespace prefiner
