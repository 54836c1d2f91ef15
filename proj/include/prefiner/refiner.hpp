#pragma once

// Language-guided visual token refiner. A grid O has shape [N_f, T, C]: N_f
// object slots, T frames or clips, C channels. One step p does
//   spatial:   per frame, attend over the N_f slots joined with the NP vector
//   temporal:  per slot, attend over the T frames joined with the VP vector
//   residual:  O_p = W O_{p-1} + (refined tokens), W applied to every token
// and the same parameters serve every step.

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "prefiner/attention.hpp"
#include "prefiner/embed.hpp"
#include "prefiner/planner.hpp"
#include "prefiner/tensor.hpp"

namespace prefiner {

enum class Variant { full, no_spatial, no_temporal, no_lang, joint, swap, parallel_avg, parallel_sum };

std::string_view to_string(Variant v);
/// Accepts "full", "no-spatial", "no-temporal", "no-lang", "joint", "swap",
/// "parallel-avg", "parallel-sum". Throws InvalidArgument.
Variant parse_variant(std::string_view name);
const std::vector<Variant>& all_variants();

struct RefinerParams {
  AttentionParams spatial;
  AttentionParams temporal;  // unused by the joint variant, which runs on `spatial`
  Tensor residual_w;         // C x C

  /// W = I + N(0, (0.01/sqrt C)^2); attention projections N(0, 1/C).
  static RefinerParams init(std::size_t c, std::size_t heads, std::mt19937_64& rng);

  std::size_t dim() const { return residual_w.dim(0); }
  std::vector<Tensor> parameters() const;
};

struct RefinerConfig {
  Variant variant = Variant::full;
  std::optional<std::size_t> max_steps;
  LangRows lang_rows = LangRows::replicated;
  GuidedPath path = GuidedPath::fast;
  /// An empty chain returns the input unchanged; when false it is an error.
  bool empty_chain_identity = true;
};

/// Stage log of one refine() call: 'S' spatial, 'T' temporal, 'J' joint, and
/// the Frobenius norm of the grid after each step (after each branch for the
/// parallel variants).
struct RefineTrace {
  std::string stages;
  std::vector<double> step_norms;
};

Tensor spatial_refine_step(const AttentionParams& attn, const Tensor& grid, const Tensor& np,
                           LangRows rows = LangRows::replicated, GuidedPath path = GuidedPath::fast);
Tensor temporal_refine_step(const AttentionParams& attn, const Tensor& grid, const Tensor& vp,
                            LangRows rows = LangRows::replicated, GuidedPath path = GuidedPath::fast);
/// One attention over all N_f * T tokens, guided by the mean of np and vp.
Tensor joint_st_attention(const AttentionParams& attn, const Tensor& grid, const Tensor& np, const Tensor& vp,
                          LangRows rows = LangRows::replicated, GuidedPath path = GuidedPath::fast);

/// (np, vp) vectors per step, each of shape [C].
using PhraseVectors = std::vector<std::pair<Tensor, Tensor>>;

PhraseVectors embed_chain(const SubPromptChain& chain, const EmbeddingProvider& provider);

Tensor refine(const RefinerParams& params, const RefinerConfig& config, const Tensor& grid0,
              const PhraseVectors& phrases, RefineTrace* trace = nullptr);
Tensor refine(const RefinerParams& params, const RefinerConfig& config, const Tensor& grid0,
              const SubPromptChain& chain, const EmbeddingProvider& provider, RefineTrace* trace = nullptr);

double frobenius_norm(const Tensor& t);

}  // namespace prefiner
