#include "prefiner/refiner.hpp"

#include <cmath>

#include "prefiner/error.hpp"

namespace prefiner {

namespace {

void check_grid(const Tensor& grid, std::size_t c) {
  if (grid.rank() != 3 || grid.dim(2) != c || grid.size() == 0) {
    fail(ErrorCode::ShapeMismatch,
         "grid must be [N_f, T, " + std::to_string(c) + "], got " + shape_string(grid.shape()));
  }
}

// o -> W o for every token row.
Tensor apply_residual(const Tensor& w, const Tensor& grid) { return matmul(grid, transpose(w)); }

Tensor two_stage(const RefinerParams& p, const RefinerConfig& cfg, const Tensor& grid, const Tensor& np,
                 const Tensor& vp, RefineTrace* trace) {
  const bool swapped = cfg.variant == Variant::swap;
  const LangRows rows = cfg.variant == Variant::no_lang ? LangRows::none : cfg.lang_rows;
  Tensor out = grid;
  if (cfg.variant == Variant::joint) {
    if (trace) trace->stages += 'J';
    return joint_st_attention(p.spatial, grid, np, vp, rows, cfg.path);
  }
  if (cfg.variant != Variant::no_spatial) {
    if (trace) trace->stages += 'S';
    out = spatial_refine_step(p.spatial, out, swapped ? vp : np, rows, cfg.path);
  }
  if (cfg.variant != Variant::no_temporal) {
    if (trace) trace->stages += 'T';
    out = temporal_refine_step(p.temporal, out, swapped ? np : vp, rows, cfg.path);
  }
  return out;
}

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_spatial: return "no-spatial";
    case Variant::no_temporal: return "no-temporal";
    case Variant::no_lang: return "no-lang";
    case Variant::joint: return "joint";
    case Variant::swap: return "swap";
    case Variant::parallel_avg: return "parallel-avg";
    case Variant::parallel_sum: return "parallel-sum";
  }
  return "?";
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v{Variant::full,  Variant::no_spatial, Variant::no_temporal,  Variant::no_lang,
                                      Variant::joint, Variant::swap,       Variant::parallel_avg, Variant::parallel_sum};
  return v;
}

Variant parse_variant(std::string_view name) {
  for (Variant v : all_variants()) {
    if (to_string(v) == name) return v;
  }
  fail(ErrorCode::InvalidArgument, "unknown variant '" + std::string(name) + "'");
}

RefinerParams RefinerParams::init(std::size_t c, std::size_t heads, std::mt19937_64& rng) {
  RefinerParams p;
  const double attn_sd = 1.0 / std::sqrt(static_cast<double>(c));
  p.spatial = AttentionParams::random(c, heads, rng, attn_sd);
  p.temporal = AttentionParams::random(c, heads, rng, attn_sd);
  std::normal_distribution<double> noise(0.0, 0.01 / std::sqrt(static_cast<double>(c)));
  std::vector<double> w(c * c);
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < c; ++j) w[i * c + j] = (i == j ? 1.0 : 0.0) + noise(rng);
  }
  p.residual_w = Tensor::from({c, c}, std::move(w), true);
  return p;
}

std::vector<Tensor> RefinerParams::parameters() const {
  std::vector<Tensor> out = spatial.parameters();
  for (const auto& t : temporal.parameters()) out.push_back(t);
  out.push_back(residual_w);
  return out;
}

Tensor spatial_refine_step(const AttentionParams& attn, const Tensor& grid, const Tensor& np, LangRows rows,
                           GuidedPath path) {
  check_grid(grid, attn.dim());
  // [N_f, T, C] -> [T, N_f, C]: one sequence per frame.
  Tensor frames = transpose(grid, {1, 0, 2});
  return transpose(guided_attention(attn, frames, np, rows, path), {1, 0, 2});
}

Tensor temporal_refine_step(const AttentionParams& attn, const Tensor& grid, const Tensor& vp, LangRows rows,
                            GuidedPath path) {
  check_grid(grid, attn.dim());
  return guided_attention(attn, grid, vp, rows, path);
}

Tensor joint_st_attention(const AttentionParams& attn, const Tensor& grid, const Tensor& np, const Tensor& vp,
                          LangRows rows, GuidedPath path) {
  check_grid(grid, attn.dim());
  const std::size_t nf = grid.dim(0), t = grid.dim(1), c = grid.dim(2);
  Tensor lang = scale(add(np, vp), 0.5);
  Tensor flat = reshape(grid, {1, nf * t, c});
  return reshape(guided_attention(attn, flat, lang, rows, path), {nf, t, c});
}

PhraseVectors embed_chain(const SubPromptChain& chain, const EmbeddingProvider& provider) {
  PhraseVectors out;
  out.reserve(chain.size());
  for (const auto& sp : chain.prompts) out.emplace_back(provider.embed_tensor(sp.np_text), provider.embed_tensor(sp.vp_text));
  return out;
}

Tensor refine(const RefinerParams& params, const RefinerConfig& config, const Tensor& grid0,
              const PhraseVectors& phrases, RefineTrace* trace) {
  const std::size_t c = params.dim();
  check_grid(grid0, c);
  for (const auto& [np, vp] : phrases) {
    if (np.shape() != Shape{c} || vp.shape() != Shape{c}) {
      fail(ErrorCode::ShapeMismatch, "phrase vectors must have dimension " + std::to_string(c));
    }
  }
  std::size_t steps = phrases.size();
  if (config.max_steps) steps = std::min(steps, *config.max_steps);
  if (steps == 0) {
    if (!config.empty_chain_identity) fail(ErrorCode::EmptyChain, "refine needs at least one sub-prompt");
    return grid0;
  }

  if (config.variant == Variant::parallel_avg || config.variant == Variant::parallel_sum) {
    RefinerConfig branch_cfg = config;
    branch_cfg.variant = Variant::full;
    Tensor total;
    for (std::size_t p = 0; p < steps; ++p) {
      Tensor branch = add(apply_residual(params.residual_w, grid0),
                          two_stage(params, branch_cfg, grid0, phrases[p].first, phrases[p].second, trace));
      if (trace) trace->step_norms.push_back(frobenius_norm(branch));
      total = p == 0 ? branch : add(total, branch);
    }
    return config.variant == Variant::parallel_avg ? scale(total, 1.0 / static_cast<double>(steps)) : total;
  }

  Tensor o = grid0;
  for (std::size_t p = 0; p < steps; ++p) {
    Tensor refined = two_stage(params, config, o, phrases[p].first, phrases[p].second, trace);
    o = add(apply_residual(params.residual_w, o), refined);
    if (trace) trace->step_norms.push_back(frobenius_norm(o));
  }
  return o;
}

Tensor refine(const RefinerParams& params, const RefinerConfig& config, const Tensor& grid0,
              const SubPromptChain& chain, const EmbeddingProvider& provider, RefineTrace* trace) {
  if (provider.dim() != params.dim()) {
    fail(ErrorCode::DimMismatch, "embedding dimension " + std::to_string(provider.dim()) +
                                     " differs from refiner width " + std::to_string(params.dim()));
  }
  return refine(params, config, grid0, embed_chain(chain, provider), trace);
}

double frobenius_norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v * v;
  return std::sqrt(s);
}

}  // namespace prefiner
