#include "prefiner/attention.hpp"

#include <cmath>

#include "prefiner/error.hpp"

namespace prefiner {

namespace {

thread_local MacCount* g_macs = nullptr;
thread_local AttentionObserver* g_observer = nullptr;

}  // namespace

struct ObserverAccess {
  static void notify(AttentionObserver& o, const Tensor& w) {
    // Inner attention calls made by an observer are not reported back to it.
    AttentionObserver* saved = g_observer;
    g_observer = nullptr;
    o.fn_(w);
    g_observer = saved;
  }
};

namespace {

// Logit tensors above this many elements are computed in query chunks when
// nothing is being recorded, to bound memory for large joint sequences.
constexpr std::size_t kChunkElements = std::size_t{1} << 22;

Tensor random_matrix(std::size_t c, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> n(0.0, stddev);
  std::vector<double> v(c * c);
  for (auto& x : v) x = n(rng);
  return Tensor::from({c, c}, std::move(v), true);
}

Tensor as_batched(const Tensor& x) { return x.rank() == 2 ? reshape(x, {1, x.dim(0), x.dim(1)}) : x; }

// [B, n, C] -> [B, h, n, d]
Tensor split_heads(const Tensor& x, std::size_t h) {
  const std::size_t b = x.dim(0), n = x.dim(1), c = x.dim(2);
  return transpose(reshape(x, {b, n, h, c / h}), {0, 2, 1, 3});
}

// [B, h, n, d] -> [B, n, C]
Tensor merge_heads(const Tensor& x) {
  const std::size_t b = x.dim(0), h = x.dim(1), n = x.dim(2), d = x.dim(3);
  return reshape(transpose(x, {0, 2, 1, 3}), {b, n, h * d});
}

Tensor attend(const AttentionParams& p, const Tensor& q_src, const Tensor& kv_src, const Tensor* key_bias) {
  const std::size_t b = q_src.dim(0), nq = q_src.dim(1), nk = kv_src.dim(1), c = p.dim();
  const std::size_t h = p.heads, d = c / h;
  if (g_macs != nullptr) {
    g_macs->core += 2ULL * b * nq * nk * c;
    g_macs->projection += static_cast<std::uint64_t>(b) * (2 * nq + 2 * nk) * c * c;
  }
  const Tensor qn = p.layer_norm ? layer_norm_rows(q_src) : q_src;
  const Tensor kn = p.layer_norm ? (&q_src == &kv_src ? qn : layer_norm_rows(kv_src)) : kv_src;
  Tensor q = split_heads(scale(matmul(qn, p.w_q), 1.0 / std::sqrt(static_cast<double>(d))), h);
  Tensor k = split_heads(matmul(kn, p.w_k), h);
  Tensor v = split_heads(matmul(kn, p.w_v), h);
  Tensor logits = matmul(q, transpose(k));
  if (key_bias != nullptr) logits = add(logits, *key_bias);
  Tensor weights = rowsoftmax(logits);
  if (g_observer != nullptr) ObserverAccess::notify(*g_observer, weights);
  return matmul(merge_heads(matmul(weights, v)), p.w_o);
}

}  // namespace

AttentionParams AttentionParams::random(std::size_t c, std::size_t heads, std::mt19937_64& rng, double stddev) {
  AttentionParams p;
  p.w_q = random_matrix(c, rng, stddev);
  p.w_k = random_matrix(c, rng, stddev);
  p.w_v = random_matrix(c, rng, stddev);
  p.w_o = random_matrix(c, rng, stddev);
  p.heads = heads;
  p.validate();
  return p;
}

void AttentionParams::validate() const {
  if (!w_q.defined() || w_q.rank() != 2) fail(ErrorCode::ShapeMismatch, "attention: w_q must be C x C");
  const std::size_t c = w_q.dim(0);
  for (const Tensor* w : {&w_q, &w_k, &w_v, &w_o}) {
    if (!w->defined() || w->shape() != Shape{c, c}) {
      fail(ErrorCode::ShapeMismatch, "attention: projections must all be " + shape_string({c, c}));
    }
  }
  if (heads == 0 || c % heads != 0) {
    fail(ErrorCode::ShapeMismatch, "attention: " + std::to_string(heads) + " heads do not divide C=" + std::to_string(c));
  }
}

Tensor attention(const AttentionParams& p, const Tensor& queries, const Tensor& keys, const Tensor* key_bias) {
  p.validate();
  const std::size_t c = p.dim();
  auto check = [c](const Tensor& x, const char* what) {
    if ((x.rank() != 2 && x.rank() != 3) || x.dim(x.rank() - 1) != c || x.dim(x.rank() - 2) == 0) {
      fail(ErrorCode::ShapeMismatch,
           std::string("attention: ") + what + " must be [n, " + std::to_string(c) + "] or [B, n, " +
               std::to_string(c) + "], got " + shape_string(x.shape()));
    }
  };
  check(queries, "queries");
  check(keys, "keys");
  const bool unbatched = queries.rank() == 2;
  const bool self = &queries == &keys;
  const Tensor q = as_batched(queries);
  const Tensor k = self ? q : as_batched(keys);
  if (q.dim(0) != k.dim(0)) fail(ErrorCode::ShapeMismatch, "attention: query and key batch sizes differ");
  if (key_bias != nullptr && key_bias->shape() != Shape{k.dim(1)}) {
    fail(ErrorCode::ShapeMismatch, "attention: key bias must be " + shape_string({k.dim(1)}));
  }

  const std::size_t b = q.dim(0), nq = q.dim(1), nk = k.dim(1);
  const std::size_t per_query = b * p.heads * nk;
  Tensor out;
  if (Tape::active() != nullptr || per_query * nq <= kChunkElements) {
    out = self ? attend(p, q, q, key_bias) : attend(p, q, k, key_bias);
  } else {
    const std::size_t rows = std::max<std::size_t>(1, kChunkElements / per_query);
    std::vector<Tensor> parts;
    for (std::size_t lo = 0; lo < nq; lo += rows) {
      Tensor chunk = slice(q, 1, lo, std::min(nq, lo + rows));
      parts.push_back(attend(p, chunk, k, key_bias));
    }
    out = parts.size() == 1 ? parts.front() : concat(parts, 1);
  }
  return unbatched ? reshape(out, {nq, c}) : out;
}

Tensor scaled_dot_attention(const AttentionParams& p, const Tensor& seq) { return attention(p, seq, seq); }

Tensor guided_attention(const AttentionParams& p, const Tensor& visual, const Tensor& lang, LangRows rows,
                        GuidedPath path) {
  p.validate();
  const std::size_t c = p.dim();
  if (visual.rank() != 3 || visual.dim(2) != c) {
    fail(ErrorCode::ShapeMismatch, "guided attention: visual must be [B, n, " + std::to_string(c) + "], got " +
                                       shape_string(visual.shape()));
  }
  if (lang.shape() != Shape{c}) {
    fail(ErrorCode::ShapeMismatch, "guided attention: phrase vector must be " + shape_string({c}) + ", got " +
                                       shape_string(lang.shape()));
  }
  const std::size_t b = visual.dim(0), n = visual.dim(1);
  if (rows == LangRows::none) return attention(p, visual, visual);

  const Tensor lang_row = reshape(lang, {1, c});
  if (rows == LangRows::replicated && path == GuidedPath::literal) {
    // Rep(l): n copies per sequence, built as ones[n,1] x l[1,C].
    Tensor rep = matmul(Tensor::full({n, 1}, 1.0), lang_row);
    Tensor rep_b = add(Tensor::zeros({b, n, c}), rep);
    Tensor seq = concat({visual, rep_b}, 1);
    return slice(attention(p, seq, seq), 1, 0, n);
  }
  Tensor lang_b = add(Tensor::zeros({b, 1, c}), lang_row);
  Tensor keys = concat({visual, lang_b}, 1);
  if (rows == LangRows::single) return attention(p, visual, keys);
  std::vector<double> bias(n + 1, 0.0);
  bias[n] = std::log(static_cast<double>(n));
  Tensor bias_t = Tensor::from({n + 1}, std::move(bias));
  return attention(p, visual, keys, &bias_t);
}

Tensor layer_norm_rows(const Tensor& x, double eps) {
  const std::size_t c = x.dim(x.rank() - 1);
  // Row means broadcast back over the row via x * (1/C) ones[C, C].
  const Tensor avg = Tensor::full({c, c}, 1.0 / static_cast<double>(c));
  Tensor centered = sub(x, matmul(x, avg));
  Tensor var = matmul(square(centered), avg);
  return multiply(centered, pow(add_scalar(var, eps), -0.5));
}

MacCounterScope::MacCounterScope(MacCount& sink) : previous_(g_macs) { g_macs = &sink; }
MacCounterScope::~MacCounterScope() { g_macs = previous_; }

AttentionObserver::AttentionObserver(std::function<void(const Tensor&)> fn) : fn_(std::move(fn)), previous_(g_observer) {
  g_observer = this;
}
AttentionObserver::~AttentionObserver() { g_observer = previous_; }

}  // namespace prefiner
