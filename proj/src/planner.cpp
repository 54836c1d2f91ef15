#include "prefiner/planner.hpp"

#include <algorithm>

#include "prefiner/error.hpp"

namespace prefiner {

namespace {

bool has_vp_below(const ParseTree& node) {
  for (const auto& child : node.children) {
    if (label_is(child, "VP") || has_vp_below(child)) return true;
  }
  return false;
}

const ParseTree* find_np(const ParseTree& node) {
  if (label_is(node, "NP") && !has_vp_below(node)) return &node;
  for (const auto& child : node.children) {
    if (const ParseTree* hit = find_np(child)) return hit;
  }
  return nullptr;
}

bool has_any_vp(const ParseTree& node) { return label_is(node, "VP") || has_vp_below(node); }

void collect_vps(const ParseTree& node, std::vector<const ParseTree*>& out) {
  if (!label_is(node, "VP")) {
    for (const auto& child : node.children) collect_vps(child, out);
    return;
  }
  std::size_t vp_children = 0;
  for (const auto& child : node.children) vp_children += label_is(child, "VP") ? 1 : 0;
  if (vp_children == 0) {
    out.push_back(&node);
    return;
  }
  // Split (two or more) or unwrap (exactly one). Coordinators and punctuation
  // between the VP children are dropped.
  for (const auto& child : node.children) {
    if (label_is(child, "VP")) collect_vps(child, out);
  }
}

std::string join_range(const std::vector<std::string>& words, Span span) {
  std::string out;
  for (std::size_t i = span.lo; i < span.hi; ++i) {
    if (!out.empty()) out += ' ';
    out += words[i];
  }
  return out;
}

SubPromptChain pair_up(const ParseTree& tree, Span np_span, const std::vector<Span>& vp_spans) {
  SubPromptChain chain;
  chain.source_sentence = tree.leaves();
  const std::string np_text = join_range(chain.source_sentence, np_span);
  for (std::size_t i = 0; i < vp_spans.size(); ++i) {
    SubPrompt prompt;
    prompt.np_text = np_text;
    prompt.np_span = np_span;
    prompt.vp_span = vp_spans[i];
    prompt.vp_text = join_range(chain.source_sentence, vp_spans[i]);
    prompt.step_index = i + 1;
    chain.prompts.push_back(std::move(prompt));
  }
  return chain;
}

}  // namespace

const ParseTree& find_main_np(const ParseTree& tree) {
  const ParseTree* np = find_np(tree);
  if (np == nullptr) fail(ErrorCode::NoNounPhrase, "no NP without a VP descendant in '" + tree.surface() + "'");
  return *np;
}

std::vector<const ParseTree*> extract_atomic_vps(const ParseTree& tree) {
  std::vector<const ParseTree*> vps;
  collect_vps(tree, vps);
  if (vps.empty()) fail(ErrorCode::NoVerbPhrase, "no VP in '" + tree.surface() + "'");
  return vps;
}

SubPromptChain decompose(const ParseTree& tree) {
  const ParseTree& np = find_main_np(tree);
  std::vector<Span> vp_spans;
  for (const ParseTree* vp : extract_atomic_vps(tree)) vp_spans.push_back(vp->span);
  return pair_up(tree, np.span, vp_spans);
}

SubPromptChain decompose_with_fallback(const ParseTree& tree) {
  const ParseTree* np = find_np(tree);
  const Span whole{tree.span.lo, tree.span.hi};
  const Span np_span = np != nullptr ? np->span : whole;

  if (has_any_vp(tree)) {
    std::vector<Span> vp_spans;
    for (const ParseTree* vp : extract_atomic_vps(tree)) vp_spans.push_back(vp->span);
    return pair_up(tree, np_span, vp_spans);
  }

  // No VP: the remainder of the sentence after removing the NP tokens. When
  // the NP is the whole sentence the remainder is empty and the sentence is
  // reused. The span then covers the non-NP range, or the whole sentence.
  SubPromptChain chain;
  chain.source_sentence = tree.leaves();
  std::string rest;
  Span rest_span{whole.hi, whole.lo};
  for (std::size_t i = 0; i < chain.source_sentence.size(); ++i) {
    if (np != nullptr && i >= np_span.lo && i < np_span.hi) continue;
    if (!rest.empty()) rest += ' ';
    rest += chain.source_sentence[i];
    rest_span.lo = std::min(rest_span.lo, i);
    rest_span.hi = std::max(rest_span.hi, i + 1);
  }
  if (rest.empty()) {
    rest = join_range(chain.source_sentence, whole);
    rest_span = whole;
  }
  SubPrompt prompt;
  prompt.np_text = join_range(chain.source_sentence, np_span);
  prompt.np_span = np_span;
  prompt.vp_text = std::move(rest);
  prompt.vp_span = rest_span;
  prompt.step_index = 1;
  chain.prompts.push_back(std::move(prompt));
  return chain;
}

}  // namespace prefiner
