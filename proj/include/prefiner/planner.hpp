#pragma once

// Sentence decomposition into an ordered chain of (noun phrase, verb phrase)
// sub-prompts, driven by a constituency tree.

#include <string>
#include <vector>

#include "prefiner/treebank.hpp"

namespace prefiner {

struct SubPrompt {
  std::string np_text;
  std::string vp_text;
  Span np_span;
  Span vp_span;
  std::size_t step_index = 0;  // 1-based

  friend bool operator==(const SubPrompt&, const SubPrompt&) = default;
};

struct SubPromptChain {
  std::vector<SubPrompt> prompts;
  std::vector<std::string> source_sentence;

  std::size_t size() const { return prompts.size(); }
  bool empty() const { return prompts.empty(); }
};

/// First node in pre-order labeled NP that has no VP anywhere below it.
/// Throws NoNounPhrase.
const ParseTree& find_main_np(const ParseTree& tree);

/// Terminal verb phrases in surface order. A VP with two or more VP children
/// is replaced by those children; a VP with exactly one VP child is a wrapper
/// and its child is used instead. Throws NoVerbPhrase.
std::vector<const ParseTree*> extract_atomic_vps(const ParseTree& tree);

/// Pairs the main NP with every atomic VP. Propagates NoNounPhrase and
/// NoVerbPhrase.
SubPromptChain decompose(const ParseTree& tree);

/// decompose() that never throws on grammatical gaps: without a VP the chain
/// holds one sub-prompt whose VP is the sentence minus the NP tokens; without
/// an NP the whole sentence stands in as the NP.
SubPromptChain decompose_with_fallback(const ParseTree& tree);

}  // namespace prefiner
