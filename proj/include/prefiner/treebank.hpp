#pragma once

// Penn-style bracketed constituency trees.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace prefiner {

/// Half-open token interval [lo, hi) into the sentence.
struct Span {
  std::size_t lo = 0;
  std::size_t hi = 0;

  std::size_t width() const { return hi - lo; }
  friend bool operator==(const Span&, const Span&) = default;
};

/// Labeled ordered tree. A node carries a token iff it has no children.
struct ParseTree {
  std::string label;
  std::vector<ParseTree> children;
  std::optional<std::string> token;
  Span span;

  bool is_leaf() const { return children.empty(); }
  std::size_t leaf_count() const;

  /// Leaf tokens in surface order.
  std::vector<std::string> leaves() const;

  /// Leaf tokens joined by single spaces.
  std::string surface() const;

  /// Structural equality: labels, tokens, and child order. Spans follow from
  /// structure and are compared as well.
  friend bool operator==(const ParseTree&, const ParseTree&) = default;
};

/// Parses one balanced bracketed expression. Any whitespace separates tokens.
/// A label-less wrapper "( (S ...) )" around a single tree is unwrapped.
ParseTree parse_tree(std::string_view text);

/// Single-line canonical form: "(S (NP (NN dog)) (VP (VBZ runs)))".
std::string render(const ParseTree& tree);

/// Category part of a label: "NP-SBJ" and "NP=2" both yield "NP". Labels that
/// start with '-' (e.g. "-NONE-") are returned unchanged.
std::string_view base_label(std::string_view label);

bool label_is(const ParseTree& node, std::string_view category);

/// One tree per line; blank lines and lines starting with '#' are skipped.
std::vector<ParseTree> read_tree_file(const std::filesystem::path& path);

/// Same as read_tree_file but over in-memory text.
std::vector<ParseTree> parse_tree_lines(std::string_view text);

}  // namespace prefiner
