#include "prefiner/treebank.hpp"

#include <fstream>
#include <sstream>

#include "prefiner/error.hpp"

namespace prefiner {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

class Reader {
 public:
  explicit Reader(std::string_view text) : text_(text) {}

  ParseTree read() {
    skip_space();
    if (at_end()) fail(ErrorCode::UnbalancedBrackets, "empty input at position 0");
    if (peek() != '(') fail(ErrorCode::TrailingGarbage, "expected '(' at position " + std::to_string(pos_));
    ParseTree tree = read_node(true);
    skip_space();
    if (!at_end()) {
      if (peek() == ')') {
        fail(ErrorCode::UnbalancedBrackets, "unmatched ')' at position " + std::to_string(pos_));
      }
      fail(ErrorCode::TrailingGarbage, "unexpected input at position " + std::to_string(pos_));
    }
    std::size_t next = 0;
    assign_spans(tree, next);
    return tree;
  }

 private:
  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return text_[pos_]; }

  void skip_space() {
    while (!at_end() && is_space(peek())) ++pos_;
  }

  std::string read_atom() {
    std::size_t start = pos_;
    while (!at_end() && !is_space(peek()) && peek() != '(' && peek() != ')') ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }

  ParseTree read_node(bool is_root) {
    std::size_t open = pos_;
    ++pos_;  // '('
    skip_space();
    ParseTree node;
    if (!at_end() && peek() != '(' && peek() != ')') node.label = read_atom();

    std::vector<std::string> bare;
    for (;;) {
      skip_space();
      if (at_end()) {
        fail(ErrorCode::UnbalancedBrackets,
             "missing ')' for '(' at position " + std::to_string(open) + " (end of input at position " +
                 std::to_string(pos_) + ")");
      }
      char c = peek();
      if (c == ')') {
        ++pos_;
        break;
      }
      if (c == '(') {
        node.children.push_back(read_node(false));
      } else {
        std::size_t at = pos_;
        bare.push_back(read_atom());
        if (!node.children.empty() || bare.size() > 1) {
          fail(ErrorCode::EmptyLabel, "token without its own label at position " + std::to_string(at));
        }
      }
      if (!bare.empty() && !node.children.empty()) {
        fail(ErrorCode::EmptyLabel, "token without its own label inside node at position " + std::to_string(open));
      }
    }

    if (node.label.empty()) {
      if (is_root && node.children.size() == 1 && bare.empty()) return std::move(node.children.front());
      fail(ErrorCode::EmptyLabel, "node at position " + std::to_string(open) + " has no label");
    }
    if (!bare.empty()) {
      node.token = std::move(bare.front());
    } else if (node.children.empty()) {
      // "(X)" has neither a token nor children.
      fail(ErrorCode::ParseError, "node '" + node.label + "' at position " + std::to_string(open) + " is empty");
    }
    return node;
  }

  static void assign_spans(ParseTree& node, std::size_t& next) {
    node.span.lo = next;
    if (node.is_leaf()) {
      ++next;
    } else {
      for (auto& child : node.children) assign_spans(child, next);
    }
    node.span.hi = next;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

void render_into(const ParseTree& node, std::string& out) {
  out += '(';
  out += node.label;
  if (node.token) {
    out += ' ';
    out += *node.token;
  }
  for (const auto& child : node.children) {
    out += ' ';
    render_into(child, out);
  }
  out += ')';
}

void collect_leaves(const ParseTree& node, std::vector<std::string>& out) {
  if (node.token) {
    out.push_back(*node.token);
    return;
  }
  for (const auto& child : node.children) collect_leaves(child, out);
}

}  // namespace

std::size_t ParseTree::leaf_count() const {
  if (is_leaf()) return 1;
  std::size_t n = 0;
  for (const auto& child : children) n += child.leaf_count();
  return n;
}

std::vector<std::string> ParseTree::leaves() const {
  std::vector<std::string> out;
  collect_leaves(*this, out);
  return out;
}

std::string ParseTree::surface() const {
  std::string out;
  for (const auto& word : leaves()) {
    if (!out.empty()) out += ' ';
    out += word;
  }
  return out;
}

ParseTree parse_tree(std::string_view text) { return Reader(text).read(); }

std::string render(const ParseTree& tree) {
  std::string out;
  render_into(tree, out);
  return out;
}

std::string_view base_label(std::string_view label) {
  if (label.empty() || label.front() == '-') return label;
  std::size_t cut = label.find_first_of("-=");
  return cut == std::string_view::npos ? label : label.substr(0, cut);
}

bool label_is(const ParseTree& node, std::string_view category) { return base_label(node.label) == category; }

std::vector<ParseTree> parse_tree_lines(std::string_view text) {
  std::vector<ParseTree> trees;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    ++line_no;
    std::size_t first = 0;
    while (first < line.size() && is_space(line[first])) ++first;
    if (first < line.size() && line[first] != '#') {
      try {
        trees.push_back(parse_tree(line));
      } catch (const Error& e) {
        throw Error(e.code(), "line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    if (end == text.size()) break;
    start = end + 1;
  }
  return trees;
}

std::vector<ParseTree> read_tree_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open tree file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_tree_lines(buffer.str());
}

}  // namespace prefiner
