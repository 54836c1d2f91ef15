#include "prefiner/embed.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "prefiner/error.hpp"
#include "prefiner/rng.hpp"

namespace prefiner {

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto lo = s.find_first_not_of(ws);
  if (lo == std::string_view::npos) return {};
  return s.substr(lo, s.find_last_not_of(ws) - lo + 1);
}

std::vector<std::string_view> tokens(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\n' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && !(s[j] == ' ' || s[j] == '\t' || s[j] == '\n' || s[j] == '\r')) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

bool normalize(std::vector<double>& v) {
  double n2 = 0.0;
  for (double x : v) n2 += x * x;
  if (!(n2 > 0.0) || !std::isfinite(n2)) return false;
  const double inv = 1.0 / std::sqrt(n2);
  for (double& x : v) x *= inv;
  return true;
}

}  // namespace

EmbeddingProvider EmbeddingProvider::hashed(std::size_t dim, std::uint64_t seed) {
  if (dim == 0) fail(ErrorCode::InvalidArgument, "embedding dimension must be positive");
  EmbeddingProvider p;
  p.mode_ = Mode::hash;
  p.dim_ = dim;
  p.seed_ = seed;
  return p;
}

EmbeddingProvider EmbeddingProvider::from_table(std::size_t dim, std::map<std::string, std::vector<double>> table) {
  if (dim == 0) fail(ErrorCode::InvalidArgument, "embedding dimension must be positive");
  for (auto& [phrase, vec] : table) {
    if (vec.size() != dim) {
      fail(ErrorCode::DimMismatch, "phrase '" + phrase + "': expected " + std::to_string(dim) + ", got " +
                                       std::to_string(vec.size()));
    }
    if (!normalize(vec)) fail(ErrorCode::ParseError, "phrase '" + phrase + "' has a zero or non-finite vector");
  }
  EmbeddingProvider p;
  p.mode_ = Mode::file;
  p.dim_ = dim;
  p.table_ = std::move(table);
  return p;
}

PhraseEmbedding EmbeddingProvider::embed(std::string_view phrase) const {
  const std::string_view key = trim(phrase);
  if (key.empty()) fail(ErrorCode::EmptyPhrase, "cannot embed an empty phrase");
  PhraseEmbedding out{std::string(key), {}};
  if (mode_ == Mode::file) {
    auto it = table_.find(out.phrase);
    if (it == table_.end()) fail(ErrorCode::UnknownPhrase, "no embedding for '" + out.phrase + "'");
    out.vector = it->second;
    return out;
  }
  out.vector.assign(dim_, 0.0);
  const auto toks = tokens(key);
  for (std::string_view tok : toks) {
    std::mt19937_64 rng(splitmix64(seed_ ^ fnv1a(tok)));
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& x : out.vector) x += n(rng);
  }
  for (double& x : out.vector) x /= static_cast<double>(toks.size());
  normalize(out.vector);
  return out;
}

Tensor EmbeddingProvider::embed_tensor(std::string_view phrase) const {
  return Tensor::from({dim_}, embed(phrase).vector);
}

EmbeddingProvider load_embedding_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  const std::string where = path.string() + ":";
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::ParseError, where + "1: missing EMB header");
  std::istringstream head(line);
  std::string magic;
  int version = 0;
  long long dim = 0;
  if (!(head >> magic >> version >> dim) || magic != "EMB" || dim <= 0) {
    fail(ErrorCode::ParseError, where + "1: expected 'EMB 1 <dim>'");
  }
  if (version != 1) fail(ErrorCode::FormatVersionMismatch, where + "1: EMB version " + std::to_string(version));

  std::map<std::string, std::vector<double>> table;
  std::size_t lineno = 1;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    ++row;
    const std::string at = where + std::to_string(lineno) + ": ";
    const auto tab = line.find('\t');
    if (tab == std::string::npos) fail(ErrorCode::ParseError, at + "missing tab between phrase and vector");
    const std::string phrase(trim(std::string_view(line).substr(0, tab)));
    if (phrase.empty()) fail(ErrorCode::ParseError, at + "empty phrase");
    std::vector<double> vec;
    std::string_view rest = std::string_view(line).substr(tab + 1);
    while (true) {
      const auto comma = rest.find(',');
      const std::string_view field = trim(rest.substr(0, comma));
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (field.empty() || ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v)) {
        fail(ErrorCode::ParseError, at + "bad number '" + std::string(field) + "'");
      }
      vec.push_back(v);
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    if (vec.size() != static_cast<std::size_t>(dim)) {
      fail(ErrorCode::DimMismatch, at + "row " + std::to_string(row) + ": expected " + std::to_string(dim) +
                                       ", got " + std::to_string(vec.size()));
    }
    if (!normalize(vec)) fail(ErrorCode::ParseError, at + "zero vector");
    if (!table.emplace(phrase, std::move(vec)).second) fail(ErrorCode::ParseError, at + "duplicate phrase '" + phrase + "'");
  }
  return EmbeddingProvider::from_table(static_cast<std::size_t>(dim), std::move(table));
}

void write_embedding_file(const std::filesystem::path& path, std::size_t dim,
                          const std::vector<std::pair<std::string, std::vector<double>>>& rows) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << "EMB 1 " << dim << "\n";
  char buf[32];
  for (const auto& [phrase, vec] : rows) {
    if (vec.size() != dim) fail(ErrorCode::DimMismatch, "phrase '" + phrase + "' has the wrong dimension");
    out << phrase << '\t';
    for (std::size_t i = 0; i < vec.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(static_cast<float>(vec[i])));
      out << (i ? "," : "") << buf;
    }
    out << '\n';
  }
  if (!out) fail(ErrorCode::Io, "write failed: " + path.string());
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

}  // namespace prefiner
