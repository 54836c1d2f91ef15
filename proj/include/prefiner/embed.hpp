#pragma once

// Phrase embeddings standing in for a frozen text encoder.
//
// Hash mode draws one Gaussian vector per whitespace token from a generator
// keyed by (seed, token), averages them and L2-normalizes, so it ignores token
// order. File mode serves exact-match lookups from an EMB table.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "prefiner/tensor.hpp"

namespace prefiner {

struct PhraseEmbedding {
  std::string phrase;
  std::vector<double> vector;
};

class EmbeddingProvider {
 public:
  enum class Mode { hash, file };

  static EmbeddingProvider hashed(std::size_t dim, std::uint64_t seed);
  /// Rows are L2-normalized; all must have length `dim`.
  static EmbeddingProvider from_table(std::size_t dim, std::map<std::string, std::vector<double>> table);

  Mode mode() const { return mode_; }
  std::size_t dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }
  const std::map<std::string, std::vector<double>>& table() const { return table_; }

  /// Throws EmptyPhrase, or UnknownPhrase in file mode.
  PhraseEmbedding embed(std::string_view phrase) const;
  /// The embedding as a constant [dim] tensor.
  Tensor embed_tensor(std::string_view phrase) const;

 private:
  Mode mode_ = Mode::hash;
  std::size_t dim_ = 0;
  std::uint64_t seed_ = 0;
  std::map<std::string, std::vector<double>> table_;
};

inline PhraseEmbedding embed_phrase(const EmbeddingProvider& p, std::string_view phrase) { return p.embed(phrase); }

/// EMB format: "EMB 1 <dim>" then "<phrase>\t<c0>,<c1>,..." per line.
/// Throws Io, ParseError (with line number) or DimMismatch.
EmbeddingProvider load_embedding_file(const std::filesystem::path& path);
void write_embedding_file(const std::filesystem::path& path, std::size_t dim,
                          const std::vector<std::pair<std::string, std::vector<double>>>& rows);

double cosine(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace prefiner
