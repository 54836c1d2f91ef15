#pragma once

// Synthetic compositional grounding data.
//
// A VTG sample is a grid [N_f, T, C] plus a query "the SUBJECT A1 , A2 and A3"
// (k = 1..3 single-verb actions). The subject vector sits on a few target
// slots for the whole video; inside the ground-truth window the target slots
// also carry the action vectors, in order, on consecutive sub-spans. Other
// slots hold unrelated concept vectors. A distractor is a second instance of
// the same subject, on other slots, whose window carries wrong or missing
// actions. Gaussian noise is added everywhere.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "prefiner/embed.hpp"
#include "prefiner/metrics.hpp"
#include "prefiner/segment.hpp"
#include "prefiner/tensor.hpp"

namespace prefiner {

struct SynthConfig {
  std::size_t n_samples = 96;
  std::size_t n_f = 8;
  std::size_t t = 64;
  std::size_t c = 32;
  /// Size of the subject and action vocabularies drawn from.
  std::size_t n_concepts = 12;
  double distractor_rate = 0.5;
  double noise_sigma = 0.15;
  std::uint64_t seed = 7;
  /// Slots occupied by the referred instance (and by a distractor instance).
  std::size_t target_slots = 2;
  /// Ground-truth window width in clips.
  std::size_t gt_width = 4;
  /// Minimum dot-product gap kept between query actions and distractor
  /// actions (rejection sampling).
  double margin = 0.05;

  /// Throws InvalidArgument.
  void validate() const;
};

struct GroundingSample {
  std::string id;
  Tensor grid;  // [N_f, T, C]
  std::string tree_text;
  Segment gt;
  std::vector<Segment> candidates;
};

/// Sliding windows of widths {4, 8, 16, 32} with stride width/4, clipped to
/// [0, T); duplicates removed, ordered by (width, start).
std::vector<Segment> sliding_window_candidates(std::size_t t);

/// Surface sentence of a tree (its leaves joined by spaces).
std::string sentence_of(const std::string& tree_text);

/// Throws DimMismatch if provider.dim() != cfg.c.
std::vector<GroundingSample> generate_vtg_dataset(const SynthConfig& cfg, const EmbeddingProvider& provider);

/// Writes grid.prtk, tree.mrg and meta.json into dir (created if needed).
void write_sample(const GroundingSample& sample, const std::filesystem::path& dir);
/// Throws Io (naming the missing path), FormatVersionMismatch, ParseError.
GroundingSample read_sample(const std::filesystem::path& dir);

/// Writes every sample under dir/<id>/ plus dir/manifest.jsonl.
void write_dataset(const std::vector<GroundingSample>& samples, const std::filesystem::path& dir);
/// Reads dir/manifest.jsonl (or a manifest path) and the samples it lists.
/// Throws DatasetNotFound.
std::vector<GroundingSample> read_dataset(const std::filesystem::path& dir_or_manifest);

// ---- RVOS ------------------------------------------------------------------

struct RvosSample {
  std::string id;
  Tensor grid;           // [N_f, T, C]
  Tensor tokens;         // [L, C] sentence token rows
  Tensor mask_features;  // [T, H, W, C]
  std::vector<Mask> gt_masks;
};

struct RvosSynthConfig {
  std::size_t n_f = 20;
  std::size_t t = 6;
  std::size_t c = 32;
  std::size_t height = 16;
  std::size_t width = 16;
  double noise_sigma = 0.0;
  std::uint64_t seed = 7;
};

/// The target instance occupies a square block per frame. Its mask features
/// are the unit sentence direction (mean of the token rows) and every other
/// pixel carries the negated direction.
RvosSample generate_rvos_sample(const RvosSynthConfig& cfg, const EmbeddingProvider& provider, std::size_t index);

/// Binary P5 PGM: 0 background, 255 foreground. Reading treats any nonzero
/// pixel as foreground.
void write_pgm(const std::filesystem::path& path, const Mask& mask);
Mask read_pgm(const std::filesystem::path& path);

/// Masks of frames 0..T-1 from dir/<t:05>.pgm.
void write_mask_sequence(const std::filesystem::path& dir, const std::vector<Mask>& masks);
std::vector<Mask> read_mask_sequence(const std::filesystem::path& dir);

}  // namespace prefiner
