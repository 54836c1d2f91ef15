#pragma once

// MAC accounting and wall-clock comparison of factorized (spatial then
// temporal) attention against joint attention over the whole grid.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string_view>
#include <vector>

namespace prefiner {

enum class AttnLayout { factorized, joint };

std::string_view to_string(AttnLayout layout);

struct BenchDims {
  std::size_t n_f = 0;
  std::size_t t = 0;
  std::size_t c = 0;
  std::size_t heads = 4;
};

/// Textbook core costs: N_f T (N_f + T) C and (N_f T)^2 C.
std::uint64_t predicted_factorized_macs(std::size_t n_f, std::size_t t, std::size_t c);
std::uint64_t predicted_joint_macs(std::size_t n_f, std::size_t t, std::size_t c);

/// What the instrumented forward should count. Every sequence carries one
/// phrase row per visual row (lengths 2 N_f, 2 T, 2 N_f T) and both QK^T and
/// A V are counted, so each textbook term picks up a factor 2 * 2^2 = 8.
std::uint64_t expected_core_macs(AttnLayout layout, std::size_t n_f, std::size_t t, std::size_t c);

struct MacReport {
  std::uint64_t core = 0;
  std::uint64_t projection = 0;
};

/// Runs one instrumented refinement step (no gradients) on a random grid and
/// returns the multiply-accumulates it performed.
MacReport count_macs(AttnLayout layout, const BenchDims& dims);

struct ComplexityReport {
  BenchDims dims;
  std::uint64_t factorized_macs = 0;
  std::uint64_t joint_macs = 0;
  std::uint64_t predicted_factorized = 0;
  std::uint64_t predicted_joint = 0;
  double wall_factorized_ms = 0.0;
  double wall_joint_ms = 0.0;
  std::size_t repeats = 0;
};

/// One warm-up run per layout, then the median of `repeats` timed runs.
/// Throws InvalidArgument when repeats < 5 or a dimension is zero.
ComplexityReport bench_wallclock(const BenchDims& dims, std::size_t repeats);

/// One row per (layout, dims).
void write_report_tsv(std::ostream& out, const std::vector<ComplexityReport>& reports);

}  // namespace prefiner
