#pragma once

// Dense double-precision inner loops. Each kernel has a portable scalar
// reference and, where the build and CPU allow it, an AVX2+FMA variant. The
// active variant is picked once at startup (override with PREFINER_ISA=scalar
// or PREFINER_ISA=avx2) and can be switched with set_isa() for testing.
//
// All matrices are row-major and densely packed.

#include <cstddef>
#include <string_view>

namespace prefiner::kernels {

enum class Isa { scalar, avx2 };

std::string_view to_string(Isa isa);

struct KernelTable {
  Isa isa;
  /// C[M,N] (+)= A[M,K] * B[K,N]. Every output element is accumulated over k
  /// in increasing order starting from zero, then stored or added to C.
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                  bool accumulate);
  /// out[r,:] = softmax(in[r,:]) with the row maximum subtracted first.
  void (*softmax_rows)(std::size_t rows, std::size_t cols, const double* in, double* out);
  double (*dot)(const double* x, const double* y, std::size_t n);
  /// y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
};

const KernelTable& scalar_kernels();

/// nullptr when the AVX2 variant was not compiled in.
const KernelTable* avx2_kernels();

bool isa_supported(Isa isa);
Isa active_isa();
/// Throws InvalidArgument if the variant is unavailable on this machine.
void set_isa(Isa isa);
const KernelTable& active();

// Entry points used by the tensor core. They dispatch to the active table and
// split large problems across rows when more than one thread is configured;
// the per-element arithmetic is identical for any split.

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);
/// C[M,N] (+)= A[M,K] * B[N,K]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);
/// C[M,N] (+)= A[K,M]^T * B[K,N]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);
void softmax_rows(std::size_t rows, std::size_t cols, const double* in, double* out);

}  // namespace prefiner::kernels
