#include "ssda2/tensor.hpp"

#include <cblas.h>

#include <istream>
#include <ostream>

namespace ssda2 {

void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          double alpha, const double* a, const double* b, double beta, double* c) {
  const auto ta = trans_a ? CblasTrans : CblasNoTrans;
  const auto tb = trans_b ? CblasTrans : CblasNoTrans;
  const int lda = static_cast<int>(trans_a ? m : k);
  const int ldb = static_cast<int>(trans_b ? k : n);
  cblas_dgemm(CblasRowMajor, ta, tb, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), alpha, a, lda, b, ldb, beta, c, static_cast<int>(n));
}

void write_tensor(std::ostream& out, const Tensor& t) {
  const std::uint32_t rank = static_cast<std::uint32_t>(t.rank());
  out.write(reinterpret_cast<const char*>(&rank), sizeof(rank));
  for (int d = 0; d < t.rank(); ++d) {
    const std::int64_t dim = t.dim(d);
    out.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
  }
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * static_cast<std::int64_t>(sizeof(double))));
  if (!out) throw std::runtime_error("write_tensor: stream failure");
}

Tensor read_tensor(std::istream& in) {
  std::uint32_t rank = 0;
  in.read(reinterpret_cast<char*>(&rank), sizeof(rank));
  if (!in || rank > 8) throw std::runtime_error("read_tensor: bad header");
  std::vector<std::int64_t> shape(rank);
  for (auto& dim : shape) {
    in.read(reinterpret_cast<char*>(&dim), sizeof(dim));
    if (!in || dim < 0) throw std::runtime_error("read_tensor: bad dimension");
  }
  Tensor t(std::move(shape));
  in.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.size() * static_cast<std::int64_t>(sizeof(double))));
  if (!in) throw std::runtime_error("read_tensor: truncated stream");
  return t;
}

}  // namespace ssda2
