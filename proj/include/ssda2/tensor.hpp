#pragma once

#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssda2 {

/// Dense row-major tensor of doubles. Rank is small in practice:
/// (N,C,H,W) activations, (out,in,kh,kw) conv weights, (N,C) pooled
/// vectors, (H,W,C) image patches, rank-0 scalars.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> shape) : shape_(std::move(shape)) {
    std::int64_t n = 1;
    for (auto d : shape_) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
      n *= d;
    }
    data_.assign(static_cast<std::size_t>(n), 0.0);
  }

  static Tensor zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<std::int64_t> shape, double v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
  }

  static Tensor scalar(double v) {
    Tensor t{std::vector<std::int64_t>{}};
    t.data_.assign(1, v);
    return t;
  }

  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::int64_t dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool defined() const { return !data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // NCHW addressing for rank-4 tensors.
  double& at4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
    return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  double at4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  double& at3(std::int64_t a, std::int64_t b, std::int64_t c) {
    return data_[static_cast<std::size_t>((a * shape_[1] + b) * shape_[2] + c)];
  }
  double at3(std::int64_t a, std::int64_t b, std::int64_t c) const {
    return data_[static_cast<std::size_t>((a * shape_[1] + b) * shape_[2] + c)];
  }
  double& at2(std::int64_t a, std::int64_t b) {
    return data_[static_cast<std::size_t>(a * shape_[1] + b)];
  }
  double at2(std::int64_t a, std::int64_t b) const {
    return data_[static_cast<std::size_t>(a * shape_[1] + b)];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  std::string shape_str() const {
    std::string s = "(";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape_[i]);
    }
    return s + ")";
  }

  double item() const {
    if (data_.size() != 1) throw std::logic_error("Tensor::item on non-scalar " + shape_str());
    return data_[0];
  }

 private:
  std::vector<std::int64_t> shape_;
  std::vector<double> data_;
};

/// Row-major C = alpha * op(A) * op(B) + beta * C, backed by BLAS dgemm.
/// A is (m,k) after transposition, B is (k,n), C is (m,n).
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          double alpha, const double* a, const double* b, double beta, double* c);

/// Binary tensor framing (rank, dims, raw doubles); bit-exact round trip.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

}  // namespace ssda2
