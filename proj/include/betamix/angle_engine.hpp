#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <istream>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace betamix {

// n samples x P variables, stored column-major so each variable is contiguous.
class DataMatrix {
 public:
  DataMatrix() = default;
  DataMatrix(std::size_t n, std::size_t p, std::vector<double> values, std::vector<std::string> column_names);

  std::size_t n() const noexcept { return n_; }
  std::size_t p() const noexcept { return p_; }

  std::span<const double> column(std::size_t j) const { return {values_.data() + j * n_, n_}; }
  std::span<double> column(std::size_t j) { return {values_.data() + j * n_, n_}; }
  double operator()(std::size_t row, std::size_t col) const { return values_[col * n_ + row]; }
  double& operator()(std::size_t row, std::size_t col) { return values_[col * n_ + row]; }

  const std::vector<double>& values() const noexcept { return values_; }
  const std::vector<std::string>& column_names() const noexcept { return names_; }

 private:
  std::size_t n_ = 0;
  std::size_t p_ = 0;
  std::vector<double> values_;
  std::vector<std::string> names_;
};

enum class NaPolicy { error, drop_rows, impute_zero };

NaPolicy parse_na_policy(const std::string& name);

// Reads a comma- or tab-delimited table with a header row. A leading column
// of non-numeric labels is taken as row names. With `transpose`, rows of the
// file become variables. NA policy is applied along the sample axis.
DataMatrix read_matrix(std::istream& in, bool transpose, NaPolicy na_policy);
DataMatrix ingest(const std::filesystem::path& path, bool transpose, NaPolicy na_policy);

// Centers (optionally) and scales every column to unit Euclidean norm, so
// column dot products are cosines. Throws InputError naming constant columns.
DataMatrix standardize(const DataMatrix& m, bool center);

// Bijection between j in [0, P(P-1)/2) and pairs (i, k), i < k, in row-major
// upper-triangle order.
class PairIndex {
 public:
  PairIndex() = default;
  explicit PairIndex(std::size_t p) : p_(p) {}

  std::size_t p() const noexcept { return p_; }
  std::size_t size() const noexcept { return p_ < 2 ? 0 : p_ * (p_ - 1) / 2; }

  std::size_t index(std::size_t i, std::size_t k) const noexcept {
    return i * p_ - i * (i + 1) / 2 + (k - i - 1);
  }
  std::pair<std::size_t, std::size_t> pair(std::size_t j) const noexcept;

  // First pair index belonging to row i.
  std::size_t row_start(std::size_t i) const noexcept { return index(i, i + 1); }

 private:
  std::size_t p_ = 0;
};

inline constexpr double kZClamp = 1e-12;

struct ZVector {
  std::vector<double> z;  // sin^2 of the angle between the pair
  std::vector<double> r;  // signed cosine (correlation when centered)
  PairIndex index;
  std::size_t n_samples = 0;
  bool centered = true;

  std::size_t size() const noexcept { return z.size(); }
};

struct PairwiseOptions {
  std::size_t block_size = 128;
};

// All pairwise z = 1 - r^2 over unit-norm columns. Output is bitwise
// identical for any thread count.
ZVector pairwise_z(const DataMatrix& standardized, bool centered = true, PairwiseOptions options = {});

// Convenience: standardize then pairwise_z.
ZVector compute_z(const DataMatrix& raw, bool center, PairwiseOptions options = {});

// |r| implied by z = 1 - r^2.
inline double z_to_abs_r(double z) { return std::sqrt(1.0 - z); }

}  // namespace betamix
