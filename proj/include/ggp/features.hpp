#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace ggp {

using FeatureIndex = std::uint32_t;

/// View of one sparse row: strictly increasing indices, non-zero values.
struct SparseRow {
  std::size_t dim = 0;
  std::span<const FeatureIndex> indices;
  std::span<const double> values;

  std::size_t nnz() const noexcept { return indices.size(); }
};

struct FeatureTriplet {
  std::size_t node;
  std::size_t feature;
  double value;
};

/// Node-by-feature matrix in CSR form. Immutable after construction.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;

  /// Builds from (node, feature, value) triplets in any order. Zero values are
  /// dropped; repeated (node, feature) pairs and non-finite values are input errors.
  static FeatureMatrix from_triplets(std::size_t n_nodes, std::size_t n_features,
                                     std::span<const FeatureTriplet> triplets);
  static FeatureMatrix from_dense(const Eigen::MatrixXd& dense);

  std::size_t n_nodes() const noexcept { return row_ptr_.empty() ? 0 : row_ptr_.size() - 1; }
  std::size_t n_features() const noexcept { return n_features_; }
  std::size_t nnz() const noexcept { return values_.size(); }

  SparseRow row(std::size_t n) const {
    const auto b = row_ptr_[n], e = row_ptr_[n + 1];
    return {n_features_, {indices_.data() + b, indices_.data() + e},
            {values_.data() + b, values_.data() + e}};
  }

  Eigen::MatrixXd to_dense() const;
  std::vector<FeatureTriplet> triplets() const;
  std::uint64_t fingerprint() const;

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

 private:
  std::size_t n_features_ = 0;
  std::vector<std::size_t> row_ptr_;
  std::vector<FeatureIndex> indices_;
  std::vector<double> values_;
};

/// tf * idf with idf(t) = ln((1 + N) / (1 + df(t))) + 1, then optional L2 row
/// normalization (all-zero rows stay zero). Negative input values are rejected.
FeatureMatrix tfidf_transform(const FeatureMatrix& x, bool l2_normalize = true);

enum class KernelFamily { linear, polynomial };

/// Base kernel k(x, z) as a function of the raw inner product s = <x, z>:
///   linear:     variance * s
///   polynomial: (variance * s + offset)^3
struct KernelSpec {
  KernelFamily family = KernelFamily::polynomial;
  double variance = 1.0;
  double offset = 1.0;
  int degree = 3;

  static KernelSpec linear(double variance);
  static KernelSpec polynomial(double variance, double offset);

  /// Throws InputError unless variance > 0, offset >= 0 and degree fits the family.
  void validate() const;

  double from_dot(double s) const {
    if (family == KernelFamily::linear) return variance * s;
    const double b = variance * s + offset;
    return b * b * b;
  }
  /// dk/ds
  double d_dot(double s) const {
    if (family == KernelFamily::linear) return variance;
    const double b = variance * s + offset;
    return 3.0 * b * b * variance;
  }
  double d_variance(double s) const {
    if (family == KernelFamily::linear) return s;
    const double b = variance * s + offset;
    return 3.0 * b * b * s;
  }
  double d_offset(double s) const {
    if (family == KernelFamily::linear) return 0.0;
    const double b = variance * s + offset;
    return 3.0 * b * b;
  }

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

std::string to_string(KernelFamily family);
KernelFamily kernel_family_from_string(const std::string& name);

double sparse_dot(const SparseRow& a, const SparseRow& b);
double sparse_dense_dot(const SparseRow& a, const Eigen::Ref<const Eigen::VectorXd>& z);

double base_kernel(const SparseRow& x, const SparseRow& z, const KernelSpec& spec);
double base_kernel(const SparseRow& x, const Eigen::Ref<const Eigen::VectorXd>& z,
                   const KernelSpec& spec);

/// Parses `node<TAB>feature<TAB>value` lines. A `# shape <n_nodes> <n_features>`
/// header fixes the dimensions; otherwise they are inferred from the maximum indices.
FeatureMatrix read_sparse_features(std::istream& in, const std::string& source_name = "<features>");
void write_sparse_features(std::ostream& out, const FeatureMatrix& x);

}  // namespace ggp
