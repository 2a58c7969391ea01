#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ggp/ggp_prior.hpp"
#include "ggp/error.hpp"
#include "ggp/svgp.hpp"

namespace ggp {

struct TrainConfig {
  double learning_rate = 0.005;
  int max_iters = 2000;
  std::uint64_t seed = 0;
  int quad_points = 20;
  double epsilon = 1e-3;
  bool train_z = true;
  bool tfidf = true;
  KernelFamily kernel = KernelFamily::polynomial;

  void validate() const;
  /// Applies `key=value` pairs (keys as the field names; `kernel` takes linear|poly3).
  void apply(const std::string& key, const std::string& value);
  std::map<std::string, std::string> to_map() const;
};

/// Reads `key=value` lines (blank lines and `#` comments skipped) on top of `base`.
TrainConfig read_train_config(std::istream& in, TrainConfig base = {},
                              const std::string& source_name = "<config>");

double softplus(double x);
double softplus_inverse(double y);

/// Unconstrained optimization coordinates. Positive quantities (kernel
/// variance and offset, diagonal of each S_k) are stored through softplus.
struct Parameters {
  KernelFamily family = KernelFamily::polynomial;
  double raw_variance = 0.0;
  double raw_offset = 0.0;                 // unused for the linear family
  Eigen::MatrixXd z;                       // M x n_features
  Eigen::MatrixXd mean;                    // M x K
  std::vector<Eigen::MatrixXd> raw_scale;  // lower-triangular, softplus diagonal

  static Parameters from_model(const KernelSpec& spec, const VariationalState& state);
  KernelSpec kernel_spec() const;
  VariationalState state() const;
};

struct ParameterBlock {
  std::string name;  // "kernel", "inducing", "mean", "scale"
  std::size_t offset;
  std::size_t size;
};

/// Flat vector view over Parameters. Z is omitted when `include_z` is false.
class ParameterLayout {
 public:
  ParameterLayout(const Parameters& shape, bool include_z);

  std::size_t size() const noexcept { return size_; }
  const std::vector<ParameterBlock>& blocks() const noexcept { return blocks_; }

  Eigen::VectorXd flatten(const Parameters& p) const;
  /// Writes the flat vector into `p` (which supplies shapes and any fixed Z).
  void unflatten(const Eigen::VectorXd& x, Parameters& p) const;

 private:
  bool include_z_;
  bool has_offset_;
  std::size_t size_ = 0;
  std::vector<ParameterBlock> blocks_;
};

/// ELBO over a fixed labelled set, with gradients wrt every unconstrained
/// parameter via reverse-mode adjoints of the whitened SVGP computation.
class ElboObjective {
 public:
  ElboObjective(const GgpPrior& prior, std::vector<LabelledNode> labels, RobustMax lik,
                GaussHermite quad);

  double value(const Parameters& p) const;
  double value_and_grad(const Parameters& p, Parameters& grad) const;

  std::span<const LabelledNode> labels() const noexcept { return labels_; }
  const RobustMax& likelihood() const noexcept { return lik_; }

 private:
  double evaluate(const Parameters& p, Parameters* grad) const;

  GgpPrior prior_;
  std::vector<LabelledNode> labels_;
  RobustMax lik_;
  GaussHermite quad_;
  NeighborhoodBlock block_;
};

/// Kernel hyperparameters at the start of training: variance scales the mean
/// squared norm of the labelled nodes' averaged feature rows to one; offset 1.
KernelSpec initial_kernel(const GgpPrior& prior, std::span<const std::size_t> labelled,
                          KernelFamily family);

/// M = |labelled|; Z = averaged feature rows of the labelled nodes plus
/// N(0, 1e-4 * s^2) noise (s^2 the empirical variance of those rows' entries);
/// m_k = 0, S_k = I.
VariationalState initialize(const GgpPrior& prior, std::span<const std::size_t> labelled,
                            int n_classes, const TrainConfig& config);

/// Maximizes an objective with ADAM (beta1 0.9, beta2 0.999, eps 1e-8).
class Adam {
 public:
  Adam(std::size_t n, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  /// One ascent step along `grad`.
  void step(Eigen::VectorXd& x, const Eigen::VectorXd& grad);

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  Eigen::VectorXd m_, v_;
};

struct TrainedModel {
  GgpPrior prior;  // carries the fitted KernelSpec
  VariationalState state;
  RobustMax likelihood;
  TrainConfig config;
  std::vector<LabelledNode> labels;
  std::vector<double> elbo_trace;  // ELBO at the start of each iteration
  double initial_elbo = 0.0;
  double final_elbo = 0.0;
  std::vector<std::string> warnings;
};

/// Thrown when the ELBO or its gradient turns non-finite; carries the last
/// finite parameters.
class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(const std::string& what, int iteration, KernelSpec spec, VariationalState state)
      : NumericalError(what), iteration(iteration), last_spec(spec), last_state(std::move(state)) {}
  int iteration;
  KernelSpec last_spec;
  VariationalState last_state;
};

using IterationCallback = std::function<void(int iteration, double elbo)>;

TrainedModel fit(const GgpPrior& prior, std::span<const LabelledNode> labels, int n_classes,
                 const TrainConfig& config, const IterationCallback& on_iteration = {});

Eigen::MatrixXd predict_proba(const TrainedModel& model, std::span<const std::size_t> idx);
std::vector<int> predict(const TrainedModel& model, std::span<const std::size_t> idx);

struct BlockError {
  std::string block;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<BlockError> blocks;
  const BlockError& worst() const;
};

using ValueAndGrad = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

/// Central finite differences against the supplied gradient, per block. The
/// step is taken on standardized coordinates (scaled by the standard deviation
/// of the block's entries). Relative error is |g - g_fd| / max(|g|, |g_fd|, 1e-8).
GradCheckReport grad_check(const ValueAndGrad& f, const Eigen::VectorXd& x,
                           const std::vector<ParameterBlock>& blocks, double step = 1e-4);

GradCheckReport grad_check(const GgpPrior& prior, const VariationalState& state,
                           std::span<const LabelledNode> labels, const TrainConfig& config,
                           double step = 1e-4);

}  // namespace ggp
