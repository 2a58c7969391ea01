#include "ggp/train.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <random>
#include <sstream>

#include <Eigen/Cholesky>

#include "ggp/error.hpp"

namespace ggp {

namespace {

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw InputError("expected a boolean, got '" + v + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  T out{};
  std::string rest;
  if (!(in >> out) || (in >> rest)) throw InputError("bad value for " + key + ": '" + v + "'");
  return out;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InputError("learning_rate must be positive");
  if (max_iters < 0) throw InputError("max_iters must be non-negative");
  if (quad_points < 1) throw InputError("quad_points must be at least 1");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InputError("epsilon must lie in (0, 1)");
}

void TrainConfig::apply(const std::string& key, const std::string& value) {
  if (key == "learning_rate") learning_rate = parse_number<double>(key, value);
  else if (key == "max_iters") max_iters = parse_number<int>(key, value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "quad_points") quad_points = parse_number<int>(key, value);
  else if (key == "epsilon") epsilon = parse_number<double>(key, value);
  else if (key == "train_z") train_z = parse_bool(value);
  else if (key == "tfidf") tfidf = parse_bool(value);
  else if (key == "kernel") kernel = kernel_family_from_string(value);
  else throw InputError("unknown config key '" + key + "'");
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  auto num = [](double v) {
    std::ostringstream o;
    o.precision(17);
    o << v;
    return o.str();
  };
  return {{"learning_rate", num(learning_rate)},
          {"max_iters", std::to_string(max_iters)},
          {"seed", std::to_string(seed)},
          {"quad_points", std::to_string(quad_points)},
          {"epsilon", num(epsilon)},
          {"train_z", train_z ? "true" : "false"},
          {"tfidf", tfidf ? "true" : "false"},
          {"kernel", to_string(kernel)}};
}

TrainConfig read_train_config(std::istream& in, TrainConfig base, const std::string& source_name) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      std::ostringstream msg;
      msg << source_name << ":" << line_no << ": expected key=value";
      throw InputError(msg.str());
    }
    try {
      base.apply(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    } catch (const InputError& e) {
      std::ostringstream msg;
      msg << source_name << ":" << line_no << ": " << e.what();
      throw InputError(msg.str());
    }
  }
  return base;
}

double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw InputError("softplus_inverse needs a positive argument");
  return y + std::log(-std::expm1(-y));
}

Parameters Parameters::from_model(const KernelSpec& spec, const VariationalState& state) {
  Parameters p;
  p.family = spec.family;
  p.raw_variance = softplus_inverse(spec.variance);
  p.raw_offset = spec.family == KernelFamily::polynomial ? softplus_inverse(spec.offset) : 0.0;
  p.z = state.z;
  p.mean = state.mean;
  p.raw_scale = state.scale;
  for (auto& s : p.raw_scale)
    for (Eigen::Index i = 0; i < s.rows(); ++i) s(i, i) = softplus_inverse(s(i, i));
  return p;
}

KernelSpec Parameters::kernel_spec() const {
  KernelSpec s;
  s.family = family;
  s.variance = softplus(raw_variance);
  s.offset = family == KernelFamily::polynomial ? softplus(raw_offset) : 0.0;
  s.degree = family == KernelFamily::polynomial ? 3 : 1;
  return s;
}

VariationalState Parameters::state() const {
  VariationalState s;
  s.z = z;
  s.mean = mean;
  s.scale = raw_scale;
  for (auto& m : s.scale) {
    m.triangularView<Eigen::StrictlyUpper>().setZero();
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, i) = softplus(m(i, i));
  }
  return s;
}

ParameterLayout::ParameterLayout(const Parameters& shape, bool include_z)
    : include_z_(include_z), has_offset_(shape.family == KernelFamily::polynomial) {
  auto add = [&](const char* name, std::size_t n) {
    blocks_.push_back({name, size_, n});
    size_ += n;
  };
  add("kernel", has_offset_ ? 2 : 1);
  if (include_z_) add("inducing", static_cast<std::size_t>(shape.z.size()));
  add("mean", static_cast<std::size_t>(shape.mean.size()));
  const auto m = static_cast<std::size_t>(shape.mean.rows());
  add("scale", shape.raw_scale.size() * m * (m + 1) / 2);
}

Eigen::VectorXd ParameterLayout::flatten(const Parameters& p) const {
  Eigen::VectorXd x(size_);
  std::size_t k = 0;
  x[k++] = p.raw_variance;
  if (has_offset_) x[k++] = p.raw_offset;
  if (include_z_) {
    x.segment(k, p.z.size()) = p.z.reshaped();
    k += p.z.size();
  }
  x.segment(k, p.mean.size()) = p.mean.reshaped();
  k += p.mean.size();
  for (const auto& s : p.raw_scale)
    for (Eigen::Index j = 0; j < s.cols(); ++j)
      for (Eigen::Index i = j; i < s.rows(); ++i) x[k++] = s(i, j);
  return x;
}

void ParameterLayout::unflatten(const Eigen::VectorXd& x, Parameters& p) const {
  if (static_cast<std::size_t>(x.size()) != size_) throw InputError("parameter vector has the wrong length");
  std::size_t k = 0;
  p.raw_variance = x[k++];
  if (has_offset_) p.raw_offset = x[k++];
  if (include_z_) {
    p.z.reshaped() = x.segment(k, p.z.size());
    k += p.z.size();
  }
  p.mean.reshaped() = x.segment(k, p.mean.size());
  k += p.mean.size();
  for (auto& s : p.raw_scale)
    for (Eigen::Index j = 0; j < s.cols(); ++j)
      for (Eigen::Index i = j; i < s.rows(); ++i) s(i, j) = x[k++];
}

namespace {

std::vector<std::size_t> label_nodes(std::span<const LabelledNode> labels) {
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(l.node);
  return out;
}

}  // namespace

ElboObjective::ElboObjective(const GgpPrior& prior, std::vector<LabelledNode> labels, RobustMax lik,
                             GaussHermite quad)
    : prior_(prior),
      labels_(std::move(labels)),
      lik_(lik),
      quad_(std::move(quad)),
      block_(prior, label_nodes(labels_)) {
  lik_.validate();
  for (const auto& l : labels_)
    if (l.label < 0 || l.label >= lik_.n_classes) throw InputError("label out of range");
}

double ElboObjective::value(const Parameters& p) const { return evaluate(p, nullptr); }

double ElboObjective::value_and_grad(const Parameters& p, Parameters& grad) const {
  return evaluate(p, &grad);
}

double ElboObjective::evaluate(const Parameters& p, Parameters* grad) const {
  using Eigen::Index;
  using Eigen::MatrixXd;
  using Eigen::VectorXd;

  const KernelSpec spec = p.kernel_spec();
  const VariationalState state = p.state();
  const Index m_count = state.z.rows();
  const Index k_count = lik_.n_classes;
  const Index b_count = static_cast<Index>(labels_.size());
  if (state.mean.cols() != k_count) throw InputError("variational state has the wrong class count");

  // Forward.
  const MatrixXd raw_zz = state.z * state.z.transpose();
  const MatrixXd kzz = raw_zz.unaryExpr([&](double s) { return spec.from_dot(s); });
  const JitteredCholesky chol = cholesky_with_jitter(kzz);
  const auto lower = chol.lower.triangularView<Eigen::Lower>();

  const MatrixXd raw_zh = block_.raw_cross(state.z);
  const MatrixXd kzh = block_.kzh(spec, raw_zh);
  const VectorXd khh = block_.khh_diag(spec);
  const MatrixXd a = lower.solve(kzh);
  const VectorXd a_sq = a.colwise().squaredNorm().transpose();

  const MatrixXd means = a.transpose() * state.mean;  // B x K
  std::vector<MatrixXd> sta(k_count);
  MatrixXd vars(b_count, k_count);
  for (Index k = 0; k < k_count; ++k) {
    sta[k] = state.scale[k].triangularView<Eigen::Lower>().transpose() * a;
    vars.col(k) = khh - a_sq + sta[k].colwise().squaredNorm().transpose();
  }

  const double d_log = lik_.log_correct() - lik_.log_incorrect();
  double ell = 0.0;
  MatrixXd g_mean = MatrixXd::Zero(b_count, k_count);
  MatrixXd g_var = MatrixXd::Zero(b_count, k_count);
  VectorXd dm, dv;
  for (Index b = 0; b < b_count; ++b) {
    VectorXd mu = means.row(b).transpose();
    VectorXd var = vars.row(b).transpose();
    std::vector<bool> clamped(k_count, false);
    for (Index k = 0; k < k_count; ++k)
      if (!(var[k] > 1e-12)) {
        var[k] = 1e-12;
        clamped[k] = true;
      }
    const double pc = grad ? prob_max_grad(mu, var, labels_[b].label, quad_, dm, dv)
                           : prob_max(mu, var, labels_[b].label, quad_);
    ell += pc * lik_.log_correct() + (1.0 - pc) * lik_.log_incorrect();
    if (grad) {
      g_mean.row(b) = d_log * dm.transpose();
      for (Index k = 0; k < k_count; ++k) g_var(b, k) = clamped[k] ? 0.0 : d_log * dv[k];
    }
  }
  const double kl = kl_term(state);
  const double value = ell - kl;
  if (!grad) return value;

  // Reverse.
  Parameters& g = *grad;
  g.family = p.family;
  g.raw_scale.assign(k_count, MatrixXd::Zero(m_count, m_count));

  MatrixXd a_bar = state.mean * g_mean.transpose();
  const VectorXd khh_bar = g_var.rowwise().sum();
  MatrixXd mean_bar = a * g_mean - state.mean;
  for (Index k = 0; k < k_count; ++k) {
    const auto s_low = state.scale[k].triangularView<Eigen::Lower>();
    // d var / d a = 2 (S S^T a - a); d var / d S = 2 a a^T S.
    const MatrixXd ssta = s_low * sta[k];
    a_bar += 2.0 * (ssta - a) * g_var.col(k).asDiagonal();
    MatrixXd s_bar = 2.0 * (a * g_var.col(k).asDiagonal()) * sta[k].transpose();
    s_bar -= state.scale[k];  // from -KL: -0.5 |S|_F^2
    MatrixXd& out = g.raw_scale[k];
    out = s_bar.triangularView<Eigen::Lower>();
    for (Index i = 0; i < m_count; ++i) {
      const double s_ii = state.scale[k](i, i);
      out(i, i) = (s_bar(i, i) + 1.0 / s_ii) * sigmoid(p.raw_scale[k](i, i));
    }
  }
  g.mean = std::move(mean_bar);

  // A = L^-1 Kzh.
  const MatrixXd kzh_bar = lower.transpose().solve(a_bar);
  MatrixXd l_bar = -kzh_bar * a.transpose();
  // Cholesky adjoint: S = L^-T Phi(L^T L_bar) L^-1, K_bar = sym(S).
  MatrixXd phi = (chol.lower.transpose() * l_bar.triangularView<Eigen::Lower>().toDenseMatrix())
                     .triangularView<Eigen::Lower>();
  phi.diagonal() *= 0.5;
  MatrixXd s = lower.transpose().solve(phi);
  s = lower.transpose().solve(s.transpose()).transpose();
  MatrixXd kzz_bar = 0.5 * (s + s.transpose());
  // Jitter is proportional to mean(diag Kzz).
  kzz_bar.diagonal().array() += chol.relative_jitter * kzz_bar.trace() / static_cast<double>(m_count);

  double d_variance = 0.0, d_offset = 0.0;
  MatrixXd gz = MatrixXd::Zero(m_count, m_count);
  for (Index j = 0; j < m_count; ++j)
    for (Index i = 0; i < m_count; ++i) {
      const double r = raw_zz(i, j);
      d_variance += kzz_bar(i, j) * spec.d_variance(r);
      d_offset += kzz_bar(i, j) * spec.d_offset(r);
      gz(i, j) = kzz_bar(i, j) * spec.d_dot(r);
    }
  g.z = 2.0 * gz * state.z;
  block_.kzh_grad(spec, raw_zh, kzh_bar, g.z, d_variance, d_offset);
  block_.khh_diag_grad(spec, khh_bar, d_variance, d_offset);

  g.raw_variance = d_variance * sigmoid(p.raw_variance);
  g.raw_offset = spec.family == KernelFamily::polynomial ? d_offset * sigmoid(p.raw_offset) : 0.0;
  return value;
}

KernelSpec initial_kernel(const GgpPrior& prior, std::span<const std::size_t> labelled,
                          KernelFamily family) {
  double mean_sq = 0.0;
  if (!labelled.empty()) {
    mean_sq = prior.averaged_features(labelled).rowwise().squaredNorm().mean();
  }
  const double variance = mean_sq > 0.0 ? 1.0 / mean_sq : 1.0;
  return family == KernelFamily::linear ? KernelSpec::linear(variance)
                                        : KernelSpec::polynomial(variance, 1.0);
}

VariationalState initialize(const GgpPrior& prior, std::span<const std::size_t> labelled,
                            int n_classes, const TrainConfig& config) {
  if (labelled.empty()) throw InputError("initialize: labelled set is empty");
  if (n_classes < 2) throw InputError("initialize: need at least two classes");
  Eigen::MatrixXd z = prior.averaged_features(labelled);
  const double mu = z.mean();
  double spread = (z.array() - mu).square().mean();
  if (!(spread > 0.0)) spread = 1.0;
  const double sd = std::sqrt(1e-4 * spread);
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> noise(0.0, sd);
  for (Eigen::Index j = 0; j < z.cols(); ++j)
    for (Eigen::Index i = 0; i < z.rows(); ++i) z(i, j) += noise(rng);
  return VariationalState::at_prior(std::move(z), n_classes);
}

Adam::Adam(std::size_t n, double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      m_(Eigen::VectorXd::Zero(n)),
      v_(Eigen::VectorXd::Zero(n)) {}

void Adam::step(Eigen::VectorXd& x, const Eigen::VectorXd& grad) {
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  x.array() += lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

TrainedModel fit(const GgpPrior& prior, std::span<const LabelledNode> labels, int n_classes,
                 const TrainConfig& config, const IterationCallback& on_iteration) {
  config.validate();
  if (labels.empty()) throw InputError("fit: no labelled nodes");
  const RobustMax lik{n_classes, config.epsilon};
  lik.validate();

  std::vector<std::size_t> nodes = label_nodes(labels);
  std::vector<std::string> warnings;
  {
    std::vector<int> seen(n_classes, 0);
    for (const auto& l : labels) {
      if (l.label < 0 || l.label >= n_classes) throw InputError("fit: label out of range");
      seen[l.label] = 1;
    }
    for (int k = 0; k < n_classes; ++k)
      if (!seen[k]) warnings.push_back("class " + std::to_string(k) + " has no labelled nodes");
  }

  const KernelSpec spec0 = initial_kernel(prior, nodes, config.kernel);
  const GgpPrior prior0 = prior.with_spec(spec0);
  const VariationalState state0 = initialize(prior0, nodes, n_classes, config);

  ElboObjective objective(prior0, std::vector<LabelledNode>(labels.begin(), labels.end()), lik,
                          GaussHermite(config.quad_points));
  Parameters params = Parameters::from_model(spec0, state0);
  const ParameterLayout layout(params, config.train_z);
  Eigen::VectorXd x = layout.flatten(params);
  Adam adam(layout.size(), config.learning_rate);

  TrainedModel out{prior0, state0, lik, config, {labels.begin(), labels.end()}, {}, 0.0, 0.0, warnings};
  out.elbo_trace.reserve(config.max_iters);
  Parameters grad;
  for (int it = 0; it < config.max_iters; ++it) {
    layout.unflatten(x, params);
    double value;
    try {
      value = objective.value_and_grad(params, grad);
    } catch (const NumericalError& e) {
      Parameters last = params;
      throw TrainingDiverged(std::string(e.what()) + " at iteration " + std::to_string(it), it,
                             last.kernel_spec(), last.state());
    }
    const Eigen::VectorXd g = layout.flatten(grad);
    if (!std::isfinite(value) || !g.allFinite()) {
      std::ostringstream msg;
      msg << "non-finite " << (std::isfinite(value) ? "gradient" : "ELBO") << " at iteration " << it;
      throw TrainingDiverged(msg.str(), it, params.kernel_spec(), params.state());
    }
    out.elbo_trace.push_back(value);
    if (on_iteration) on_iteration(it, value);
    adam.step(x, g);
  }
  layout.unflatten(x, params);
  out.prior = prior.with_spec(params.kernel_spec());
  out.state = params.state();
  out.final_elbo = objective.value(params);
  out.initial_elbo = out.elbo_trace.empty() ? out.final_elbo : out.elbo_trace.front();
  if (!std::isfinite(out.final_elbo))
    throw TrainingDiverged("non-finite final ELBO", config.max_iters, out.prior.spec(), out.state);
  return out;
}

Eigen::MatrixXd predict_proba(const TrainedModel& model, std::span<const std::size_t> idx) {
  return predict_proba(model.prior, model.state, model.likelihood,
                       GaussHermite(model.config.quad_points), idx);
}

std::vector<int> predict(const TrainedModel& model, std::span<const std::size_t> idx) {
  return argmax_rows(predict_proba(model, idx));
}

const BlockError& GradCheckReport::worst() const {
  if (blocks.empty()) throw StateError("empty gradient-check report");
  return *std::max_element(blocks.begin(), blocks.end(), [](const auto& a, const auto& b) {
    return a.max_rel_error < b.max_rel_error;
  });
}

GradCheckReport grad_check(const ValueAndGrad& f, const Eigen::VectorXd& x,
                           const std::vector<ParameterBlock>& blocks, double step) {
  Eigen::VectorXd analytic;
  f(x, &analytic);
  GradCheckReport report;
  Eigen::VectorXd probe = x;
  for (const auto& blk : blocks) {
    BlockError err{blk.name};
    // Steps are taken on standardized coordinates: each block is divided by
    // the standard deviation of its entries (1 when that is zero or undefined).
    double scale = 1.0;
    if (blk.size >= 2) {
      const auto seg = x.segment(static_cast<Eigen::Index>(blk.offset), static_cast<Eigen::Index>(blk.size));
      const double sd = std::sqrt((seg.array() - seg.mean()).square().sum() / static_cast<double>(blk.size - 1));
      if (sd > 0.0) scale = sd;
    }
    const double h = step * scale;
    for (std::size_t i = blk.offset; i < blk.offset + blk.size; ++i) {
      probe[i] = x[i] + h;
      const double up = f(probe, nullptr);
      probe[i] = x[i] - h;
      const double down = f(probe, nullptr);
      probe[i] = x[i];
      const double numeric = (up - down) / (2.0 * h);
      const double ga = analytic[i];
      const double rel =
          std::abs(ga - numeric) / std::max({std::abs(ga), std::abs(numeric), 1e-8});
      if (rel > err.max_rel_error || i == blk.offset) {
        err.max_rel_error = rel;
        err.worst_index = i - blk.offset;
        err.analytic = ga;
        err.numeric = numeric;
      }
    }
    report.blocks.push_back(err);
  }
  return report;
}

GradCheckReport grad_check(const GgpPrior& prior, const VariationalState& state,
                           std::span<const LabelledNode> labels, const TrainConfig& config,
                           double step) {
  const RobustMax lik{static_cast<int>(state.n_classes()), config.epsilon};
  ElboObjective objective(prior, std::vector<LabelledNode>(labels.begin(), labels.end()), lik,
                          GaussHermite(config.quad_points));
  const Parameters base = Parameters::from_model(prior.spec(), state);
  const ParameterLayout layout(base, true);
  auto f = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    Parameters p = base;
    layout.unflatten(x, p);
    if (!g) return objective.value(p);
    Parameters gp;
    const double v = objective.value_and_grad(p, gp);
    *g = layout.flatten(gp);
    return v;
  };
  return grad_check(f, layout.flatten(base), layout.blocks(), step);
}

}  // namespace ggp
