#include "smcdesign/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace smcdesign {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw std::invalid_argument(std::string(what) + " must be finite");
  }
}

void require_time(double t) {
  if (!std::isfinite(t) || t < 0.0) {
    throw std::invalid_argument("evolution time must be finite and >= 0");
  }
}

// Pr(0) = 1/2 (1 + contrast * cos(phase)). Every shipped model is of this
// form; sharing the expression keeps reparameterized models bit-identical.
inline double ramsey_zero(double contrast, double phase) {
  return 0.5 * (1.0 + contrast * std::cos(phase));
}

inline double select_outcome(Outcome d, double p0) {
  return d.value == 0 ? p0 : 1.0 - p0;
}

void require_binary(Outcome d) {
  if (d.value > 1) throw std::invalid_argument("outcome must be 0 or 1");
}

}  // namespace

double likelihood_known_t2(Outcome d, double omega, double t, std::optional<double> t2) {
  require_binary(d);
  require_finite(omega, "omega");
  require_time(t);
  double contrast = 1.0;
  if (t2) {
    if (std::isnan(*t2) || *t2 <= 0.0) throw std::invalid_argument("T2 must be > 0");
    contrast = std::isinf(*t2) ? 1.0 : std::exp(-t / *t2);
  }
  return select_outcome(d, ramsey_zero(contrast, omega * t));
}

double likelihood_unknown_t2(Outcome d, std::span<const double> x, double t) {
  require_binary(d);
  if (x.size() != 2) throw std::invalid_argument("unknown_t2 expects (omega, 1/T2)");
  require_finite(x[0], "omega");
  require_finite(x[1], "1/T2");
  require_time(t);
  if (x[1] < 0.0) throw std::invalid_argument("1/T2 must be >= 0");
  return select_outcome(d, ramsey_zero(std::exp(-x[1] * t), x[0] * t));
}

double likelihood_gauss_hyper(Outcome d, std::span<const double> y, double t) {
  require_binary(d);
  if (y.size() != 2) throw std::invalid_argument("gauss_hyper expects (mu, sigma^2)");
  require_finite(y[0], "mu");
  require_finite(y[1], "sigma^2");
  require_time(t);
  if (y[1] < 0.0) throw std::invalid_argument("sigma^2 must be >= 0");
  return select_outcome(d, ramsey_zero(std::exp(-0.5 * y[1] * t * t), y[0] * t));
}

double likelihood_lorentz_hyper(Outcome d, std::span<const double> y, double t) {
  require_binary(d);
  if (y.size() != 2) throw std::invalid_argument("lorentz_hyper expects (omega0, gamma)");
  require_finite(y[0], "omega0");
  require_finite(y[1], "gamma");
  require_time(t);
  if (y[1] < 0.0) throw std::invalid_argument("gamma must be >= 0");
  return select_outcome(d, ramsey_zero(std::exp(-y[1] * t), y[0] * t));
}

// ---------------------------------------------------------------------------

Model::Model(ModelDescriptor descriptor) : descriptor_(std::move(descriptor)) {
  const auto d = static_cast<std::size_t>(descriptor_.dimension);
  if (descriptor_.dimension <= 0 || descriptor_.parameter_names.size() != d ||
      descriptor_.parameter_bounds.size() != d) {
    throw std::invalid_argument("inconsistent model descriptor for " + descriptor_.id);
  }
}

std::optional<IntermediateMoments> Model::intermediate_moments(std::span<const double>) const {
  return std::nullopt;
}

bool Model::in_domain(std::span<const double> x) const {
  if (x.size() != static_cast<std::size_t>(dimension())) return false;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!std::isfinite(x[k]) || !descriptor_.parameter_bounds[k].contains(x[k])) return false;
  }
  return true;
}

void Model::validate(std::span<const double> x) const {
  if (x.size() != static_cast<std::size_t>(dimension())) {
    std::ostringstream msg;
    msg << id() << ": expected " << dimension() << " parameters, got " << x.size();
    throw std::invalid_argument(msg.str());
  }
  for (std::size_t k = 0; k < x.size(); ++k) {
    const auto& name = descriptor_.parameter_names[k];
    if (!std::isfinite(x[k])) throw std::invalid_argument(id() + ": " + name + " is not finite");
    if (!descriptor_.parameter_bounds[k].contains(x[k])) {
      std::ostringstream msg;
      msg << id() << ": " << name << " = " << x[k] << " outside ["
          << descriptor_.parameter_bounds[k].lower << ", " << descriptor_.parameter_bounds[k].upper
          << "]";
      throw std::invalid_argument(msg.str());
    }
  }
}

void Model::check_outcome(Outcome d) const {
  if (d.value >= static_cast<unsigned>(n_outcomes())) {
    throw std::invalid_argument("outcome out of range for model " + id());
  }
}

double Model::likelihood(Outcome d, std::span<const double> x, const ExperimentControl& c) const {
  check_outcome(d);
  count(1);
  return select_outcome(d, probability_zero(x, c.time()));
}

std::array<double, 2> Model::outcome_probabilities(std::span<const double> x,
                                                   const ExperimentControl& c) const {
  count(2);
  const double p = probability_zero(x, c.time());
  return {p, 1.0 - p};
}

void Model::likelihoods(Outcome d, const Matrix& locations, const ExperimentControl& c,
                        std::span<double> out) const {
  check_outcome(d);
  const Eigen::Index n = locations.cols();
  const auto dim = static_cast<std::size_t>(locations.rows());
  if (out.size() != static_cast<std::size_t>(n)) throw std::invalid_argument("output size mismatch");
  const double t = c.time();
  count(static_cast<std::uint64_t>(n));
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    out[i] = select_outcome(d, probability_zero({locations.col(i).data(), dim}, t));
  }
}

void Model::likelihoods_serial(Outcome d, const Matrix& locations, const ExperimentControl& c,
                               std::span<double> out) const {
  check_outcome(d);
  const Eigen::Index n = locations.cols();
  const auto dim = static_cast<std::size_t>(locations.rows());
  if (out.size() != static_cast<std::size_t>(n)) throw std::invalid_argument("output size mismatch");
  count(static_cast<std::uint64_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    out[i] = select_outcome(d, probability_zero({locations.col(i).data(), dim}, c.time()));
  }
}

void Model::outcome_likelihoods(const Matrix& locations, const ExperimentControl& c,
                                std::span<double> p0, std::span<double> p1) const {
  const Eigen::Index n = locations.cols();
  const auto dim = static_cast<std::size_t>(locations.rows());
  if (p0.size() != static_cast<std::size_t>(n) || p1.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("output size mismatch");
  }
  const double t = c.time();
  count(2 * static_cast<std::uint64_t>(n));
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = probability_zero({locations.col(i).data(), dim}, t);
    p0[i] = p;
    p1[i] = 1.0 - p;
  }
}

// ---------------------------------------------------------------------------

KnownT2Model::KnownT2Model(std::optional<double> t2)
    : Model({"known_t2", 1, 2, {"omega"}, {ParameterBounds{}}}), t2_(t2) {
  if (t2_ && (std::isnan(*t2_) || *t2_ <= 0.0)) throw std::invalid_argument("T2 must be > 0");
  if (t2_ && std::isinf(*t2_)) t2_.reset();
}

double KnownT2Model::probability_zero(std::span<const double> x, double t) const {
  const double contrast = t2_ ? std::exp(-t / *t2_) : 1.0;
  return ramsey_zero(contrast, x[0] * t);
}

std::unique_ptr<Model> KnownT2Model::clone() const { return std::make_unique<KnownT2Model>(t2_); }

UnknownT2Model::UnknownT2Model()
    : Model({"unknown_t2", 2, 2, {"omega", "inv_t2"}, {ParameterBounds{}, {0.0, kInf}}}) {}

double UnknownT2Model::probability_zero(std::span<const double> x, double t) const {
  return ramsey_zero(std::exp(-x[1] * t), x[0] * t);
}

std::unique_ptr<Model> UnknownT2Model::clone() const { return std::make_unique<UnknownT2Model>(); }

GaussHyperModel::GaussHyperModel()
    : Model({"gauss_hyper", 2, 2, {"mu", "sigma2"}, {ParameterBounds{}, {0.0, kInf}}}) {}

double GaussHyperModel::probability_zero(std::span<const double> y, double t) const {
  return ramsey_zero(std::exp(-0.5 * y[1] * t * t), y[0] * t);
}

std::optional<IntermediateMoments> GaussHyperModel::intermediate_moments(
    std::span<const double> y) const {
  IntermediateMoments m{Vector::Constant(1, y[0]), Matrix::Constant(1, 1, y[1])};
  return m;
}

std::unique_ptr<Model> GaussHyperModel::clone() const {
  return std::make_unique<GaussHyperModel>();
}

LorentzHyperModel::LorentzHyperModel()
    : Model({"lorentz_hyper", 2, 2, {"omega0", "gamma"}, {ParameterBounds{}, {0.0, kInf}}}) {}

double LorentzHyperModel::probability_zero(std::span<const double> y, double t) const {
  return ramsey_zero(std::exp(-y[1] * t), y[0] * t);
}

std::unique_ptr<Model> LorentzHyperModel::clone() const {
  return std::make_unique<LorentzHyperModel>();
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& model_ids() {
  static const std::vector<std::string> ids{"known_t2", "unknown_t2", "gauss_hyper",
                                            "lorentz_hyper"};
  return ids;
}

std::unique_ptr<Model> make_model(const ModelSpec& spec) {
  if (spec.id == "known_t2") return std::make_unique<KnownT2Model>(spec.t2);
  if (spec.id == "unknown_t2") return std::make_unique<UnknownT2Model>();
  if (spec.id == "gauss_hyper") return std::make_unique<GaussHyperModel>();
  if (spec.id == "lorentz_hyper") return std::make_unique<LorentzHyperModel>();
  std::string msg = "unknown model id '" + spec.id + "'; valid ids:";
  for (const auto& id : model_ids()) msg += " " + id;
  throw std::invalid_argument(msg);
}

Outcome simulate_outcome(const Model& model, std::span<const double> true_params,
                         const ExperimentControl& c, Rng& rng) {
  model.validate(true_params);
  const double p0 = model.likelihood(Outcome{0}, true_params, c);
  return Outcome{uniform01(rng) < p0 ? 0u : 1u};
}

}  // namespace smcdesign
