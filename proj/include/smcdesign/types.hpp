#ifndef SMCDESIGN_TYPES_HPP_
#define SMCDESIGN_TYPES_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace smcdesign {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// A point in the model's parameter space (x, or the hyperparameters y for
// hyperparameter models). Length is the owning model's dimension.
using ModelParameters = Eigen::VectorXd;

// Per-trial random stream. All stochastic steps of a trial draw from one
// engine in a fixed order, so a seed fully determines the trial.
using Rng = std::mt19937_64;

// Controllable setting of a single measurement: the evolution time t.
//
// t = 0 is accepted as the degenerate "no evolution" control; it carries no
// information and is only useful for testing limits. Everything that
// proposes controls (heuristics, optimizers) produces t > 0.
class ExperimentControl {
 public:
  explicit ExperimentControl(double time) : time_(time) {
    if (!std::isfinite(time) || time < 0.0) {
      throw std::invalid_argument("experiment time must be finite and >= 0, got " +
                                  std::to_string(time));
    }
  }

  double time() const { return time_; }

  friend bool operator==(const ExperimentControl&, const ExperimentControl&) = default;

 private:
  double time_;
};

// Measurement outcome d in {0, ..., n_outcomes - 1}.
struct Outcome {
  unsigned value = 0;
  friend bool operator==(const Outcome&, const Outcome&) = default;
};

// One uniform variate in [0, 1) built from exactly one engine call.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// SplitMix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Seed of substream `index` derived from `seed`. Distinct (seed, index) pairs
// give statistically independent streams, with no coordination between the
// threads that use them.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return mix64(mix64(seed) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

}  // namespace smcdesign

#endif  // SMCDESIGN_TYPES_HPP_
