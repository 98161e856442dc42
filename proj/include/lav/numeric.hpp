#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lav/errors.hpp"

namespace lav {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

/// Below this smoothing strength softmin degenerates to the hard minimum.
inline constexpr double kHardMinGamma = 1e-8;

namespace detail {

template <typename Derived>
void check_softmin_args(const Eigen::DenseBase<Derived>& values, typename Derived::Scalar gamma) {
  if (values.size() == 0) throw ContractError("softmin: empty value list");
  if (!(gamma > 0)) throw ParameterError("softmin: gamma must be > 0");
}

}  // namespace detail

/// Smoothed minimum -gamma * log(sum(exp(-a_i / gamma))), evaluated with a max-shift.
template <typename Derived>
typename Derived::Scalar softmin(const Eigen::DenseBase<Derived>& values, typename Derived::Scalar gamma) {
  using Scalar = typename Derived::Scalar;
  detail::check_softmin_args(values, gamma);
  const Scalar lo = values.minCoeff();
  if (values.size() == 1 || gamma <= Scalar(kHardMinGamma)) return lo;
  Scalar acc(0);
  for (Index i = 0; i < values.size(); ++i) acc += std::exp(-(values(i) - lo) / gamma);
  return lo - gamma * std::log(acc);
}

template <typename Scalar>
Scalar softmin(const std::vector<Scalar>& values, Scalar gamma) {
  return softmin(Eigen::Map<const VectorX<Scalar>>(values.data(), static_cast<Index>(values.size())), gamma);
}

/// Gradient of softmin with respect to its arguments (a softmax of -a / gamma).
template <typename Derived>
VectorX<typename Derived::Scalar> softmin_weights(const Eigen::DenseBase<Derived>& values,
                                                  typename Derived::Scalar gamma) {
  using Scalar = typename Derived::Scalar;
  detail::check_softmin_args(values, gamma);
  VectorX<Scalar> w = VectorX<Scalar>::Zero(values.size());
  Index argmin = 0;
  const Scalar lo = values.minCoeff(&argmin);
  if (gamma <= Scalar(kHardMinGamma)) {
    w(argmin) = Scalar(1);
    return w;
  }
  for (Index i = 0; i < values.size(); ++i) w(i) = std::exp(-(values(i) - lo) / gamma);
  return w / w.sum();
}

template <typename Scalar>
std::vector<Scalar> softmin_weights(const std::vector<Scalar>& values, Scalar gamma) {
  const VectorX<Scalar> w =
      softmin_weights(Eigen::Map<const VectorX<Scalar>>(values.data(), static_cast<Index>(values.size())), gamma);
  return {w.data(), w.data() + w.size()};
}

/// D(i, j) = ||a_i - b_j||^2 for row sequences a (n x d) and b (m x d).
template <typename DerivedA, typename DerivedB>
MatrixX<typename DerivedA::Scalar> pairwise_sq_dist(const Eigen::MatrixBase<DerivedA>& a,
                                                    const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.cols() != b.cols()) throw ContractError("pairwise_sq_dist: embedding dimensions differ");
  MatrixX<Scalar> d(a.rows(), b.rows());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.rows(); ++j) d(i, j) = (a.row(i) - b.row(j)).squaredNorm();
  return d;
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.derived().array().isFinite().all();
}

/// Seeded pseudo-random stream.
///
/// The engine is mt19937_64, whose output sequence is fixed by the C++
/// standard. The standard distributions are implementation-defined, so the
/// conversions to uniform/normal/integer draws are done here explicitly to
/// keep every stream bit-identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi], unbiased by rejection.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) throw ParameterError("Rng::uniform_int: empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(engine_());
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % span;
    std::uint64_t r = engine_();
    while (r >= limit) r = engine_();
    return lo + static_cast<std::int64_t>(r % span);
  }

  /// Standard normal draw (Box-Muller, one value per call).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::string state() const {
    std::ostringstream os;
    os << seed_ << ' ' << engine_;
    return os.str();
  }
  void set_state(const std::string& s) {
    std::istringstream is(s);
    is >> seed_ >> engine_;
    if (!is) throw ParameterError("Rng::set_state: malformed state");
  }

  friend bool operator==(const Rng& a, const Rng& b) { return a.seed_ == b.seed_ && a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

}  // namespace lav
