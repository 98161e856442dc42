// Reference implementations used only by the tests. Each is written from the
// defining formula, with no code shared with the library.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <unistd.h>

#include "lav/numeric.hpp"

namespace lav::testing {

inline Matrix random_matrix(Rng& rng, Index rows, Index cols, double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

/// max|a - n| / max(max|a|, max|n|, tiny)
inline double rel_error(const Matrix& analytic, const Matrix& numeric) {
  const double scale = std::max({analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), 1e-12});
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

/// Central differences of a scalar function of a matrix argument.
inline Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, const Matrix& at, double eps = 1e-6) {
  Matrix g(at.rows(), at.cols());
  Matrix probe = at;
  for (Index i = 0; i < at.rows(); ++i)
    for (Index j = 0; j < at.cols(); ++j) {
      probe(i, j) = at(i, j) + eps;
      const double up = f(probe);
      probe(i, j) = at(i, j) - eps;
      const double down = f(probe);
      probe(i, j) = at(i, j);
      g(i, j) = (up - down) / (2 * eps);
    }
  return g;
}

/// -gamma * log(sum exp(-a / gamma)) in long double without any shift.
inline double softmin_direct(const std::vector<double>& a, double gamma) {
  long double s = 0;
  for (double v : a) s += std::exp(-static_cast<long double>(v) / gamma);
  return static_cast<double>(-gamma * std::log(s));
}

inline Matrix naive_sq_dist(const Matrix& a, const Matrix& b) {
  Matrix d(a.rows(), b.rows());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.rows(); ++j) {
      double s = 0;
      for (Index c = 0; c < a.cols(); ++c) s += (a(i, c) - b(j, c)) * (a(i, c) - b(j, c));
      d(i, j) = s;
    }
  return d;
}

/// Every monotone path from (0, 0) to (n-1, m-1), as cell lists.
inline std::vector<std::vector<std::pair<Index, Index>>> all_paths(Index n, Index m) {
  std::vector<std::vector<std::pair<Index, Index>>> done;
  std::vector<std::vector<std::pair<Index, Index>>> open{{{0, 0}}};
  while (!open.empty()) {
    auto p = std::move(open.back());
    open.pop_back();
    const auto [i, j] = p.back();
    if (i == n - 1 && j == m - 1) {
      done.push_back(std::move(p));
      continue;
    }
    const std::pair<Index, Index> moves[] = {{1, 1}, {1, 0}, {0, 1}};
    for (auto [di, dj] : moves) {
      if (i + di >= n || j + dj >= m) continue;
      auto q = p;
      q.emplace_back(i + di, j + dj);
      open.push_back(std::move(q));
    }
  }
  return done;
}

/// Soft-DTW as softmin over all paths of the path costs (tiny sizes only).
inline double soft_dtw_by_paths(const Matrix& d, double gamma) {
  std::vector<double> costs;
  for (const auto& p : all_paths(d.rows(), d.cols())) {
    double c = 0;
    for (auto [i, j] : p) c += d(i, j);
    costs.push_back(c);
  }
  return softmin_direct(costs, gamma);
}

inline double dtw_by_paths(const Matrix& d) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : all_paths(d.rows(), d.cols())) {
    double c = 0;
    for (auto [i, j] : p) c += d(i, j);
    best = std::min(best, c);
  }
  return best;
}

/// Contrastive-IDM straight from the double sum, positive and negative
/// branches written out separately.
inline double naive_cidm(const Matrix& x, Index sigma, double lambda, bool weighted,
                         const std::vector<Index>& times = {}) {
  const Index n = x.rows();
  auto t = [&](Index i) { return times.empty() ? i : times[static_cast<std::size_t>(i)]; };
  double total = 0;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      const double dist = (x.row(i) - x.row(j)).squaredNorm();
      const double gap = static_cast<double>(t(i) - t(j));
      if (std::abs(t(i) - t(j)) > sigma) {
        const double w = weighted ? gap * gap + 1.0 : 1.0;
        total += w * std::max(0.0, lambda - dist);
      } else {
        const double w = weighted ? 1.0 / (gap * gap + 1.0) : 1.0;
        total += w * dist;
      }
    }
  return total;
}

inline double naive_idm(const Matrix& x) {
  double total = 0;
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.rows(); ++j) {
      const double gap = static_cast<double>(i - j);
      total += (gap * gap + 1.0) * -(x.row(i) - x.row(j)).squaredNorm();
    }
  return total;
}

/// Kendall tau-a of nearest-neighbour indices, via explicit pair listing.
inline double naive_kendall(const Matrix& u, const Matrix& v) {
  std::vector<Index> nn;
  for (Index i = 0; i < u.rows(); ++i) {
    Index best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < v.rows(); ++j) {
      const double dd = (u.row(i) - v.row(j)).squaredNorm();
      if (dd < bd) {
        bd = dd;
        best = j;
      }
    }
    nn.push_back(best);
  }
  int concordant = 0, discordant = 0, pairs = 0;
  for (std::size_t i = 0; i < nn.size(); ++i)
    for (std::size_t j = i + 1; j < nn.size(); ++j) {
      ++pairs;
      if (nn[j] > nn[i]) ++concordant;
      if (nn[j] < nn[i]) ++discordant;
    }
  return static_cast<double>(concordant - discordant) / pairs;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("lav_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

}  // namespace lav::testing
