#pragma once

// Dense reference implementations written directly from the definitions,
// sharing no code with the library paths they check.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "stagecf/interaction_store.hpp"

namespace oracle {

inline Eigen::MatrixXd dense_indicator(const stagecf::InteractionMatrix& r) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(r.n_users(), r.n_items());
  for (stagecf::UserId u = 0; u < r.n_users(); ++u) {
    for (auto i : r.row(u)) m(u, i) = 1.0;
  }
  return m;
}

inline Eigen::MatrixXd dense_normalized(const stagecf::InteractionMatrix& r) {
  Eigen::MatrixXd m = dense_indicator(r);
  const Eigen::VectorXd du = m.rowwise().sum();
  const Eigen::VectorXd di = m.colwise().sum().transpose();
  for (Eigen::Index u = 0; u < m.rows(); ++u) {
    for (Eigen::Index i = 0; i < m.cols(); ++i) {
      if (m(u, i) != 0.0) m(u, i) = 1.0 / std::sqrt(du(u) * di(i));
    }
  }
  return m;
}

/// Gamma * (A^T A) r_u from an explicitly materialized Gram matrix.
inline Eigen::VectorXd dense_coeffs(const stagecf::InteractionMatrix& r, stagecf::UserId u,
                                    double gamma) {
  const Eigen::MatrixXd a = dense_normalized(r);
  const Eigen::MatrixXd gram = a.transpose() * a;
  return gamma * gram * dense_indicator(r).row(u).transpose();
}

/// Binomial pmf by repeated multiplication; only for small n.
inline double binom_pmf(int n, double p, int k) {
  if (k < 0 || k > n) return 0.0;
  double c = 1.0;
  for (int j = 1; j <= k; ++j) c = c * (n - k + j) / j;
  return c * std::pow(p, k) * std::pow(1.0 - p, n - k);
}

inline stagecf::InteractionMatrix random_matrix(std::size_t users, std::size_t items, double density,
                                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(density);
  std::vector<std::vector<stagecf::ItemId>> rows(users);
  for (std::size_t u = 0; u < users; ++u) {
    for (std::size_t i = 0; i < items; ++i) {
      if (coin(rng)) rows[u].push_back(static_cast<stagecf::ItemId>(i));
    }
    if (rows[u].empty()) rows[u].push_back(static_cast<stagecf::ItemId>(u % items));
  }
  return stagecf::InteractionMatrix(users, items, std::move(rows));
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name) {
    path_ = std::filesystem::temp_directory_path() / ("stagecf_test_" + name);
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

  std::filesystem::path write(const std::string& leaf, const std::string& text) const {
    const auto p = path_ / leaf;
    std::filesystem::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << text;
    return p;
  }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace oracle
