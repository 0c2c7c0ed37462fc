#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace stagecf {

using UserId = std::uint32_t;
using ItemId = std::uint32_t;

/// Binary implicit-feedback matrix stored row-compressed. Rows are strictly
/// sorted item lists; the matrix is immutable after construction.
class InteractionMatrix {
 public:
  InteractionMatrix() = default;

  /// Sorts and deduplicates each row. Throws BoundsError for item ids
  /// >= n_items and std::invalid_argument if there are more rows than users.
  InteractionMatrix(std::size_t n_users, std::size_t n_items,
                    std::vector<std::vector<ItemId>> rows);

  std::size_t n_users() const noexcept { return n_users_; }
  std::size_t n_items() const noexcept { return n_items_; }
  std::size_t nnz() const noexcept { return columns_.size(); }

  std::span<const ItemId> row(UserId u) const;
  std::size_t user_degree(UserId u) const { return row(u).size(); }
  bool contains(UserId u, ItemId i) const;

  /// Interaction count per item.
  std::vector<std::size_t> item_degrees() const;

  /// Dense 0/1 indicator of user u's row.
  std::vector<std::uint8_t> indicator(UserId u) const;

  friend bool operator==(const InteractionMatrix&, const InteractionMatrix&) = default;

 private:
  std::size_t n_users_ = 0;
  std::size_t n_items_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<ItemId> columns_;
};

/// Reads the whitespace-separated "user item item ..." text format. Dimensions
/// default to (max id + 1). Throws ParseError (with line number) for malformed
/// tokens, BoundsError for ids past a declared dimension, and
/// std::invalid_argument("no interactions") when nothing was read.
InteractionMatrix read_interactions(std::istream& in, std::optional<std::size_t> n_users = {},
                                    std::optional<std::size_t> n_items = {});
InteractionMatrix load_interactions(const std::filesystem::path& path,
                                    std::optional<std::size_t> n_users = {},
                                    std::optional<std::size_t> n_items = {});

/// Writes one line per user ("u i1 i2 ..."), users without items included.
void write_interactions(std::ostream& out, const InteractionMatrix& m);

/// Degree-normalized adjacency D_U^{-1/2} R D_I^{-1/2} with a column-compressed
/// mirror for transpose products.
class NormalizedAdjacency {
 public:
  explicit NormalizedAdjacency(const InteractionMatrix& r);

  std::size_t n_users() const noexcept { return n_users_; }
  std::size_t n_items() const noexcept { return n_items_; }

  /// Value at (u, i), 0 off the pattern.
  double value(UserId u, ItemId i) const;

  /// y = A v, v indexed by item, y by user.
  std::vector<double> multiply(std::span<const double> v) const;
  /// y = A^T w, w indexed by user, y by item.
  std::vector<double> multiply_transposed(std::span<const double> w) const;

  /// Row u's pattern and values.
  std::span<const ItemId> row_items(UserId u) const;
  std::span<const double> row_values(UserId u) const;

 private:
  std::size_t n_users_;
  std::size_t n_items_;
  std::vector<std::size_t> row_offsets_;
  std::vector<ItemId> row_items_;
  std::vector<double> row_values_;
  std::vector<std::size_t> col_offsets_;
  std::vector<UserId> col_users_;
  std::vector<double> col_values_;
};

NormalizedAdjacency normalize(const InteractionMatrix& r);

/// A^T (A v) via two sparse products; the item-item Gram matrix is never formed.
std::vector<double> gram_matvec(const NormalizedAdjacency& a, std::span<const double> v);

struct DecayCoefficients {
  UserId user = 0;
  std::vector<double> coeffs;
};

/// gamma * A^T A r_u where r_u is user u's 0/1 row.
DecayCoefficients decay_coefficients(const NormalizedAdjacency& a, UserId u, double gamma);

/// Lazily memoized decay coefficients. Entries are kept only while the total
/// footprint stays under the byte cap; beyond it they are recomputed on demand.
/// Not safe for concurrent first access; call warm() before sharing across
/// threads.
class DecayCache {
 public:
  static constexpr std::size_t kDefaultCapBytes = std::size_t{4} << 30;

  DecayCache(const NormalizedAdjacency& a, double gamma,
             std::size_t cap_bytes = kDefaultCapBytes);
  // The adjacency is held by pointer and must outlive the cache.
  DecayCache(NormalizedAdjacency&&, double, std::size_t = kDefaultCapBytes) = delete;

  double gamma() const noexcept { return gamma_; }
  bool caching() const noexcept { return caching_; }

  std::span<const double> get(UserId u) const;
  void warm() const;

 private:
  const NormalizedAdjacency* adjacency_;
  double gamma_;
  bool caching_;
  mutable std::vector<std::optional<std::vector<double>>> cache_;
  mutable std::vector<double> scratch_;
};

/// Per-user random holdout of floor(fraction * deg(u)) items. Deterministic in
/// seed; the two outputs partition the input.
std::pair<InteractionMatrix, InteractionMatrix> split_validation(const InteractionMatrix& r,
                                                                 double fraction,
                                                                 std::uint64_t seed);

}  // namespace stagecf
