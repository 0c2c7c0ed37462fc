#include "stagecf/interaction_store.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include "stagecf/errors.hpp"
#include "stagecf/random.hpp"

namespace stagecf {

InteractionMatrix::InteractionMatrix(std::size_t n_users, std::size_t n_items,
                                     std::vector<std::vector<ItemId>> rows)
    : n_users_(n_users), n_items_(n_items) {
  if (rows.size() > n_users) {
    throw std::invalid_argument("more rows than users");
  }
  rows.resize(n_users);
  offsets_.reserve(n_users + 1);
  for (std::size_t u = 0; u < n_users; ++u) {
    auto& r = rows[u];
    std::sort(r.begin(), r.end());
    r.erase(std::unique(r.begin(), r.end()), r.end());
    if (!r.empty() && r.back() >= n_items) {
      throw BoundsError("item id " + std::to_string(r.back()) + " >= n_items " +
                        std::to_string(n_items));
    }
    columns_.insert(columns_.end(), r.begin(), r.end());
    offsets_.push_back(columns_.size());
  }
}

std::span<const ItemId> InteractionMatrix::row(UserId u) const {
  if (u >= n_users_) {
    throw BoundsError("user id " + std::to_string(u) + " out of range");
  }
  return {columns_.data() + offsets_[u], offsets_[u + 1] - offsets_[u]};
}

bool InteractionMatrix::contains(UserId u, ItemId i) const {
  const auto r = row(u);
  return std::binary_search(r.begin(), r.end(), i);
}

std::vector<std::size_t> InteractionMatrix::item_degrees() const {
  std::vector<std::size_t> deg(n_items_, 0);
  for (const ItemId i : columns_) ++deg[i];
  return deg;
}

std::vector<std::uint8_t> InteractionMatrix::indicator(UserId u) const {
  std::vector<std::uint8_t> out(n_items_, 0);
  for (const ItemId i : row(u)) out[i] = 1;
  return out;
}

InteractionMatrix read_interactions(std::istream& in, std::optional<std::size_t> n_users,
                                    std::optional<std::size_t> n_items) {
  std::vector<std::vector<ItemId>> rows;
  std::size_t max_user = 0;
  std::size_t max_item = 0;
  bool any_user = false;
  bool any_item = false;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const char* p = line.data();
    const char* end = p + line.size();
    bool first = true;
    std::size_t user = 0;
    while (true) {
      while (p < end && std::isspace(static_cast<unsigned char>(*p))) ++p;
      if (p == end) break;
      std::uint64_t value = 0;
      const auto [next, ec] = std::from_chars(p, end, value);
      if (ec != std::errc{} || (next < end && !std::isspace(static_cast<unsigned char>(*next)))) {
        const char* tok_end = p;
        while (tok_end < end && !std::isspace(static_cast<unsigned char>(*tok_end))) ++tok_end;
        throw ParseError(line_no, "malformed token '" + std::string(p, tok_end) + "'");
      }
      p = next;
      if (value > std::numeric_limits<ItemId>::max()) {
        throw ParseError(line_no, "id " + std::to_string(value) + " too large");
      }
      if (first) {
        user = static_cast<std::size_t>(value);
        if (n_users && user >= *n_users) {
          throw BoundsError("line " + std::to_string(line_no) + ": user id " +
                            std::to_string(user) + " >= n_users " + std::to_string(*n_users));
        }
        if (rows.size() <= user) rows.resize(user + 1);
        max_user = std::max(max_user, user);
        any_user = true;
        first = false;
      } else {
        const auto item = static_cast<std::size_t>(value);
        if (n_items && item >= *n_items) {
          throw BoundsError("line " + std::to_string(line_no) + ": item id " +
                            std::to_string(item) + " >= n_items " + std::to_string(*n_items));
        }
        rows[user].push_back(static_cast<ItemId>(item));
        max_item = std::max(max_item, item);
        any_item = true;
      }
    }
  }
  if (!any_item) {
    throw std::invalid_argument("no interactions");
  }
  const std::size_t users = n_users.value_or(any_user ? max_user + 1 : 0);
  const std::size_t items = n_items.value_or(max_item + 1);
  return InteractionMatrix(users, items, std::move(rows));
}

InteractionMatrix load_interactions(const std::filesystem::path& path,
                                    std::optional<std::size_t> n_users,
                                    std::optional<std::size_t> n_items) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  return read_interactions(in, n_users, n_items);
}

void write_interactions(std::ostream& out, const InteractionMatrix& m) {
  for (UserId u = 0; u < m.n_users(); ++u) {
    out << u;
    for (const ItemId i : m.row(u)) out << ' ' << i;
    out << '\n';
  }
}

NormalizedAdjacency::NormalizedAdjacency(const InteractionMatrix& r)
    : n_users_(r.n_users()), n_items_(r.n_items()) {
  const auto item_deg = r.item_degrees();
  row_offsets_.reserve(n_users_ + 1);
  row_offsets_.push_back(0);
  row_items_.reserve(r.nnz());
  row_values_.reserve(r.nnz());
  for (UserId u = 0; u < n_users_; ++u) {
    const auto items = r.row(u);
    const double du = static_cast<double>(items.size());
    for (const ItemId i : items) {
      row_items_.push_back(i);
      row_values_.push_back(1.0 / std::sqrt(du * static_cast<double>(item_deg[i])));
    }
    row_offsets_.push_back(row_items_.size());
  }

  col_offsets_.assign(n_items_ + 1, 0);
  for (const ItemId i : row_items_) ++col_offsets_[i + 1];
  for (std::size_t i = 0; i < n_items_; ++i) col_offsets_[i + 1] += col_offsets_[i];
  col_users_.resize(row_items_.size());
  col_values_.resize(row_items_.size());
  auto cursor = col_offsets_;
  for (UserId u = 0; u < n_users_; ++u) {
    for (std::size_t k = row_offsets_[u]; k < row_offsets_[u + 1]; ++k) {
      const std::size_t slot = cursor[row_items_[k]]++;
      col_users_[slot] = u;
      col_values_[slot] = row_values_[k];
    }
  }
}

double NormalizedAdjacency::value(UserId u, ItemId i) const {
  const auto items = row_items(u);
  const auto it = std::lower_bound(items.begin(), items.end(), i);
  if (it == items.end() || *it != i) return 0.0;
  return row_values(u)[static_cast<std::size_t>(it - items.begin())];
}

std::span<const ItemId> NormalizedAdjacency::row_items(UserId u) const {
  if (u >= n_users_) throw BoundsError("user id " + std::to_string(u) + " out of range");
  return {row_items_.data() + row_offsets_[u], row_offsets_[u + 1] - row_offsets_[u]};
}

std::span<const double> NormalizedAdjacency::row_values(UserId u) const {
  if (u >= n_users_) throw BoundsError("user id " + std::to_string(u) + " out of range");
  return {row_values_.data() + row_offsets_[u], row_offsets_[u + 1] - row_offsets_[u]};
}

std::vector<double> NormalizedAdjacency::multiply(std::span<const double> v) const {
  if (v.size() != n_items_) throw ContractError("multiply: vector length != n_items");
  std::vector<double> y(n_users_, 0.0);
  for (std::size_t u = 0; u < n_users_; ++u) {
    double acc = 0.0;
    for (std::size_t k = row_offsets_[u]; k < row_offsets_[u + 1]; ++k) {
      acc += row_values_[k] * v[row_items_[k]];
    }
    y[u] = acc;
  }
  return y;
}

std::vector<double> NormalizedAdjacency::multiply_transposed(std::span<const double> w) const {
  if (w.size() != n_users_) throw ContractError("multiply_transposed: vector length != n_users");
  std::vector<double> y(n_items_, 0.0);
  for (std::size_t i = 0; i < n_items_; ++i) {
    double acc = 0.0;
    for (std::size_t k = col_offsets_[i]; k < col_offsets_[i + 1]; ++k) {
      acc += col_values_[k] * w[col_users_[k]];
    }
    y[i] = acc;
  }
  return y;
}

NormalizedAdjacency normalize(const InteractionMatrix& r) { return NormalizedAdjacency(r); }

std::vector<double> gram_matvec(const NormalizedAdjacency& a, std::span<const double> v) {
  if (v.size() != a.n_items()) {
    throw ContractError("gram_matvec: expected " + std::to_string(a.n_items()) +
                        " entries, got " + std::to_string(v.size()));
  }
  const auto user_side = a.multiply(v);
  return a.multiply_transposed(user_side);
}

DecayCoefficients decay_coefficients(const NormalizedAdjacency& a, UserId u, double gamma) {
  if (!(gamma >= 0.0)) throw DomainError("gamma must be >= 0");
  if (u >= a.n_users()) throw BoundsError("unknown user id " + std::to_string(u));
  DecayCoefficients out{u, std::vector<double>(a.n_items(), 0.0)};
  if (gamma == 0.0 || a.row_items(u).empty()) return out;

  std::vector<double> indicator(a.n_items(), 0.0);
  for (const ItemId i : a.row_items(u)) indicator[i] = 1.0;
  out.coeffs = gram_matvec(a, indicator);
  for (double& c : out.coeffs) c *= gamma;
  return out;
}

DecayCache::DecayCache(const NormalizedAdjacency& a, double gamma, std::size_t cap_bytes)
    : adjacency_(&a), gamma_(gamma) {
  if (!(gamma >= 0.0)) throw DomainError("gamma must be >= 0");
  const long double need = static_cast<long double>(a.n_users()) *
                           static_cast<long double>(a.n_items()) * sizeof(double);
  caching_ = need <= static_cast<long double>(cap_bytes);
  if (caching_) cache_.resize(a.n_users());
}

std::span<const double> DecayCache::get(UserId u) const {
  if (u >= adjacency_->n_users()) throw BoundsError("unknown user id " + std::to_string(u));
  if (!caching_) {
    scratch_ = decay_coefficients(*adjacency_, u, gamma_).coeffs;
    return scratch_;
  }
  auto& slot = cache_[u];
  if (!slot) slot = decay_coefficients(*adjacency_, u, gamma_).coeffs;
  return *slot;
}

void DecayCache::warm() const {
  if (!caching_) return;
  for (UserId u = 0; u < adjacency_->n_users(); ++u) get(u);
}

std::pair<InteractionMatrix, InteractionMatrix> split_validation(const InteractionMatrix& r,
                                                                 double fraction,
                                                                 std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw DomainError("split fraction must lie in (0, 1)");
  }
  std::vector<std::vector<ItemId>> train(r.n_users());
  std::vector<std::vector<ItemId>> valid(r.n_users());
  for (UserId u = 0; u < r.n_users(); ++u) {
    const auto items = r.row(u);
    std::vector<ItemId> shuffled(items.begin(), items.end());
    const auto held = static_cast<std::size_t>(
        std::floor(fraction * static_cast<double>(shuffled.size())));
    if (held > 0) {
      auto rng = derive_stream(seed, StreamTag::split, u);
      // Fisher-Yates on the first `held` slots.
      for (std::size_t k = 0; k < held; ++k) {
        const std::size_t span = shuffled.size() - k;
        const auto pick = k + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(span));
        std::swap(shuffled[k], shuffled[std::min(pick, shuffled.size() - 1)]);
      }
    }
    valid[u].assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(held));
    train[u].assign(shuffled.begin() + static_cast<std::ptrdiff_t>(held), shuffled.end());
  }
  return {InteractionMatrix(r.n_users(), r.n_items(), std::move(train)),
          InteractionMatrix(r.n_users(), r.n_items(), std::move(valid))};
}

}  // namespace stagecf
