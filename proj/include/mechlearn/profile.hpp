#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mechlearn/errors.hpp"

namespace mechlearn {

/// A set of type profiles that is a Cartesian product of allowed grid
/// indices, one list per (bidder, parameter) coordinate.
///
/// Coordinates are bidder-major (coordinate = bidder * m + parameter).
/// Enumeration is lexicographic with coordinate 0 most significant, so the
/// first entry among equals is always the lexicographically smallest one.
class ProfileDomain {
 public:
  ProfileDomain() = default;

  static ProfileDomain full(int n, int m, int levels) {
    std::vector<std::vector<int>> allowed(static_cast<std::size_t>(n * m));
    for (auto& a : allowed) {
      a.resize(static_cast<std::size_t>(levels));
      for (int g = 0; g < levels; ++g) a[static_cast<std::size_t>(g)] = g;
    }
    return ProfileDomain(n, m, levels, std::move(allowed), true);
  }

  static ProfileDomain product(int n, int m, int levels, std::vector<std::vector<int>> allowed) {
    bool full = true;
    for (const auto& a : allowed) full = full && static_cast<int>(a.size()) == levels;
    return ProfileDomain(n, m, levels, std::move(allowed), full);
  }

  int bidders() const { return n_; }
  int params() const { return m_; }
  int levels() const { return levels_; }
  bool is_full() const { return full_; }
  std::size_t size() const { return size_; }
  std::size_t coordinates() const { return allowed_.size(); }

  const std::vector<int>& allowed(std::size_t coord) const { return allowed_.at(coord); }

  std::size_t type_count(int k) const { return type_count_[static_cast<std::size_t>(k)]; }

  bool empty() const { return size_ == 0; }

  bool allows(std::size_t coord, int grid_index) const {
    if (grid_index < 0 || grid_index >= levels_) return false;
    return position_[coord][static_cast<std::size_t>(grid_index)] >= 0;
  }

  /// Writes bidder k's t-th type (m grid indices) into `out`.
  void type_into(int k, std::size_t t, std::span<int> out) const {
    for (int j = m_ - 1; j >= 0; --j) {
      const auto& a = allowed_[coord(k, j)];
      out[static_cast<std::size_t>(j)] = a[t % a.size()];
      t /= a.size();
    }
  }

  std::vector<int> type_at(int k, std::size_t t) const {
    std::vector<int> out(static_cast<std::size_t>(m_));
    type_into(k, t, out);
    return out;
  }

  std::optional<std::size_t> type_index(int k, std::span<const int> type) const {
    std::size_t idx = 0;
    for (int j = 0; j < m_; ++j) {
      std::size_t c = coord(k, j);
      int g = type[static_cast<std::size_t>(j)];
      if (!allows(c, g)) return std::nullopt;
      idx = idx * allowed_[c].size() + static_cast<std::size_t>(position_[c][static_cast<std::size_t>(g)]);
    }
    return idx;
  }

  /// Profile index from one type index per bidder.
  std::size_t compose(std::span<const std::size_t> type_indices) const {
    std::size_t idx = 0;
    for (int k = 0; k < n_; ++k) idx = idx * type_count(k) + type_indices[static_cast<std::size_t>(k)];
    return idx;
  }

  std::optional<std::size_t> index_of(std::span<const int> profile) const {
    if (profile.size() != allowed_.size()) throw UsageError("profile has wrong length");
    std::size_t idx = 0;
    for (std::size_t c = 0; c < allowed_.size(); ++c) {
      int g = profile[c];
      if (!allows(c, g)) return std::nullopt;
      idx = idx * allowed_[c].size() + static_cast<std::size_t>(position_[c][static_cast<std::size_t>(g)]);
    }
    return idx;
  }

  void profile_into(std::size_t idx, std::span<int> out) const {
    for (std::size_t c = allowed_.size(); c-- > 0;) {
      const auto& a = allowed_[c];
      out[c] = a[idx % a.size()];
      idx /= a.size();
    }
  }

  std::vector<int> profile_at(std::size_t idx) const {
    std::vector<int> out(allowed_.size());
    profile_into(idx, out);
    return out;
  }

  /// Splits a profile index into one type index per bidder.
  void split(std::size_t idx, std::span<std::size_t> type_indices) const {
    for (int k = n_ - 1; k >= 0; --k) {
      type_indices[static_cast<std::size_t>(k)] = idx % type_count(k);
      idx /= type_count(k);
    }
  }

  bool operator==(const ProfileDomain& other) const {
    return n_ == other.n_ && m_ == other.m_ && levels_ == other.levels_ && allowed_ == other.allowed_;
  }

 private:
  ProfileDomain(int n, int m, int levels, std::vector<std::vector<int>> allowed, bool full)
      : n_(n), m_(m), levels_(levels), full_(full), allowed_(std::move(allowed)) {
    if (n < 1 || m < 1) throw UsageError("profile domain needs n >= 1 and m >= 1");
    if (allowed_.size() != static_cast<std::size_t>(n * m)) {
      throw UsageError("profile domain needs one allowed list per (bidder, parameter)");
    }
    position_.resize(allowed_.size());
    for (std::size_t c = 0; c < allowed_.size(); ++c) {
      auto& a = allowed_[c];
      position_[c].assign(static_cast<std::size_t>(levels), -1);
      for (std::size_t p = 0; p < a.size(); ++p) {
        if (a[p] < 0 || a[p] >= levels) throw UsageError("grid index out of range in profile domain");
        if (p > 0 && a[p] <= a[p - 1]) throw UsageError("profile domain lists must be strictly increasing");
        position_[c][static_cast<std::size_t>(a[p])] = static_cast<int>(p);
      }
    }
    type_count_.assign(static_cast<std::size_t>(n), 1);
    size_ = 1;
    constexpr std::size_t kLimit = std::numeric_limits<std::size_t>::max() / 4096;
    for (int k = 0; k < n; ++k) {
      for (int j = 0; j < m; ++j) {
        type_count_[static_cast<std::size_t>(k)] *= allowed_[coord(k, j)].size();
        if (type_count_[static_cast<std::size_t>(k)] > kLimit) throw CapacityError("type space too large");
      }
      if (type_count_[static_cast<std::size_t>(k)] > 0 && size_ > kLimit / type_count_[static_cast<std::size_t>(k)]) {
        throw CapacityError("profile space too large");
      }
      size_ *= type_count_[static_cast<std::size_t>(k)];
    }
  }

  std::size_t coord(int k, int j) const { return static_cast<std::size_t>(k * m_ + j); }

  int n_ = 0;
  int m_ = 0;
  int levels_ = 0;
  bool full_ = false;
  std::vector<std::vector<int>> allowed_;
  std::vector<std::vector<int>> position_;
  std::vector<std::size_t> type_count_;
  std::size_t size_ = 0;
};

}  // namespace mechlearn
