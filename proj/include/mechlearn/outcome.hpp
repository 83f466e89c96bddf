#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "mechlearn/errors.hpp"

namespace mechlearn {

enum class OutcomeKind { multi_item, single_parameter, custom };

inline const char* to_string(OutcomeKind k) {
  switch (k) {
    case OutcomeKind::multi_item: return "multi_item";
    case OutcomeKind::single_parameter: return "single_parameter";
    case OutcomeKind::custom: return "custom";
  }
  return "?";
}

/// A finite, explicitly enumerated outcome set. Every outcome carries an
/// n x columns allocation matrix with entries in [0, 1]; for multi-item
/// spaces the columns are items, for single-parameter spaces there is one.
class OutcomeSpace {
 public:
  static constexpr std::size_t kMaxOutcomes = 1'000'000;

  OutcomeSpace(OutcomeKind kind, int n, int columns, std::vector<std::vector<double>> allocations)
      : kind_(kind), n_(n), columns_(columns), alloc_(std::move(allocations)) {
    if (n < 1 || columns < 1) throw UsageError("outcome space needs n >= 1 and at least one column");
    if (alloc_.empty()) throw UsageError("outcome space must be nonempty");
    if (alloc_.size() > kMaxOutcomes) {
      throw CapacityError("outcome space has " + std::to_string(alloc_.size()) + " outcomes, above the budget");
    }
    const auto width = static_cast<std::size_t>(n * columns);
    for (std::size_t o = 0; o < alloc_.size(); ++o) {
      if (alloc_[o].size() != width) {
        throw UsageError("outcome " + std::to_string(o) + " has an allocation of the wrong size");
      }
      for (double x : alloc_[o]) {
        if (!(x >= 0.0 && x <= 1.0)) throw UsageError("outcome " + std::to_string(o) + " has an entry outside [0,1]");
      }
    }
    hash_ = compute_hash();
  }

  OutcomeKind kind() const { return kind_; }
  int bidders() const { return n_; }
  int columns() const { return columns_; }
  std::size_t size() const { return alloc_.size(); }

  double allocation(std::size_t o, int i, int c) const {
    return alloc_[o][static_cast<std::size_t>(i * columns_ + c)];
  }
  const std::vector<double>& allocation_row(std::size_t o) const { return alloc_[o]; }

  /// FNV-1a over kind, shape and allocations; stored in mechanism files.
  std::uint64_t hash() const { return hash_; }

  bool operator==(const OutcomeSpace& o) const {
    return kind_ == o.kind_ && n_ == o.n_ && columns_ == o.columns_ && alloc_ == o.alloc_;
  }

 private:
  std::uint64_t compute_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* data, std::size_t len) {
      const auto* p = static_cast<const unsigned char*>(data);
      for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
      }
    };
    const int header[3] = {static_cast<int>(kind_), n_, columns_};
    mix(header, sizeof(header));
    for (const auto& row : alloc_) {
      for (double x : row) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, &x, sizeof(bits));
        mix(&bits, sizeof(bits));
      }
    }
    return h;
  }

  OutcomeKind kind_;
  int n_;
  int columns_;
  std::vector<std::vector<double>> alloc_;
  std::uint64_t hash_ = 0;
};

/// Every assignment of each item to one bidder or to nobody: (n+1)^m
/// outcomes in mixed radix with item 0 least significant, digit 0 meaning
/// unassigned and digit i+1 meaning bidder i. Outcome 0 allocates nothing.
inline OutcomeSpace enumerate_multi_item(int n, int m) {
  if (n < 1 || m < 1) throw UsageError("multi-item space needs n >= 1 and m >= 1");
  std::size_t count = 1;
  for (int j = 0; j < m; ++j) {
    count *= static_cast<std::size_t>(n + 1);
    if (count > OutcomeSpace::kMaxOutcomes) {
      throw CapacityError("multi-item space with n=" + std::to_string(n) + ", m=" + std::to_string(m) +
                          " exceeds the outcome budget of " + std::to_string(OutcomeSpace::kMaxOutcomes));
    }
  }
  std::vector<std::vector<double>> alloc(count, std::vector<double>(static_cast<std::size_t>(n * m), 0.0));
  for (std::size_t o = 0; o < count; ++o) {
    std::size_t code = o;
    for (int j = 0; j < m; ++j) {
      auto owner = static_cast<int>(code % static_cast<std::size_t>(n + 1));
      code /= static_cast<std::size_t>(n + 1);
      if (owner > 0) alloc[o][static_cast<std::size_t>((owner - 1) * m + j)] = 1.0;
    }
  }
  return OutcomeSpace(OutcomeKind::multi_item, n, m, std::move(alloc));
}

/// Outcome index of a multi-item assignment (owner[j] = 0 unassigned, i+1 bidder i).
inline std::size_t multi_item_index(int n, const std::vector<int>& owner) {
  std::size_t idx = 0;
  for (std::size_t j = owner.size(); j-- > 0;) idx = idx * static_cast<std::size_t>(n + 1) + static_cast<std::size_t>(owner[j]);
  return idx;
}

/// A single-parameter space from explicit allocation vectors x in [0,1]^n.
inline OutcomeSpace single_parameter_space(int n, std::vector<std::vector<double>> allocations) {
  return OutcomeSpace(OutcomeKind::single_parameter, n, 1, std::move(allocations));
}

/// One item: nobody wins (outcome 0) or bidder i wins (outcome i+1).
inline OutcomeSpace single_item_space(int n) {
  std::vector<std::vector<double>> alloc(static_cast<std::size_t>(n + 1), std::vector<double>(static_cast<std::size_t>(n), 0.0));
  for (int i = 0; i < n; ++i) alloc[static_cast<std::size_t>(i + 1)][static_cast<std::size_t>(i)] = 1.0;
  return single_parameter_space(n, std::move(alloc));
}

}  // namespace mechlearn
