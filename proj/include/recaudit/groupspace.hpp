#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "recaudit/catalog.hpp"
#include "recaudit/errors.hpp"
#include "recaudit/rng.hpp"

namespace recaudit {

/// A full assignment over the selected attributes; ordering is lexicographic
/// so enumeration, tie-breaking, and memo keys are all stable.
struct GroupKey {
  std::vector<std::int32_t> values;

  auto operator<=>(const GroupKey&) const = default;
  bool operator==(const GroupKey&) const = default;
};

struct GroupKeyHash {
  std::size_t operator()(const GroupKey& k) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::int32_t v : k.values) {
      h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(v));
      h *= 0x100000001b3ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

struct SizeFilter {
  double min_fraction = 1e-5;

  std::size_t min_count(std::size_t n_users) const {
    const double c = std::ceil(min_fraction * static_cast<double>(n_users));
    return std::max<std::size_t>(1, static_cast<std::size_t>(c));
  }
};

struct GroupIndex {
  std::vector<std::size_t> selected;       // attribute indices into the schema, in schema order
  std::vector<std::string> attr_names;
  std::vector<std::int32_t> boundary;      // values per selected attribute
  std::vector<std::vector<double>> dist;   // empirical value frequencies per attribute
  std::vector<std::vector<double>> cdf;    // running sums of dist, last entry 1.0
  std::unordered_map<GroupKey, std::vector<std::uint32_t>, GroupKeyHash> members;
  std::size_t n_users = 0;

  std::size_t n_dims() const { return boundary.size(); }

  std::uint64_t space_size() const {
    std::uint64_t p = 1;
    for (std::int32_t b : boundary) p *= static_cast<std::uint64_t>(b);
    return p;
  }

  std::size_t n_nonempty() const { return members.size(); }

  GroupKey key_of(const UserRecord& u) const {
    GroupKey k;
    k.values.reserve(selected.size());
    for (std::size_t d : selected) k.values.push_back(u.sensitive[d]);
    return k;
  }

  const std::vector<std::uint32_t>* find(const GroupKey& k) const {
    auto it = members.find(k);
    return it == members.end() ? nullptr : &it->second;
  }

  std::size_t group_size(const GroupKey& k) const {
    const auto* m = find(k);
    return m ? m->size() : 0;
  }

  bool in_boundary(const GroupKey& k) const {
    if (k.values.size() != boundary.size()) return false;
    for (std::size_t d = 0; d < boundary.size(); ++d)
      if (k.values[d] < 0 || k.values[d] >= boundary[d]) return false;
    return true;
  }
};

inline GroupIndex build_index(const Dataset& ds, const std::vector<std::string>& attributes) {
  if (attributes.empty()) throw ConfigError("no attributes selected for grouping");
  std::unordered_set<std::string> wanted(attributes.begin(), attributes.end());
  if (wanted.size() != attributes.size())
    throw ConfigError("duplicate attribute in grouping selection");

  GroupIndex idx;
  for (std::size_t d = 0; d < ds.schema.attributes.size(); ++d) {
    const auto& a = ds.schema.attributes[d];
    if (wanted.erase(a.name)) {
      idx.selected.push_back(d);
      idx.attr_names.push_back(a.name);
      idx.boundary.push_back(static_cast<std::int32_t>(a.values.size()));
    }
  }
  if (!wanted.empty())
    throw ConfigError("unknown attribute '" + *wanted.begin() + "' in grouping selection");

  idx.n_users = ds.users.size();
  std::vector<std::vector<std::size_t>> counts(idx.n_dims());
  for (std::size_t d = 0; d < idx.n_dims(); ++d)
    counts[d].assign(static_cast<std::size_t>(idx.boundary[d]), 0);

  for (std::size_t i = 0; i < ds.users.size(); ++i) {
    const auto& u = ds.users[i];
    GroupKey k = idx.key_of(u);
    idx.members[k].push_back(static_cast<std::uint32_t>(i));
    for (std::size_t d = 0; d < idx.n_dims(); ++d)
      ++counts[d][static_cast<std::size_t>(k.values[d])];
  }

  idx.dist.resize(idx.n_dims());
  idx.cdf.resize(idx.n_dims());
  for (std::size_t d = 0; d < idx.n_dims(); ++d) {
    const auto nv = counts[d].size();
    idx.dist[d].resize(nv);
    idx.cdf[d].resize(nv);
    double acc = 0.0;
    for (std::size_t v = 0; v < nv; ++v) {
      // empty dataset: fall back to uniform so sampling stays well defined
      idx.dist[d][v] = idx.n_users ? static_cast<double>(counts[d][v]) /
                                         static_cast<double>(idx.n_users)
                                   : 1.0 / static_cast<double>(nv);
      acc += idx.dist[d][v];
      idx.cdf[d][v] = acc;
    }
    idx.cdf[d].back() = 1.0;
  }
  return idx;
}

inline GroupIndex build_index_all(const Dataset& ds) {
  std::vector<std::string> names;
  for (const auto& a : ds.schema.attributes) names.push_back(a.name);
  return build_index(ds, names);
}

inline std::vector<GroupKey> enumerate_valid_groups(const GroupIndex& idx,
                                                    const SizeFilter& filter) {
  const std::size_t min_count = filter.min_count(idx.n_users);
  std::vector<GroupKey> keys;
  keys.reserve(idx.members.size());
  for (const auto& [k, members] : idx.members)
    if (members.size() >= min_count) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  return keys;
}

/// Coordinate-wise draw from the empirical per-attribute distribution; the
/// key may land on an empty group.
inline GroupKey sample_key(const GroupIndex& idx, Rng& rng) {
  GroupKey k;
  k.values.reserve(idx.n_dims());
  for (std::size_t d = 0; d < idx.n_dims(); ++d)
    k.values.push_back(static_cast<std::int32_t>(rng.categorical(idx.cdf[d])));
  return k;
}

/// Uniform draw over the boundary, ignoring the empirical distribution.
inline GroupKey uniform_key(const GroupIndex& idx, Rng& rng) {
  GroupKey k;
  k.values.reserve(idx.n_dims());
  for (std::size_t d = 0; d < idx.n_dims(); ++d)
    k.values.push_back(
        static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(idx.boundary[d]))));
  return k;
}

inline std::string key_to_string(const GroupKey& k) {
  std::string s = "(";
  for (std::size_t d = 0; d < k.values.size(); ++d) {
    if (d) s += ",";
    s += std::to_string(k.values[d]);
  }
  s += ")";
  return s;
}

}  // namespace recaudit
