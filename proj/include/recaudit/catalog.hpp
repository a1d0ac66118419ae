#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "recaudit/errors.hpp"

namespace recaudit {

struct Attribute {
  std::string name;
  std::vector<std::string> values;  // code i labels values[i]
  bool operator==(const Attribute&) const = default;
};

struct AttributeSchema {
  std::vector<Attribute> attributes;

  std::size_t n_attributes() const { return attributes.size(); }

  std::uint64_t space_size() const {
    std::uint64_t p = 1;
    for (const auto& a : attributes) p *= static_cast<std::uint64_t>(a.values.size());
    return p;
  }

  void validate() const {
    if (attributes.empty()) throw DataError("schema: no attributes");
    std::unordered_set<std::string> names;
    for (const auto& a : attributes) {
      if (a.name.empty()) throw DataError("schema: empty attribute name");
      if (a.values.empty())
        throw DataError("schema: attribute '" + a.name + "' has no values");
      if (!names.insert(a.name).second)
        throw DataError("schema: duplicate attribute name '" + a.name + "'");
    }
  }

  bool operator==(const AttributeSchema&) const = default;
};

struct ItemRecord {
  std::string id;
  std::vector<std::int32_t> tags;  // interned ids, ascending
  std::int64_t train_interactions = 0;
};

struct Candidate {
  std::int32_t item = -1;  // index into Dataset::items
  double score = 0.0;
  bool relevant = false;
  bool operator==(const Candidate&) const = default;
};

struct UserRecord {
  std::string user_id;
  std::vector<std::int32_t> sensitive;  // one value code per schema attribute
  std::vector<std::int32_t> history;    // item indices
  std::vector<Candidate> candidates;    // score-descending, stable ties
  std::int32_t k = 0;
};

struct Dataset {
  AttributeSchema schema;
  std::vector<UserRecord> users;
  std::vector<ItemRecord> items;
  std::unordered_map<std::string, std::int32_t> item_index;
  std::vector<std::string> tag_vocab;
  std::int64_t total_train_interactions = 0;
  bool explicit_total = false;
  std::vector<std::string> warnings;

  std::int32_t item_idx(const std::string& id) const {
    auto it = item_index.find(id);
    if (it == item_index.end()) throw DataError("unknown item '" + id + "'");
    return it->second;
  }

  double popularity(std::int32_t item) const {
    if (item < 0 || static_cast<std::size_t>(item) >= items.size())
      throw DataError("popularity: item index out of range");
    if (total_train_interactions <= 0)
      throw DataError("popularity: total training interactions is 0");
    return static_cast<double>(items[static_cast<std::size_t>(item)].train_interactions) /
           static_cast<double>(total_train_interactions) * 100.0;
  }

  std::vector<std::string> tag_strings(std::int32_t item) const {
    std::vector<std::string> out;
    for (std::int32_t t : items[static_cast<std::size_t>(item)].tags)
      out.push_back(tag_vocab[static_cast<std::size_t>(t)]);
    return out;
  }
};

inline double item_popularity(const Dataset& ds, const std::string& item_id) {
  return ds.popularity(ds.item_idx(item_id));
}

namespace detail {

inline std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string::npos) {
      parts.push_back(s.substr(start));
      break;
    }
    parts.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return parts;
}

inline std::int64_t parse_i64(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(where + ": not an integer: '" + s + "'");
  }
}

inline std::int32_t intern_tag(Dataset& ds, std::unordered_map<std::string, std::int32_t>& map,
                               const std::string& tag) {
  auto it = map.find(tag);
  if (it != map.end()) return it->second;
  const auto id = static_cast<std::int32_t>(ds.tag_vocab.size());
  ds.tag_vocab.push_back(tag);
  map.emplace(tag, id);
  return id;
}

}  // namespace detail

inline AttributeSchema load_schema(const std::string& schema_path) {
  std::ifstream in(schema_path);
  if (!in) throw DataError("cannot open schema file: " + schema_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw DataError("schema: invalid JSON: " + std::string(e.what()));
  }
  if (!j.is_object() || !j.contains("attributes") || !j["attributes"].is_array())
    throw DataError("schema: expected object with 'attributes' array");
  AttributeSchema schema;
  for (const auto& ja : j["attributes"]) {
    if (!ja.is_object() || !ja.contains("name") || !ja.contains("values") ||
        !ja["values"].is_array())
      throw DataError("schema: each attribute needs 'name' and 'values'");
    Attribute a;
    a.name = ja["name"].get<std::string>();
    for (const auto& v : ja["values"])
      a.values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    schema.attributes.push_back(std::move(a));
  }
  schema.validate();
  return schema;
}

/// Finishes a Dataset whose schema/items/users are populated: sorts candidate
/// lists, checks every record invariant, and derives |T| when not overridden.
inline void validate_dataset(Dataset& ds) {
  ds.schema.validate();
  std::unordered_set<std::string> item_ids;
  for (const auto& it : ds.items) {
    if (it.train_interactions < 0)
      throw DataError("item '" + it.id + "': negative train_interactions");
    if (!item_ids.insert(it.id).second)
      throw DataError("duplicate item_id '" + it.id + "'");
    if (it.tags.empty()) ds.warnings.push_back("item '" + it.id + "' has no tags");
  }
  if (!ds.explicit_total) {
    ds.total_train_interactions = 0;
    for (const auto& it : ds.items) ds.total_train_interactions += it.train_interactions;
  }
  if (ds.total_train_interactions <= 0)
    ds.warnings.push_back("total training interactions is 0; popularity undefined");

  const std::size_t l = ds.schema.n_attributes();
  std::unordered_set<std::string> user_ids;
  for (auto& u : ds.users) {
    const std::string where = "user '" + u.user_id + "'";
    if (!user_ids.insert(u.user_id).second)
      throw DataError("duplicate user_id '" + u.user_id + "'");
    if (u.sensitive.size() != l)
      throw DataError(where + ": sensitive has " + std::to_string(u.sensitive.size()) +
                      " entries, schema has " + std::to_string(l) + " attributes");
    for (std::size_t d = 0; d < l; ++d) {
      const auto nv = static_cast<std::int32_t>(ds.schema.attributes[d].values.size());
      if (u.sensitive[d] < 0 || u.sensitive[d] >= nv)
        throw DataError(where + ": attribute '" + ds.schema.attributes[d].name + "': code " +
                        std::to_string(u.sensitive[d]) + " out of range [0," +
                        std::to_string(nv) + ")");
    }
    if (u.candidates.empty()) throw DataError(where + ": empty candidate list");
    for (const auto& c : u.candidates) {
      if (!std::isfinite(c.score)) throw DataError(where + ": non-finite candidate score");
      if (c.item < 0 || static_cast<std::size_t>(c.item) >= ds.items.size())
        throw DataError(where + ": candidate item index out of range");
    }
    for (std::int32_t h : u.history)
      if (h < 0 || static_cast<std::size_t>(h) >= ds.items.size())
        throw DataError(where + ": history item index out of range");
    if (u.k < 1 || static_cast<std::size_t>(u.k) > u.candidates.size())
      throw DataError(where + ": k=" + std::to_string(u.k) + " outside [1," +
                      std::to_string(u.candidates.size()) + "]");
    std::stable_sort(u.candidates.begin(), u.candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
  }
}

inline Dataset load_dataset(const std::string& users_path, const std::string& items_path,
                            const std::string& schema_path) {
  Dataset ds;
  ds.schema = load_schema(schema_path);

  std::ifstream items_in(items_path);
  if (!items_in) throw DataError("cannot open items file: " + items_path);
  std::unordered_map<std::string, std::int32_t> tag_map;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(items_in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    const std::string where = "items line " + std::to_string(line_no);
    if (line[0] == '#') {
      const std::string prefix = "#total_interactions=";
      if (line.rfind(prefix, 0) == 0) {
        ds.total_train_interactions = detail::parse_i64(line.substr(prefix.size()), where);
        if (ds.total_train_interactions <= 0)
          throw DataError(where + ": total_interactions override must be positive");
        ds.explicit_total = true;
      }
      continue;
    }
    if (!header_seen) {
      if (line != "item_id,tags,train_interactions")
        throw DataError(where + ": expected header 'item_id,tags,train_interactions'");
      header_seen = true;
      continue;
    }
    const auto fields = detail::split(line, ',');
    if (fields.size() != 3)
      throw DataError(where + ": expected 3 fields, got " + std::to_string(fields.size()));
    ItemRecord rec;
    rec.id = fields[0];
    if (rec.id.empty()) throw DataError(where + ": field 'item_id': empty");
    if (!fields[1].empty())
      for (const auto& t : detail::split(fields[1], '|'))
        rec.tags.push_back(detail::intern_tag(ds, tag_map, t));
    std::sort(rec.tags.begin(), rec.tags.end());
    rec.tags.erase(std::unique(rec.tags.begin(), rec.tags.end()), rec.tags.end());
    rec.train_interactions = detail::parse_i64(fields[2], where + ": field 'train_interactions'");
    if (rec.train_interactions < 0)
      throw DataError(where + ": field 'train_interactions': negative");
    if (ds.item_index.count(rec.id)) throw DataError(where + ": duplicate item_id '" + rec.id + "'");
    ds.item_index.emplace(rec.id, static_cast<std::int32_t>(ds.items.size()));
    ds.items.push_back(std::move(rec));
  }
  if (!header_seen) throw DataError("items file has no header row: " + items_path);

  std::ifstream users_in(users_path);
  if (!users_in) throw DataError("cannot open users file: " + users_path);
  line_no = 0;
  while (std::getline(users_in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    const std::string where = "users line " + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      throw DataError(where + ": invalid JSON: " + std::string(e.what()));
    }
    UserRecord u;
    try {
      u.user_id = j.at("user_id").is_string() ? j.at("user_id").get<std::string>()
                                              : j.at("user_id").dump();
      for (const auto& c : j.at("sensitive")) u.sensitive.push_back(c.get<std::int32_t>());
      if (j.contains("history"))
        for (const auto& h : j.at("history")) {
          const std::string id = h.is_string() ? h.get<std::string>() : h.dump();
          auto it = ds.item_index.find(id);
          if (it == ds.item_index.end()) throw DataError(where + ": unknown item '" + id + "'");
          u.history.push_back(it->second);
        }
      for (const auto& jc : j.at("candidates")) {
        Candidate c;
        const std::string id =
            jc.at("item").is_string() ? jc.at("item").get<std::string>() : jc.at("item").dump();
        auto it = ds.item_index.find(id);
        if (it == ds.item_index.end()) throw DataError(where + ": unknown item '" + id + "'");
        c.item = it->second;
        c.score = jc.at("score").get<double>();
        if (!jc.at("relevant").is_boolean())
          throw DataError(where + ": field 'relevant': expected boolean");
        c.relevant = jc.at("relevant").get<bool>();
        u.candidates.push_back(c);
      }
      u.k = j.at("k").get<std::int32_t>();
    } catch (const DataError&) {
      throw;
    } catch (const std::exception& e) {
      throw DataError(where + ": " + std::string(e.what()));
    }
    ds.users.push_back(std::move(u));
  }

  validate_dataset(ds);
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& users_path,
                         const std::string& items_path, const std::string& schema_path) {
  {
    nlohmann::json j;
    j["attributes"] = nlohmann::json::array();
    for (const auto& a : ds.schema.attributes)
      j["attributes"].push_back({{"name", a.name}, {"values", a.values}});
    std::ofstream out(schema_path);
    if (!out) throw DataError("cannot write schema file: " + schema_path);
    out << j.dump(2) << "\n";
  }
  {
    std::ofstream out(items_path);
    if (!out) throw DataError("cannot write items file: " + items_path);
    if (ds.explicit_total) out << "#total_interactions=" << ds.total_train_interactions << "\n";
    out << "item_id,tags,train_interactions\n";
    for (const auto& it : ds.items) {
      out << it.id << ",";
      for (std::size_t t = 0; t < it.tags.size(); ++t) {
        if (t) out << "|";
        out << ds.tag_vocab[static_cast<std::size_t>(it.tags[t])];
      }
      out << "," << it.train_interactions << "\n";
    }
  }
  {
    std::ofstream out(users_path);
    if (!out) throw DataError("cannot write users file: " + users_path);
    for (const auto& u : ds.users) {
      nlohmann::json j;
      j["user_id"] = u.user_id;
      j["sensitive"] = u.sensitive;
      auto hist = nlohmann::json::array();
      for (std::int32_t h : u.history) hist.push_back(ds.items[static_cast<std::size_t>(h)].id);
      j["history"] = std::move(hist);
      j["k"] = u.k;
      auto cands = nlohmann::json::array();
      for (const auto& c : u.candidates)
        cands.push_back({{"item", ds.items[static_cast<std::size_t>(c.item)].id},
                         {"score", c.score},
                         {"relevant", c.relevant}});
      j["candidates"] = std::move(cands);
      out << j.dump() << "\n";
    }
  }
}

/// Structural equality by resolved identifiers, so two loads of the same
/// files compare equal even though interned indices are an implementation
/// detail.
inline bool dataset_equal(const Dataset& a, const Dataset& b) {
  if (!(a.schema == b.schema)) return false;
  if (a.total_train_interactions != b.total_train_interactions) return false;
  if (a.items.size() != b.items.size() || a.users.size() != b.users.size()) return false;
  for (std::size_t i = 0; i < a.items.size(); ++i) {
    if (a.items[i].id != b.items[i].id) return false;
    if (a.items[i].train_interactions != b.items[i].train_interactions) return false;
    auto ta = a.tag_strings(static_cast<std::int32_t>(i));
    auto tb = b.tag_strings(static_cast<std::int32_t>(i));
    std::sort(ta.begin(), ta.end());
    std::sort(tb.begin(), tb.end());
    if (ta != tb) return false;
  }
  for (std::size_t i = 0; i < a.users.size(); ++i) {
    const auto& ua = a.users[i];
    const auto& ub = b.users[i];
    if (ua.user_id != ub.user_id || ua.sensitive != ub.sensitive || ua.k != ub.k) return false;
    if (ua.history.size() != ub.history.size() || ua.candidates.size() != ub.candidates.size())
      return false;
    for (std::size_t h = 0; h < ua.history.size(); ++h)
      if (a.items[static_cast<std::size_t>(ua.history[h])].id !=
          b.items[static_cast<std::size_t>(ub.history[h])].id)
        return false;
    for (std::size_t c = 0; c < ua.candidates.size(); ++c) {
      const auto& ca = ua.candidates[c];
      const auto& cb = ub.candidates[c];
      if (a.items[static_cast<std::size_t>(ca.item)].id !=
          b.items[static_cast<std::size_t>(cb.item)].id)
        return false;
      if (ca.score != cb.score || ca.relevant != cb.relevant) return false;
    }
  }
  return true;
}

}  // namespace recaudit
