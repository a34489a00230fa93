#pragma once

// Problem-instance data model for the stochastic contract-matching solver:
// contract types, admissible matchings, failure configurations, allocations,
// plus validation, JSON (de)serialization and seeded random generation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stocmatch/errors.hpp"
#include "stocmatch/rng.hpp"

namespace stocmatch {

// A buy contract type: an option on one unit that fails (all units of the
// type together) with probability fail_prob. Up to `capacity` units may be
// held.
struct BuyContractType {
  std::string id;
  double price = 0.0;
  double fail_prob = 0.0;
  int capacity = 0;

  bool operator==(const BuyContractType&) const = default;
};

// A sell contract type: an obligation on one unit. `penalty` is the
// nonnegative magnitude paid per unsatisfied unit; formulas use the reward
// -penalty.
struct SellContractType {
  std::string id;
  double price = 0.0;
  double penalty = 0.0;
  int capacity = 0;

  bool operator==(const SellContractType&) const = default;
};

struct ProblemInstance {
  std::vector<BuyContractType> buys;
  std::vector<SellContractType> sells;
  // Admissible matchings (buy_index, sell_index), kept sorted and unique.
  std::vector<std::pair<int, int>> edges;

  int q() const { return static_cast<int>(buys.size()); }
  int k() const { return static_cast<int>(sells.size()); }

  bool has_edge(int u, int i) const {
    return std::binary_search(edges.begin(), edges.end(), std::make_pair(u, i));
  }

  // Incident buy indices per sell, in ascending order.
  std::vector<std::vector<int>> buys_by_sell() const {
    std::vector<std::vector<int>> out(sells.size());
    for (const auto& [u, i] : edges) out[i].push_back(u);
    return out;
  }

  // Incident sell indices per buy, in ascending order.
  std::vector<std::vector<int>> sells_by_buy() const {
    std::vector<std::vector<int>> out(buys.size());
    for (const auto& [u, i] : edges) out[u].push_back(i);
    return out;
  }

  bool operator==(const ProblemInstance&) const = default;
};

// An observed failure combination over buy types: bit u is 1 when type u did
// not fail. Stored as packed words with all unused high bits zero.
class FailureConfiguration {
 public:
  FailureConfiguration() = default;

  explicit FailureConfiguration(int length)
      : length_(length), words_(word_count(length), 0) {}

  static FailureConfiguration all_alive(int length) {
    FailureConfiguration c(length);
    for (std::size_t w = 0; w < c.words_.size(); ++w) c.words_[w] = ~0ull;
    c.mask_tail();
    return c;
  }

  static FailureConfiguration all_failed(int length) {
    return FailureConfiguration(length);
  }

  // Characters '1' (alive) / '0' (failed); index 0 is the leftmost character.
  static FailureConfiguration from_string(std::string_view bits) {
    FailureConfiguration c(static_cast<int>(bits.size()));
    for (int u = 0; u < c.length_; ++u) {
      if (bits[u] == '1') {
        c.set_alive(u, true);
      } else if (bits[u] != '0') {
        throw ValidationError("failure configuration string must contain only '0' and '1'");
      }
    }
    return c;
  }

  // Configuration number `index` in lexicographic bit-string order
  // (000..0, 000..1, ..., 111..1). Requires length <= 63.
  static FailureConfiguration from_index(int length, std::uint64_t index) {
    FailureConfiguration c(length);
    for (int u = 0; u < length; ++u) {
      c.set_alive(u, ((index >> (length - 1 - u)) & 1ull) != 0);
    }
    return c;
  }

  int length() const { return length_; }

  bool alive(int u) const {
    return (words_[static_cast<std::size_t>(u) >> 6] >> (u & 63)) & 1ull;
  }

  void set_alive(int u, bool value) {
    const std::uint64_t bit = 1ull << (u & 63);
    if (value) {
      words_[static_cast<std::size_t>(u) >> 6] |= bit;
    } else {
      words_[static_cast<std::size_t>(u) >> 6] &= ~bit;
    }
  }

  int alive_count() const {
    int total = 0;
    for (std::uint64_t w : words_) total += __builtin_popcountll(w);
    return total;
  }

  int failed_count() const { return length_ - alive_count(); }

  bool is_all_alive() const { return alive_count() == length_; }
  bool is_all_failed() const { return alive_count() == 0; }

  std::uint64_t to_index() const {
    std::uint64_t idx = 0;
    for (int u = 0; u < length_; ++u) idx = (idx << 1) | (alive(u) ? 1ull : 0ull);
    return idx;
  }

  std::string to_string() const {
    std::string s(static_cast<std::size_t>(length_), '0');
    for (int u = 0; u < length_; ++u)
      if (alive(u)) s[static_cast<std::size_t>(u)] = '1';
    return s;
  }

  const std::vector<std::uint64_t>& words() const { return words_; }

  bool operator==(const FailureConfiguration&) const = default;

  // Lexicographic order of the bit string (bit 0 compared first).
  bool operator<(const FailureConfiguration& other) const {
    const int n = std::min(length_, other.length_);
    for (int u = 0; u < n; ++u) {
      const bool a = alive(u), b = other.alive(u);
      if (a != b) return b;
    }
    return length_ < other.length_;
  }

  std::size_t hash() const {
    std::uint64_t h = 0x9E3779B97F4A7C15ull ^ static_cast<std::uint64_t>(length_);
    for (std::uint64_t w : words_) {
      h ^= w + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }

 private:
  static std::size_t word_count(int length) {
    return static_cast<std::size_t>(length + 63) / 64;
  }

  void mask_tail() {
    if (length_ % 64 != 0 && !words_.empty()) {
      words_.back() &= (1ull << (length_ % 64)) - 1ull;
    }
  }

  int length_ = 0;
  std::vector<std::uint64_t> words_;
};

struct FailureConfigurationHash {
  std::size_t operator()(const FailureConfiguration& c) const { return c.hash(); }
};

// Number of contracts held of each type. Always within [0, capacity] for a
// valid instance (no short-selling).
struct Allocation {
  std::vector<int> n;  // buys held, length q
  std::vector<int> m;  // sells held, length k

  static Allocation zeros(const ProblemInstance& instance) {
    return Allocation{std::vector<int>(instance.buys.size(), 0),
                      std::vector<int>(instance.sells.size(), 0)};
  }

  bool is_zero() const {
    auto zero = [](int v) { return v == 0; };
    return std::all_of(n.begin(), n.end(), zero) && std::all_of(m.begin(), m.end(), zero);
  }

  bool operator==(const Allocation&) const = default;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ValidationError(message);
}

}  // namespace detail

inline void validate_instance(const ProblemInstance& instance) {
  using detail::require;
  require(!instance.buys.empty(), "buys: at least one buy contract type is required");
  require(!instance.sells.empty(), "sells: at least one sell contract type is required");

  std::vector<std::string> ids;
  for (std::size_t u = 0; u < instance.buys.size(); ++u) {
    const auto& b = instance.buys[u];
    const std::string path = "buys[" + std::to_string(u) + "]";
    require(!b.id.empty(), path + ".id: must be nonempty");
    require(std::isfinite(b.price) && b.price >= 0.0, path + ".price: must be a finite nonnegative number");
    require(std::isfinite(b.fail_prob) && b.fail_prob >= 0.0 && b.fail_prob <= 1.0,
            path + ".fail_prob: must lie in [0, 1]");
    require(b.capacity >= 0, path + ".capacity: must be nonnegative");
    ids.push_back(b.id);
  }
  for (std::size_t i = 0; i < instance.sells.size(); ++i) {
    const auto& s = instance.sells[i];
    const std::string path = "sells[" + std::to_string(i) + "]";
    require(!s.id.empty(), path + ".id: must be nonempty");
    require(std::isfinite(s.price) && s.price >= 0.0, path + ".price: must be a finite nonnegative number");
    require(std::isfinite(s.penalty) && s.penalty >= 0.0, path + ".penalty: must be a finite nonnegative number");
    require(s.capacity >= 0, path + ".capacity: must be nonnegative");
    ids.push_back(s.id);
  }
  {
    std::vector<std::string> sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    auto dup = std::adjacent_find(sorted.begin(), sorted.end());
    require(dup == sorted.end(), dup == sorted.end() ? "" : "duplicate contract id '" + *dup + "'");
  }
  for (std::size_t e = 0; e < instance.edges.size(); ++e) {
    const auto& [u, i] = instance.edges[e];
    const std::string path = "edges[" + std::to_string(e) + "]";
    require(u >= 0 && u < instance.q(), path + "[0]: buy index out of range");
    require(i >= 0 && i < instance.k(), path + "[1]: sell index out of range");
  }
  {
    std::vector<std::pair<int, int>> sorted = instance.edges;
    std::sort(sorted.begin(), sorted.end());
    require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(),
            "edges: duplicate edge");
  }
}

inline void validate_allocation(const ProblemInstance& instance, const Allocation& alloc) {
  using detail::require;
  require(alloc.n.size() == instance.buys.size(), "n: length must equal the number of buy types");
  require(alloc.m.size() == instance.sells.size(), "m: length must equal the number of sell types");
  for (std::size_t u = 0; u < alloc.n.size(); ++u) {
    require(alloc.n[u] >= 0 && alloc.n[u] <= instance.buys[u].capacity,
            "n[" + std::to_string(u) + "]: outside [0, capacity]");
  }
  for (std::size_t i = 0; i < alloc.m.size(); ++i) {
    require(alloc.m[i] >= 0 && alloc.m[i] <= instance.sells[i].capacity,
            "m[" + std::to_string(i) + "]: outside [0, capacity]");
  }
}

namespace detail {

inline const nlohmann::json& json_field(const nlohmann::json& j, const char* key,
                                        const std::string& path) {
  auto it = j.find(key);
  require(it != j.end(), path + "." + key + ": missing");
  return *it;
}

inline double json_number(const nlohmann::json& j, const std::string& path) {
  require(j.is_number(), path + ": must be a number");
  return j.get<double>();
}

inline int json_int(const nlohmann::json& j, const std::string& path) {
  require(j.is_number_integer(), path + ": must be an integer");
  return j.get<int>();
}

inline std::string json_string(const nlohmann::json& j, const std::string& path) {
  require(j.is_string(), path + ": must be a string");
  return j.get<std::string>();
}

}  // namespace detail

// Parses the instance document format:
//   {"buys":  [{"id","price","fail_prob","capacity"}...],
//    "sells": [{"id","price","penalty","capacity"}...],
//    "edges": [[buy_index, sell_index]...]}
inline ProblemInstance parse_instance(std::string_view text) {
  using detail::require;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("syntax error: ") + e.what());
  }
  require(j.is_object(), "instance document must be a JSON object");

  ProblemInstance instance;
  const auto& buys = detail::json_field(j, "buys", "instance");
  require(buys.is_array(), "buys: must be an array");
  for (std::size_t u = 0; u < buys.size(); ++u) {
    const std::string path = "buys[" + std::to_string(u) + "]";
    const auto& b = buys[u];
    require(b.is_object(), path + ": must be an object");
    BuyContractType buy;
    buy.id = detail::json_string(detail::json_field(b, "id", path), path + ".id");
    buy.price = detail::json_number(detail::json_field(b, "price", path), path + ".price");
    buy.fail_prob = detail::json_number(detail::json_field(b, "fail_prob", path), path + ".fail_prob");
    buy.capacity = detail::json_int(detail::json_field(b, "capacity", path), path + ".capacity");
    instance.buys.push_back(std::move(buy));
  }
  const auto& sells = detail::json_field(j, "sells", "instance");
  require(sells.is_array(), "sells: must be an array");
  for (std::size_t i = 0; i < sells.size(); ++i) {
    const std::string path = "sells[" + std::to_string(i) + "]";
    const auto& s = sells[i];
    require(s.is_object(), path + ": must be an object");
    SellContractType sell;
    sell.id = detail::json_string(detail::json_field(s, "id", path), path + ".id");
    sell.price = detail::json_number(detail::json_field(s, "price", path), path + ".price");
    sell.penalty = detail::json_number(detail::json_field(s, "penalty", path), path + ".penalty");
    sell.capacity = detail::json_int(detail::json_field(s, "capacity", path), path + ".capacity");
    instance.sells.push_back(std::move(sell));
  }
  const auto& edges = detail::json_field(j, "edges", "instance");
  require(edges.is_array(), "edges: must be an array");
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const std::string path = "edges[" + std::to_string(e) + "]";
    const auto& pair = edges[e];
    require(pair.is_array() && pair.size() == 2, path + ": must be a [buy_index, sell_index] pair");
    instance.edges.emplace_back(detail::json_int(pair[0], path + "[0]"),
                                detail::json_int(pair[1], path + "[1]"));
  }
  std::sort(instance.edges.begin(), instance.edges.end());
  validate_instance(instance);
  return instance;
}

inline std::string serialize_instance(const ProblemInstance& instance, int indent = 2) {
  nlohmann::json j;
  j["buys"] = nlohmann::json::array();
  for (const auto& b : instance.buys) {
    j["buys"].push_back({{"id", b.id},
                         {"price", b.price},
                         {"fail_prob", b.fail_prob},
                         {"capacity", b.capacity}});
  }
  j["sells"] = nlohmann::json::array();
  for (const auto& s : instance.sells) {
    j["sells"].push_back({{"id", s.id},
                          {"price", s.price},
                          {"penalty", s.penalty},
                          {"capacity", s.capacity}});
  }
  j["edges"] = nlohmann::json::array();
  for (const auto& [u, i] : instance.edges) {
    j["edges"].push_back({u, i});
  }
  return j.dump(indent);
}

// Allocation document: {"n": [...], "m": [...]}.
inline Allocation parse_allocation(std::string_view text, const ProblemInstance& instance) {
  using detail::require;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("syntax error: ") + e.what());
  }
  require(j.is_object(), "allocation document must be a JSON object");
  Allocation alloc;
  const auto& n = detail::json_field(j, "n", "allocation");
  require(n.is_array(), "n: must be an array");
  for (std::size_t u = 0; u < n.size(); ++u) {
    alloc.n.push_back(detail::json_int(n[u], "n[" + std::to_string(u) + "]"));
  }
  const auto& m = detail::json_field(j, "m", "allocation");
  require(m.is_array(), "m: must be an array");
  for (std::size_t i = 0; i < m.size(); ++i) {
    alloc.m.push_back(detail::json_int(m[i], "m[" + std::to_string(i) + "]"));
  }
  validate_allocation(instance, alloc);
  return alloc;
}

inline std::string serialize_allocation(const Allocation& alloc, int indent = 2) {
  nlohmann::json j;
  j["n"] = alloc.n;
  j["m"] = alloc.m;
  return j.dump(indent);
}

// Parameter ranges for random instance generation; all draws are uniform.
struct GenerationRanges {
  std::pair<double, double> buy_price{0.5, 2.5};
  std::pair<double, double> sell_price{2.0, 6.0};
  std::pair<double, double> penalty{2.0, 8.0};
  std::pair<double, double> fail_prob{0.05, 0.5};
  std::pair<int, int> capacity{1, 5};
};

// Deterministic random instance: parameters drawn uniformly from the ranges,
// each (buy, sell) edge kept with probability edge_density, and every sell
// type repaired to have at least one incident edge. Draw order is fixed
// (buys, sells, edges in (u, i) order, repairs in sell order), so a seed
// fully determines the instance.
inline ProblemInstance generate_instance(int q, int k, double edge_density,
                                         const GenerationRanges& ranges,
                                         std::uint64_t rng_seed) {
  using detail::require;
  require(q >= 1, "q: must be at least 1");
  require(k >= 1, "k: must be at least 1");
  require(edge_density > 0.0 && edge_density <= 1.0, "edge_density: must lie in (0, 1]");
  require(ranges.capacity.first >= 0 && ranges.capacity.first <= ranges.capacity.second,
          "capacity range: must be nonnegative and ordered");
  require(ranges.fail_prob.first >= 0.0 && ranges.fail_prob.second <= 1.0 &&
              ranges.fail_prob.first <= ranges.fail_prob.second,
          "fail_prob range: must lie in [0, 1] and be ordered");

  Rng rng(rng_seed);
  ProblemInstance instance;
  for (int u = 0; u < q; ++u) {
    BuyContractType b;
    b.id = "b" + std::to_string(u);
    b.price = rng.uniform(ranges.buy_price.first, ranges.buy_price.second);
    b.fail_prob = rng.uniform(ranges.fail_prob.first, ranges.fail_prob.second);
    b.capacity = rng.uniform_int(ranges.capacity.first, ranges.capacity.second);
    instance.buys.push_back(std::move(b));
  }
  for (int i = 0; i < k; ++i) {
    SellContractType s;
    s.id = "s" + std::to_string(i);
    s.price = rng.uniform(ranges.sell_price.first, ranges.sell_price.second);
    s.penalty = rng.uniform(ranges.penalty.first, ranges.penalty.second);
    s.capacity = rng.uniform_int(ranges.capacity.first, ranges.capacity.second);
    instance.sells.push_back(std::move(s));
  }
  std::vector<char> sell_covered(static_cast<std::size_t>(k), 0);
  for (int u = 0; u < q; ++u) {
    for (int i = 0; i < k; ++i) {
      if (rng.bernoulli(edge_density)) {
        instance.edges.emplace_back(u, i);
        sell_covered[static_cast<std::size_t>(i)] = 1;
      }
    }
  }
  for (int i = 0; i < k; ++i) {
    if (!sell_covered[static_cast<std::size_t>(i)]) {
      instance.edges.emplace_back(rng.uniform_int(0, q - 1), i);
    }
  }
  std::sort(instance.edges.begin(), instance.edges.end());
  validate_instance(instance);
  return instance;
}

inline ProblemInstance generate_instance(int q, int k, double edge_density,
                                         std::uint64_t rng_seed) {
  return generate_instance(q, k, edge_density, GenerationRanges{}, rng_seed);
}

}  // namespace stocmatch
