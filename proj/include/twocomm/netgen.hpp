#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "twocomm/rng.hpp"

namespace twocomm {

// Static contact network over 2n typed nodes. Nodes 0..n-1 are type 1,
// n..2n-1 are type 2 for the ER generator; the configuration model assigns
// types by a random balanced partition instead.
struct Graph {
  std::int64_t num_nodes = 0;
  std::vector<std::uint8_t> node_type;  // 1 or 2
  std::vector<std::int64_t> offsets;    // CSR, size num_nodes + 1
  std::vector<std::int32_t> neighbors;  // sorted per node
  std::int64_t edge_count = 0;

  std::pair<const std::int32_t*, const std::int32_t*> adj(std::int64_t v) const {
    return {neighbors.data() + offsets[static_cast<std::size_t>(v)],
            neighbors.data() + offsets[static_cast<std::size_t>(v) + 1]};
  }
  std::int64_t degree(std::int64_t v) const {
    return offsets[static_cast<std::size_t>(v) + 1] -
           offsets[static_cast<std::size_t>(v)];
  }
};

struct CapacityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline Graph csr_from_edges(std::int64_t num_nodes,
                            std::vector<std::pair<std::int32_t, std::int32_t>>& edges,
                            std::vector<std::uint8_t> types) {
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  Graph g;
  g.num_nodes = num_nodes;
  g.node_type = std::move(types);
  g.edge_count = static_cast<std::int64_t>(edges.size());
  std::vector<std::int64_t> deg(static_cast<std::size_t>(num_nodes), 0);
  for (const auto& [u, v] : edges) {
    ++deg[static_cast<std::size_t>(u)];
    ++deg[static_cast<std::size_t>(v)];
  }
  g.offsets.assign(static_cast<std::size_t>(num_nodes) + 1, 0);
  for (std::int64_t v = 0; v < num_nodes; ++v)
    g.offsets[static_cast<std::size_t>(v) + 1] =
        g.offsets[static_cast<std::size_t>(v)] + deg[static_cast<std::size_t>(v)];
  g.neighbors.resize(static_cast<std::size_t>(2 * g.edge_count));
  std::vector<std::int64_t> cursor(g.offsets.begin(), g.offsets.end() - 1);
  for (const auto& [u, v] : edges) {
    g.neighbors[static_cast<std::size_t>(cursor[static_cast<std::size_t>(u)]++)] = v;
    g.neighbors[static_cast<std::size_t>(cursor[static_cast<std::size_t>(v)]++)] = u;
  }
  for (std::int64_t v = 0; v < num_nodes; ++v)
    std::sort(g.neighbors.begin() + g.offsets[static_cast<std::size_t>(v)],
              g.neighbors.begin() + g.offsets[static_cast<std::size_t>(v) + 1]);
  return g;
}

// Sample the pairs of an implicit index space of `total` unordered pairs,
// each present with probability p, by geometric gap skipping.
template <class Emit>
void skip_sample(std::uint64_t total, double p, Rng& rng, Emit emit) {
  if (!(p > 0)) return;
  if (p >= 1.0) {
    for (std::uint64_t k = 0; k < total; ++k) emit(k);
    return;
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double log1mp = std::log1p(-p);
  double pos = -1;
  while (true) {
    double u = unif(rng);
    if (u <= 0) u = std::numeric_limits<double>::min();
    pos += 1.0 + std::floor(std::log(u) / log1mp);
    if (pos >= static_cast<double>(total)) break;
    emit(static_cast<std::uint64_t>(pos));
  }
}

// Unordered pair with index k among the C(m,2) pairs of {0..m-1}, in the
// ordering (0,1),(0,2),...,(0,m-1),(1,2),...
inline std::pair<std::int64_t, std::int64_t> pair_from_index(std::uint64_t k,
                                                             std::int64_t m) {
  const double md = static_cast<double>(m);
  double i_f = std::floor(
      (2.0 * md - 1.0 -
       std::sqrt((2.0 * md - 1.0) * (2.0 * md - 1.0) - 8.0 * static_cast<double>(k))) /
      2.0);
  std::int64_t i = static_cast<std::int64_t>(i_f);
  auto row_start = [&](std::int64_t r) {
    return static_cast<std::uint64_t>(r) * static_cast<std::uint64_t>(2 * m - r - 1) / 2;
  };
  while (i > 0 && row_start(i) > k) --i;
  while (i + 1 < m && row_start(i + 1) <= k) ++i;
  const std::int64_t j = i + 1 + static_cast<std::int64_t>(k - row_start(i));
  return {i, j};
}

}  // namespace detail

inline Graph gen_two_community_er(std::int64_t n, double c, double c_cross,
                                  std::uint64_t rng_seed,
                                  std::int64_t max_edges = 1'000'000'000) {
  if (n < 1) throw std::invalid_argument("gen_two_community_er: n < 1");
  if (c < 0 || c_cross < 0)
    throw std::invalid_argument("gen_two_community_er: negative c");
  const double nd = static_cast<double>(n);
  if (c / nd > 1.0 || c_cross / nd > 1.0)
    throw std::invalid_argument("gen_two_community_er: edge probability > 1");
  const double expected = c / nd * nd * (nd - 1.0) +  // two within blocks
                          c_cross / nd * nd * nd;
  if (expected > static_cast<double>(max_edges))
    throw CapacityError("gen_two_community_er: expected edge count " +
                        std::to_string(expected) + " over budget");

  Rng rng = make_rng(rng_seed);
  std::vector<std::pair<std::int32_t, std::int32_t>> edges;
  edges.reserve(static_cast<std::size_t>(expected * 1.05) + 64);

  const std::uint64_t within = static_cast<std::uint64_t>(n) *
                               static_cast<std::uint64_t>(n - 1) / 2;
  for (int block = 0; block < 2; ++block) {
    const std::int32_t base = block == 0 ? 0 : static_cast<std::int32_t>(n);
    detail::skip_sample(within, c / nd, rng, [&](std::uint64_t k) {
      auto [i, j] = detail::pair_from_index(k, n);
      edges.emplace_back(base + static_cast<std::int32_t>(i),
                         base + static_cast<std::int32_t>(j));
    });
  }
  const std::uint64_t cross = static_cast<std::uint64_t>(n) *
                              static_cast<std::uint64_t>(n);
  detail::skip_sample(cross, c_cross / nd, rng, [&](std::uint64_t k) {
    const std::int32_t i = static_cast<std::int32_t>(k / static_cast<std::uint64_t>(n));
    const std::int32_t j = static_cast<std::int32_t>(k % static_cast<std::uint64_t>(n));
    edges.emplace_back(i, static_cast<std::int32_t>(n) + j);
  });

  std::vector<std::uint8_t> types(static_cast<std::size_t>(2 * n));
  for (std::int64_t v = 0; v < 2 * n; ++v)
    types[static_cast<std::size_t>(v)] = v < n ? 1 : 2;
  return detail::csr_from_edges(2 * n, edges, std::move(types));
}

inline Graph gen_configuration_geometric(std::int64_t n, double mean_degree,
                                         std::uint64_t rng_seed,
                                         std::int64_t max_edges = 1'000'000'000) {
  if (n < 1) throw std::invalid_argument("gen_configuration_geometric: n < 1");
  if (mean_degree < 0)
    throw std::invalid_argument("gen_configuration_geometric: negative mean");
  if (mean_degree * static_cast<double>(n) > static_cast<double>(max_edges))
    throw CapacityError("gen_configuration_geometric: over budget");

  Rng rng = make_rng(rng_seed);
  const std::int64_t num_nodes = 2 * n;
  std::vector<std::int64_t> deg(static_cast<std::size_t>(num_nodes), 0);
  std::int64_t half_edges = 0;
  if (mean_degree > 0) {
    // geometric on {0,1,2,...} with success p = 1/(1+m) has mean m
    std::geometric_distribution<std::int64_t> geo(1.0 / (1.0 + mean_degree));
    for (auto& d : deg) {
      d = geo(rng);
      half_edges += d;
    }
    while (half_edges % 2 != 0) {
      std::uniform_int_distribution<std::int64_t> pick(0, num_nodes - 1);
      auto& d = deg[static_cast<std::size_t>(pick(rng))];
      half_edges -= d;
      d = geo(rng);
      half_edges += d;
    }
  }

  std::vector<std::int32_t> stubs;
  stubs.reserve(static_cast<std::size_t>(half_edges));
  for (std::int64_t v = 0; v < num_nodes; ++v)
    for (std::int64_t k = 0; k < deg[static_cast<std::size_t>(v)]; ++k)
      stubs.push_back(static_cast<std::int32_t>(v));
  std::shuffle(stubs.begin(), stubs.end(), rng);

  std::vector<std::pair<std::int32_t, std::int32_t>> edges;
  edges.reserve(stubs.size() / 2);
  for (std::size_t k = 0; k + 1 < stubs.size(); k += 2) {
    std::int32_t u = stubs[k], v = stubs[k + 1];
    if (u == v) continue;  // erase self-loops
    if (u > v) std::swap(u, v);
    edges.emplace_back(u, v);  // multi-edges collapse in csr_from_edges
  }

  std::vector<std::uint8_t> types(static_cast<std::size_t>(num_nodes), 1);
  for (std::int64_t v = n; v < num_nodes; ++v)
    types[static_cast<std::size_t>(v)] = 2;
  std::shuffle(types.begin(), types.end(), rng);
  return detail::csr_from_edges(num_nodes, edges, std::move(types));
}

// Flat binary dump: magic, version, 2n, edge_count, then the sorted edge
// list as little-endian uint32 pairs, then per-node types as bytes.
inline constexpr std::uint32_t kGraphMagic = 0x32434e47;  // "GNC2"
inline constexpr std::uint32_t kGraphVersion = 1;

inline void save_graph(const Graph& g, const std::string& path,
                       const nlohmann::json& sidecar_meta) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_graph: cannot open " + path);
  auto put_u32 = [&](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  put_u32(kGraphMagic);
  put_u32(kGraphVersion);
  put_u32(static_cast<std::uint32_t>(g.num_nodes));
  put_u32(static_cast<std::uint32_t>(g.edge_count));
  for (std::int64_t u = 0; u < g.num_nodes; ++u) {
    auto [first, last] = g.adj(u);
    for (auto it = first; it != last; ++it) {
      if (*it > u) {
        put_u32(static_cast<std::uint32_t>(u));
        put_u32(static_cast<std::uint32_t>(*it));
      }
    }
  }
  out.write(reinterpret_cast<const char*>(g.node_type.data()),
            static_cast<std::streamsize>(g.node_type.size()));
  if (!out) throw std::runtime_error("save_graph: write failure on " + path);
  out.close();
  std::ofstream meta(path + ".json", std::ios::trunc);
  meta << sidecar_meta.dump(2) << "\n";
  if (!meta) throw std::runtime_error("save_graph: sidecar write failure");
}

inline std::string read_sidecar(const std::string& path) {
  std::ifstream in(path + ".json");
  if (!in) throw std::runtime_error("read_sidecar: cannot open " + path + ".json");
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  return content;
}

inline Graph load_graph(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_graph: cannot open " + path);
  auto get_u32 = [&]() {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("load_graph: truncated file " + path);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  };
  if (get_u32() != kGraphMagic) throw std::runtime_error("load_graph: bad magic");
  if (get_u32() != kGraphVersion)
    throw std::runtime_error("load_graph: unsupported version");
  const std::int64_t num_nodes = get_u32();
  const std::int64_t edge_count = get_u32();
  std::vector<std::pair<std::int32_t, std::int32_t>> edges;
  edges.reserve(static_cast<std::size_t>(edge_count));
  for (std::int64_t e = 0; e < edge_count; ++e) {
    const std::int32_t u = static_cast<std::int32_t>(get_u32());
    const std::int32_t v = static_cast<std::int32_t>(get_u32());
    if (u >= v || v >= num_nodes)
      throw std::runtime_error("load_graph: invalid edge record");
    edges.emplace_back(u, v);
  }
  std::vector<std::uint8_t> types(static_cast<std::size_t>(num_nodes));
  in.read(reinterpret_cast<char*>(types.data()),
          static_cast<std::streamsize>(types.size()));
  if (!in) throw std::runtime_error("load_graph: truncated type table");
  return detail::csr_from_edges(num_nodes, edges, std::move(types));
}

}  // namespace twocomm
