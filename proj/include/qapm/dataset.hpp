#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qapm/graph.hpp"

namespace qapm {

using json = nlohmann::json;

/// One line of a dataset file.
struct DatasetSample {
  InstanceConfig cfg;
  std::uint64_t seed = 0;
  PlantedInstance instance;

  bool operator==(const DatasetSample& o) const {
    return cfg == o.cfg && seed == o.seed && instance.g1 == o.instance.g1 && instance.g2 == o.instance.g2 &&
           instance.pi == o.instance.pi;
  }
};

inline json to_json(const InstanceConfig& c) {
  return json{{"model", to_string(c.model)}, {"n", c.n},     {"p", c.p},
              {"deg", c.deg},               {"p_e", c.p_e}, {"random_permutation", c.random_permutation}};
}

inline InstanceConfig instance_config_from_json(const json& j) {
  InstanceConfig c;
  c.model = parse_graph_model(j.at("model").get<std::string>());
  c.n = j.at("n").get<int>();
  c.p = j.value("p", c.p);
  c.deg = j.value("deg", c.deg);
  c.p_e = j.value("p_e", c.p_e);
  c.random_permutation = j.value("random_permutation", true);
  return c;
}

inline json edges_to_json(const Graph& g) {
  json out = json::array();
  for (auto [i, j] : g.edges()) out.push_back({i, j});
  return out;
}

inline Graph graph_from_json(int n, const json& edges) {
  std::vector<Edge> list;
  list.reserve(edges.size());
  for (const auto& e : edges) {
    const int i = e.at(0).get<int>();
    const int j = e.at(1).get<int>();
    if (i >= j) throw ParameterError("dataset edges must be listed once with i<j");
    list.emplace_back(i, j);
  }
  return Graph::from_edges(n, list);
}

inline std::string serialize_sample(const DatasetSample& s) {
  const json j{{"n", s.instance.g1.n()},
               {"edges1", edges_to_json(s.instance.g1)},
               {"edges2", edges_to_json(s.instance.g2)},
               {"perm", s.instance.pi.map()},
               {"cfg", to_json(s.cfg)},
               {"seed", s.seed}};
  return j.dump();
}

inline DatasetSample parse_sample(const std::string& line) {
  const json j = json::parse(line);
  DatasetSample s;
  const int n = j.at("n").get<int>();
  s.instance.g1 = graph_from_json(n, j.at("edges1"));
  s.instance.g2 = graph_from_json(n, j.at("edges2"));
  s.instance.pi = Permutation(j.at("perm").get<std::vector<int>>());
  if (s.instance.pi.size() != n) throw ParameterError("dataset permutation length does not match n");
  s.cfg = instance_config_from_json(j.at("cfg"));
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

inline DatasetSample generate_sample(const InstanceConfig& cfg, std::uint64_t seed) {
  return DatasetSample{cfg, seed, make_instance(cfg, seed)};
}

/// Writes `count` samples with per-sample seeds derived from `master_seed`.
inline void write_dataset(std::ostream& out, const InstanceConfig& cfg, std::size_t count, std::uint64_t master_seed) {
  for (std::size_t i = 0; i < count; ++i) {
    out << serialize_sample(generate_sample(cfg, derive_seed(master_seed, i))) << '\n';
  }
}

inline std::vector<DatasetSample> read_dataset(std::istream& in) {
  std::vector<DatasetSample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(parse_sample(line));
  }
  return out;
}

inline std::vector<DatasetSample> read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open dataset file " + path);
  return read_dataset(in);
}

}  // namespace qapm
