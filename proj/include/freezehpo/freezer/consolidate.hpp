#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "freezehpo/core/error.hpp"
#include "freezehpo/freezer/freeze_plan.hpp"

namespace freezehpo {

struct NamedGroup {
  std::string name;
  std::vector<std::string> members;  // layer names or paths, forward order
};

struct ConsolidationRules {
  enum class Mode { per_activation_boundary, fixed_block_size, named_groups };
  Mode mode = Mode::per_activation_boundary;
  std::size_t block_size = 1;
  std::vector<NamedGroup> groups;
};

namespace detail {

inline Layer merge(std::span<const Layer> members, std::string name) {
  Layer g;
  g.type = members.size() == 1 ? members.front().type : "group";
  for (const auto& m : members) g.param_count += m.param_count;
  g.ends_with_activation = members.back().ends_with_activation;
  if (name.empty()) {
    for (const auto& m : members) name += (name.empty() ? "" : "+") + m.name;
  }
  g.name = name;
  g.path = members.size() == 1 ? members.front().path : name;
  return g;
}

}  // namespace detail

// Coarsens a forward-ordered layer list into contiguous groups whose union
// is the input list.
inline std::vector<Layer> consolidate(std::span<const Layer> layers, const ConsolidationRules& rules) {
  using Mode = ConsolidationRules::Mode;
  std::vector<Layer> out;
  switch (rules.mode) {
    case Mode::per_activation_boundary: {
      std::size_t start = 0;
      for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].ends_with_activation || i + 1 == layers.size()) {
          out.push_back(detail::merge(layers.subspan(start, i + 1 - start), {}));
          start = i + 1;
        }
      }
      break;
    }
    case Mode::fixed_block_size: {
      if (rules.block_size == 0) throw ConfigError("block size must be positive");
      for (std::size_t start = 0; start < layers.size(); start += rules.block_size) {
        const std::size_t len = std::min(rules.block_size, layers.size() - start);
        out.push_back(detail::merge(layers.subspan(start, len), {}));
      }
      break;
    }
    case Mode::named_groups: {
      std::map<std::string, std::size_t> index;
      for (std::size_t i = 0; i < layers.size(); ++i) {
        index.emplace(layers[i].name, i);
        index.emplace(layers[i].path, i);
      }
      auto resolve = [&](const NamedGroup& g, const std::string& member) -> std::size_t {
        if (auto it = index.find(member); it != index.end()) return it->second;
        // "leaf.sub" refers to a piece inside a leaf layer.
        for (auto dot = member.rfind('.'); dot != std::string::npos; dot = member.rfind('.', dot - 1)) {
          if (auto it = index.find(member.substr(0, dot)); it != index.end()) {
            const Layer& l = layers[it->second];
            if (l.has_params())
              throw ConfigError("named group '" + g.name + "' splits parametric leaf '" + l.name + "'");
            return it->second;
          }
          if (dot == 0) break;
        }
        throw ConfigError("named group '" + g.name + "' references unknown layer '" + member + "'");
      };
      std::size_t next = 0;
      for (const auto& g : rules.groups) {
        if (g.members.empty()) throw ConfigError("named group '" + g.name + "' is empty");
        const std::size_t first = next;
        for (const auto& m : g.members) {
          const std::size_t i = resolve(g, m);
          if (i != next)
            throw ConfigError("named group '" + g.name + "' is not contiguous in forward order at '" + m + "'");
          ++next;
        }
        out.push_back(detail::merge(layers.subspan(first, next - first), g.name));
      }
      if (next != layers.size())
        throw ConfigError("named groups do not cover layer '" + layers[next].name + "'");
      break;
    }
  }
  return out;
}

}  // namespace freezehpo
