#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "freezehpo/core/error.hpp"
#include "freezehpo/core/types.hpp"
#include "freezehpo/freezer/freeze_plan.hpp"

namespace freezehpo {

enum class NodeKind { sequential_container, user_unwrap_container, leaf };

// A model's module hierarchy. `type` plays the role of the module class;
// containers listed in an unwrap set are descended into like sequential
// ones. Children are in forward order.
struct ModuleNode {
  std::string name;
  std::string type;
  NodeKind kind = NodeKind::leaf;
  std::uint64_t params = 0;  // parameters owned directly by this node
  bool activation = false;   // leaf is a non-linear activation
  std::vector<ModuleNode> children;

  std::uint64_t total_params() const {
    std::uint64_t s = params;
    for (const auto& c : children) s += c.total_params();
    return s;
  }
};

inline ModuleNode leaf(std::string name, std::string type, std::uint64_t params, bool activation = false) {
  return {std::move(name), std::move(type), NodeKind::leaf, params, activation, {}};
}

inline ModuleNode sequential(std::string name, std::vector<ModuleNode> children) {
  return {std::move(name), "Sequential", NodeKind::sequential_container, 0, false, std::move(children)};
}

inline ModuleNode container(std::string name, std::string type, std::vector<ModuleNode> children) {
  return {std::move(name), std::move(type), NodeKind::user_unwrap_container, 0, false, std::move(children)};
}

namespace detail {

inline bool ends_with_activation(const ModuleNode& n) {
  if (n.children.empty()) return n.activation;
  return ends_with_activation(n.children.back());
}

inline void traverse(const ModuleNode& node, const std::string& path, const std::set<std::string>& unwrap,
                     std::vector<Layer>& out) {
  const bool descend = node.kind == NodeKind::sequential_container || unwrap.contains(node.type);
  if (descend) {
    for (const auto& c : node.children) traverse(c, path.empty() ? c.name : path + "." + c.name, unwrap, out);
    return;
  }
  out.push_back({node.name, path.empty() ? node.name : path, node.type, node.total_params(), ends_with_activation(node)});
}

}  // namespace detail

// Every layer at the granularity selected by `unwrap`, parametric or not.
inline std::vector<Layer> traverse_layers(const ModuleNode& tree, const std::set<std::string>& unwrap = {}) {
  std::vector<Layer> out;
  detail::traverse(tree, "", unwrap, out);
  return out;
}

inline std::vector<Layer> parametric_only(std::vector<Layer> layers) {
  std::erase_if(layers, [](const Layer& l) { return !l.has_params(); });
  if (layers.empty()) throw ConfigError("no parametric layers");
  return layers;
}

// Recursive flattening: sequential containers and unwrap types are opened,
// everything else becomes one layer; only layers with parameters are kept.
inline std::vector<Layer> split_layers(const ModuleNode& tree, const std::set<std::string>& unwrap = {}) {
  return parametric_only(traverse_layers(tree, unwrap));
}

inline std::string to_string(NodeKind k) {
  switch (k) {
    case NodeKind::sequential_container: return "sequential";
    case NodeKind::user_unwrap_container: return "container";
    case NodeKind::leaf: return "leaf";
  }
  return "leaf";
}

inline void to_json(json& j, const ModuleNode& n) {
  j = json{{"name", n.name}, {"type", n.type}, {"kind", to_string(n.kind)}};
  if (n.params) j["params"] = n.params;
  if (n.activation) j["activation"] = true;
  if (!n.children.empty()) j["children"] = n.children;
}

inline void from_json(const json& j, ModuleNode& n) {
  static const std::set<std::string> allowed{"name", "type", "kind", "params", "activation", "children"};
  for (const auto& [k, v] : j.items())
    if (!allowed.contains(k)) throw ConfigError("module tree: unknown key '" + k + "'");
  n.name = j.value("name", std::string{});
  n.type = j.value("type", std::string{});
  const std::string kind = j.value("kind", std::string{j.contains("children") ? "container" : "leaf"});
  if (kind == "sequential")
    n.kind = NodeKind::sequential_container;
  else if (kind == "container")
    n.kind = NodeKind::user_unwrap_container;
  else if (kind == "leaf")
    n.kind = NodeKind::leaf;
  else
    throw ConfigError("module tree: unknown kind '" + kind + "'");
  if (n.type.empty()) n.type = n.kind == NodeKind::sequential_container ? "Sequential" : "Module";
  n.params = j.value("params", std::uint64_t{0});
  n.activation = j.value("activation", false);
  n.children = j.value("children", std::vector<ModuleNode>{});
}

inline void to_json(json& j, const Layer& l) {
  j = json{{"name", l.name}, {"path", l.path}, {"type", l.type}, {"param_count", l.param_count},
           {"ends_with_activation", l.ends_with_activation}};
}

}  // namespace freezehpo
