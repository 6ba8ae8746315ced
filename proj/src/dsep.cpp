#include "bnsens/dsep.hpp"

#include <array>
#include <utility>

namespace bnsens {

std::vector<bool> d_connected(const std::vector<std::vector<int>>& parents, const std::vector<int>& sources,
                              const std::vector<int>& observed) {
  const int n = static_cast<int>(parents.size());
  std::vector<std::vector<int>> children(n);
  for (int v = 0; v < n; ++v)
    for (int p : parents[v]) children[p].push_back(v);

  std::vector<bool> is_obs(n, false);
  for (int v : observed) is_obs[v] = true;

  // Observed nodes and their ancestors: where a v-structure is active.
  std::vector<bool> anc_obs(n, false);
  std::vector<int> stack(observed.begin(), observed.end());
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    if (anc_obs[v]) continue;
    anc_obs[v] = true;
    for (int p : parents[v]) stack.push_back(p);
  }

  // Traversal state: (node, arrived from a child = up / from a parent = down).
  enum Dir { kUp = 0, kDown = 1 };
  std::vector<std::array<bool, 2>> visited(n, {false, false});
  std::vector<bool> reach(n, false);
  std::vector<std::pair<int, Dir>> todo;
  for (int s : sources) todo.emplace_back(s, kUp);
  while (!todo.empty()) {
    auto [v, dir] = todo.back();
    todo.pop_back();
    if (visited[v][dir]) continue;
    visited[v][dir] = true;
    if (!is_obs[v]) reach[v] = true;
    if (dir == kUp && !is_obs[v]) {
      for (int p : parents[v]) todo.emplace_back(p, kUp);
      for (int c : children[v]) todo.emplace_back(c, kDown);
    } else if (dir == kDown) {
      if (!is_obs[v])
        for (int c : children[v]) todo.emplace_back(c, kDown);
      if (anc_obs[v])
        for (int p : parents[v]) todo.emplace_back(p, kUp);
    }
  }
  return reach;
}

bool d_separated(const std::vector<std::vector<int>>& parents, const std::vector<int>& xs, const std::vector<int>& ys,
                 const std::vector<int>& observed) {
  const auto reach = d_connected(parents, xs, observed);
  for (int y : ys)
    if (reach[y]) return false;
  return true;
}

}  // namespace bnsens
