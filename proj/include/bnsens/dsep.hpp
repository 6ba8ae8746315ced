#pragma once

#include <vector>

namespace bnsens {

// Nodes d-connected to any of `sources` given `observed` in the DAG described
// by parent lists (reachability over active trails). A source is always
// reachable from itself unless it is observed.
std::vector<bool> d_connected(const std::vector<std::vector<int>>& parents, const std::vector<int>& sources,
                              const std::vector<int>& observed);

bool d_separated(const std::vector<std::vector<int>>& parents, const std::vector<int>& xs, const std::vector<int>& ys,
                 const std::vector<int>& observed);

}  // namespace bnsens
