#include "loomfuse/shifts.hpp"

#include <algorithm>
#include <deque>

namespace loomfuse {

PipelineShifts compute_pipeline_shifts(const DataflowDAG& dag, const GroupingResult& grouping,
                                       const FusionResult& fusion, const RuleSet& rs) {
  size_t ndims = rs.loop_order.size();
  size_t ngroups = grouping.groups.size();
  PipelineShifts ps;
  ps.shift.assign(ngroups, std::vector<int>(ndims, 0));

  auto vertex_of_rap = [&](RapId r) {
    return fusion.vertex_of_group[grouping.group_of[r]];
  };

  // start from member spreads: a group must finish its trailing cells within
  // the base trip range
  for (size_t g = 0; g < ngroups; ++g) {
    const auto& cg = grouping.groups[g];
    if (cg.kind == RapKind::load) continue;  // loads read externals, never emitted
    auto mx = cg.max_disp(ndims);
    for (size_t d = 0; d < ndims; ++d) ps.shift[g][d] = std::max(0, mx[d]);
  }

  // propagate causality constraints producer-by-producer in reverse
  // topological order of the intra-nest group graph
  std::vector<std::set<int>> gadj(ngroups);
  for (const auto& e : dag.edges) {
    int gp = grouping.group_of[e.from], gc = grouping.group_of[e.to];
    if (gp == gc) continue;
    if (vertex_of_rap(e.from) != vertex_of_rap(e.to)) continue;
    if (dag.raps[e.from].kind == RapKind::load) continue;
    gadj[gp].insert(gc);
  }
  std::vector<int> indeg(ngroups, 0);
  for (size_t g = 0; g < ngroups; ++g)
    for (int c : gadj[g]) ++indeg[c];
  std::deque<int> ready;
  for (size_t g = 0; g < ngroups; ++g)
    if (indeg[g] == 0) ready.push_back(static_cast<int>(g));
  std::vector<int> order;
  while (!ready.empty()) {
    int v = ready.front();
    ready.pop_front();
    order.push_back(v);
    for (int w : gadj[v])
      if (--indeg[w] == 0) ready.push_back(w);
  }
  if (order.size() != ngroups) throw internal_error("cyclic group graph in shift computation");

  // gather constraints from edges; consumers are already final when walking
  // reverse topological order
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    int g = *it;
    if (grouping.groups[g].kind == RapKind::load) continue;
    for (const auto& e : dag.edges) {
      int gp = grouping.group_of[e.from];
      if (gp != g) continue;
      int gc = grouping.group_of[e.to];
      if (gc == gp) continue;
      if (vertex_of_rap(e.from) != vertex_of_rap(e.to)) continue;
      // read offset relative to the consumer callsite's cell
      const auto& term = dag.terms[e.term];
      const auto& cdisp = grouping.groups[gc].member_disp;
      // displacement of the consuming member
      std::vector<int> delta(ndims, 0);
      for (size_t m = 0; m < grouping.groups[gc].members.size(); ++m)
        if (grouping.groups[gc].members[m] == e.to) delta = cdisp[m];
      for (const auto& o : term.dims) {
        int r = o.offset - delta[o.dim];
        ps.shift[g][o.dim] = std::max(ps.shift[g][o.dim], ps.shift[gc][o.dim] + r);
      }
    }
  }
  return ps;
}

}  // namespace loomfuse
