#include "loomfuse/fusion.hpp"

#include <algorithm>
#include <deque>

namespace loomfuse {

RapClass classify_rap(const Rap& rap, const DataflowDAG& dag) {
  auto rank = [&](TermId t) { return static_cast<int>(dag.terms[t].dims.size()); };
  int out_rank = 0;
  for (TermId t : rap.out_terms) out_rank = std::max(out_rank, rank(t));
  if (rap.in_terms.empty()) return RapClass::pointwise;
  int in_max = 0, in_min = INT_MAX;
  for (TermId t : rap.in_terms) {
    in_max = std::max(in_max, rank(t));
    in_min = std::min(in_min, rank(t));
  }
  if (in_max > out_rank) return RapClass::reduction;
  if (in_min < out_rank) return RapClass::broadcast;
  return RapClass::pointwise;
}

std::vector<SplitCut> detect_concave_split(const InestDAG& g, const DataflowDAG& dag,
                                           const GroupingResult& grouping) {
  auto out_rank = [&](const Rap& r) {
    int m = 0;
    for (TermId t : r.out_terms) m = std::max(m, static_cast<int>(dag.terms[t].dims.size()));
    return m;
  };

  std::vector<SplitCut> cuts;
  auto inest_adj = g.out_adj();
  for (const auto& red : dag.raps) {
    if (classify_rap(red, dag) != RapClass::reduction) continue;
    int reduced_rank = out_rank(red);

    // transitive consumers of the reduction in the dataflow dag
    std::vector<char> seen(dag.size(), 0);
    std::vector<RapId> stack;
    for (RapId w : dag.out_adj[red.id]) stack.push_back(w);
    std::vector<RapId> broadcasts;
    while (!stack.empty()) {
      RapId v = stack.back();
      stack.pop_back();
      if (seen[v]) continue;
      seen[v] = 1;
      const Rap& r = dag.raps[v];
      if (classify_rap(r, dag) == RapClass::broadcast && out_rank(r) > reduced_rank)
        broadcasts.push_back(v);
      for (RapId w : dag.out_adj[v]) stack.push_back(w);
    }
    if (broadcasts.empty()) continue;

    // downstream = inest vertices reachable from any qualifying broadcast
    SplitCut cut;
    cut.reduction = red.id;
    std::vector<char> down(g.vertices.size(), 0);
    std::vector<int> vstack;
    for (RapId b : broadcasts) vstack.push_back(grouping.group_of[b]);
    while (!vstack.empty()) {
      int v = vstack.back();
      vstack.pop_back();
      if (down[v]) continue;
      down[v] = 1;
      for (int w : inest_adj[v]) vstack.push_back(w);
    }
    for (size_t i = 0; i < g.vertices.size(); ++i)
      if (down[i]) cut.downstream.insert(static_cast<int>(i));

    // upstream = rest of the weak component around the cut
    {
      std::vector<std::set<int>> undirected(g.vertices.size());
      for (const auto& e : g.edges) {
        undirected[e.from].insert(e.to);
        undirected[e.to].insert(e.from);
      }
      std::vector<char> comp(g.vertices.size(), 0);
      std::vector<int> cstack(cut.downstream.begin(), cut.downstream.end());
      while (!cstack.empty()) {
        int v = cstack.back();
        cstack.pop_back();
        if (comp[v]) continue;
        comp[v] = 1;
        for (int w : undirected[v]) cstack.push_back(w);
      }
      for (size_t i = 0; i < g.vertices.size(); ++i)
        if (comp[i] && !down[i]) cut.upstream.insert(static_cast<int>(i));
    }

    for (size_t ei = 0; ei < g.edges.size(); ++ei)
      if (!down[g.edges[ei].from] && down[g.edges[ei].to]) cut.edges.push_back(ei);
    cuts.push_back(std::move(cut));
  }
  return cuts;
}

namespace {

std::set<RapId> phase_set(const NestPtr& n) { return n ? leaf_set(n) : std::set<RapId>{}; }

std::set<RapId> minus(std::set<RapId> a, const std::set<RapId>& b) {
  for (RapId r : b) a.erase(r);
  return a;
}

int rank_or_leaf(const NestPtr& n, const RuleSet& rs) {
  if (!n || n->leaf) return -1;
  return irank(n, rs);
}

}  // namespace

FuseOutcome fuse_inest(const NestPtr& a, const NestPtr& b, const DataflowDAG& dag,
                       const RuleSet& rs) {
  if (!a) return {b};
  if (!b) return {a};

  if (a->leaf && b->leaf) {
    // statements within one trip; relative order resolved at lowering
    std::vector<RapId> body = a->body;
    body.insert(body.end(), b->body.begin(), b->body.end());
    return {NestNode::make_leaf(std::move(body))};
  }

  int ra = rank_or_leaf(a, rs), rb = rank_or_leaf(b, rs);
  if (ra == rb) {
    if (!(a->range == b->range)) return {nullptr};  // range mismatch on shared identifier
    auto prlg_only_a = minus(phase_set(a->prologue), phase_set(a->steady));
    auto prlg_only_b = minus(phase_set(b->prologue), phase_set(b->steady));
    auto eplg_only_a = minus(phase_set(a->epilogue), phase_set(a->steady));
    auto eplg_only_b = minus(phase_set(b->epilogue), phase_set(b->steady));
    if (dataflow_le(prlg_only_a, phase_set(b->steady), dag) &&
        dataflow_le(prlg_only_b, phase_set(a->steady), dag) &&
        dataflow_le(phase_set(a->steady), eplg_only_b, dag) &&
        dataflow_le(phase_set(b->steady), eplg_only_a, dag)) {
      FuseOutcome p = fuse_inest(a->prologue, b->prologue, dag, rs);
      if (a->prologue && b->prologue && p.unfusable()) return {nullptr};
      FuseOutcome s = fuse_inest(a->steady, b->steady, dag, rs);
      if (s.unfusable()) return {nullptr};
      FuseOutcome e = fuse_inest(a->epilogue, b->epilogue, dag, rs);
      if (a->epilogue && b->epilogue && e.unfusable()) return {nullptr};
      return {NestNode::make_loop(a->dim, a->range, p.fused, s.fused, e.fused)};
    }
    return {nullptr};
  }

  // Differing ranks: the lower-ranked nest fuses into the higher-ranked
  // nest's prologue or epilogue, by dataflow order. Prologue preferred when
  // both placements are legal.
  NestPtr low = ra < rb ? a : b;
  NestPtr high = ra < rb ? b : a;
  std::set<RapId> low_set = phase_set(low);
  bool before = dataflow_le(low_set, phase_set(high->steady), dag);
  bool after = dataflow_le(phase_set(high->epilogue), low_set, dag) &&
               dataflow_le(phase_set(high->steady), low_set, dag);
  if (before) {
    FuseOutcome p = fuse_inest(high->prologue, low, dag, rs);
    if (!p.unfusable())
      return {NestNode::make_loop(high->dim, high->range, p.fused, high->steady, high->epilogue)};
  }
  if (after) {
    FuseOutcome e = fuse_inest(high->epilogue, low, dag, rs);
    if (!e.unfusable())
      return {NestNode::make_loop(high->dim, high->range, high->prologue, high->steady, e.fused)};
  }
  return {nullptr};
}

namespace {

struct Driver {
  const InestDAG& g0;
  const DataflowDAG& dag;
  const RuleSet& rs;
  const FusionOptions& opts;

  std::vector<int> parent;  // union-find over initial vertices
  std::vector<NestPtr> nest_of_root;
  std::set<std::pair<int, int>> forbidden;  // root-pair separation (by initial vertex id)
  std::set<size_t> severed;                 // initial edge indices

  int find(int v) { return parent[v] == v ? v : parent[v] = find(parent[v]); }

  bool pair_forbidden(int ra, int rb) {
    for (const auto& [x, y] : forbidden) {
      int fx = find(x), fy = find(y);
      if ((fx == ra && fy == rb) || (fx == rb && fy == ra)) return true;
    }
    return false;
  }

  struct QEdge {
    int from, to;
    std::set<TermId> terms;
    std::vector<size_t> originals;
  };

  std::vector<QEdge> quotient_edges() {
    std::map<std::pair<int, int>, size_t> index;
    std::vector<QEdge> out;
    for (size_t i = 0; i < g0.edges.size(); ++i) {
      int a = find(g0.edges[i].from), b = find(g0.edges[i].to);
      if (a == b) continue;
      auto [it, fresh] = index.emplace(std::make_pair(a, b), out.size());
      if (fresh) out.push_back({a, b, {}, {}});
      out[it->second].terms.insert(g0.edges[i].terms.begin(), g0.edges[i].terms.end());
      out[it->second].originals.push_back(i);
    }
    return out;
  }

  std::vector<int> roots() {
    std::set<int> r;
    for (size_t i = 0; i < g0.vertices.size(); ++i) r.insert(find(static_cast<int>(i)));
    return {r.begin(), r.end()};
  }

  // topological order of quotient roots; throws on cycle
  std::vector<int> topo(const std::vector<QEdge>& qe) {
    auto rts = roots();
    std::map<int, int> indeg;
    std::map<int, std::vector<int>> adj;
    for (int r : rts) indeg[r] = 0;
    for (const auto& e : qe) {
      adj[e.from].push_back(e.to);
      ++indeg[e.to];
    }
    std::deque<int> ready;
    for (int r : rts)
      if (indeg[r] == 0) ready.push_back(r);
    std::vector<int> order;
    while (!ready.empty()) {
      int v = ready.front();
      ready.pop_front();
      order.push_back(v);
      for (int w : adj[v])
        if (--indeg[w] == 0) ready.push_back(w);
    }
    if (order.size() != rts.size())
      throw internal_error("fusion introduced a cycle in the iteration nest DAG");
    return order;
  }

  bool edge_severed(const QEdge& e) {
    for (size_t i : e.originals)
      if (severed.count(i)) return true;
    return false;
  }

  // would merging a and b close a cycle through a third vertex?
  bool creates_cycle(int a, int b, const std::vector<QEdge>& qe) {
    std::map<int, std::vector<int>> adj;
    for (const auto& e : qe) adj[e.from].push_back(e.to);
    std::vector<int> stack;
    for (int w : adj[a])
      if (w != b) stack.push_back(w);
    std::set<int> seen;
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      if (!seen.insert(v).second) continue;
      if (v == b) return true;
      for (int w : adj[v]) stack.push_back(w);
    }
    return false;
  }

  void sever_below(int vert, const std::vector<QEdge>& qe) {
    // All vertices reachable from the candidate vertex form the downstream
    // subgraph; cut every separating edge into it.
    std::map<int, std::vector<int>> adj;
    for (const auto& e : qe) adj[e.from].push_back(e.to);
    std::set<int> down;
    std::vector<int> stack{vert};
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      if (!down.insert(v).second) continue;
      for (int w : adj[v]) stack.push_back(w);
    }
    for (size_t i = 0; i < g0.edges.size(); ++i) {
      int a = find(g0.edges[i].from), b = find(g0.edges[i].to);
      if (a == b) continue;
      if (!down.count(a) && down.count(b)) {
        severed.insert(i);
        forbidden.emplace(g0.edges[i].from, g0.edges[i].to);
      }
    }
  }

  void check_acyclic() { topo(quotient_edges()); }

  FusionResult run() {
    parent.resize(g0.vertices.size());
    nest_of_root.resize(g0.vertices.size());
    for (size_t i = 0; i < g0.vertices.size(); ++i) {
      parent[i] = static_cast<int>(i);
      nest_of_root[i] = g0.vertices[i];
    }

    auto splits = detect_concave_split(g0, dag, /*grouping passed by caller*/ grouping_);
    for (const auto& cut : splits)
      for (size_t ei : cut.edges) {
        severed.insert(ei);
        forbidden.emplace(g0.edges[ei].from, g0.edges[ei].to);
      }

    bool changed = true;
    while (changed) {
      changed = false;
      auto qe = quotient_edges();
      auto order = topo(qe);
      std::map<int, int> topo_index;
      for (size_t i = 0; i < order.size(); ++i) topo_index[order[i]] = static_cast<int>(i);

      for (int vert : order) {
        // incoming edges sorted by (source topological index, term name)
        std::vector<const QEdge*> incoming;
        for (const auto& e : qe)
          if (e.to == vert) incoming.push_back(&e);
        std::sort(incoming.begin(), incoming.end(), [&](const QEdge* x, const QEdge* y) {
          if (topo_index[x->from] != topo_index[y->from])
            return topo_index[x->from] < topo_index[y->from];
          return *x->terms.begin() < *y->terms.begin();
        });
        for (const QEdge* e : incoming) {
          int src = find(e->from), dst = find(vert);
          if (src == dst) continue;
          if (edge_severed(*e) || pair_forbidden(src, dst)) continue;
          if (creates_cycle(src, dst, qe)) continue;  // stays a plain edge
          FuseOutcome out = fuse_inest(nest_of_root[dst], nest_of_root[src], dag, rs);
          if (out.unfusable()) {
            sever_below(dst, qe);
            continue;
          }
          parent[src] = dst;
          nest_of_root[dst] = out.fused;
          if (opts.check_each_step) check_acyclic();
          changed = true;
          break;  // quotient changed; recompute edge lists
        }
        if (changed) break;
      }
    }

    FusionResult res;
    res.splits = std::move(splits);
    auto qe = quotient_edges();
    auto order = topo(qe);
    std::map<int, int> final_index;
    for (size_t i = 0; i < order.size(); ++i) final_index[order[i]] = static_cast<int>(i);
    for (int r : order) res.dag.vertices.push_back(nest_of_root[r]);
    for (const auto& e : qe)
      res.dag.edges.push_back({final_index[e.from], final_index[e.to], e.terms});
    res.vertex_of_group.resize(g0.vertices.size());
    for (size_t i = 0; i < g0.vertices.size(); ++i)
      res.vertex_of_group[i] = final_index[find(static_cast<int>(i))];
    return res;
  }

  GroupingResult grouping_;
};

}  // namespace

FusionResult fuse_inest_dag(const InestDAG& g, const DataflowDAG& dag,
                            const GroupingResult& grouping, const RuleSet& rs,
                            const FusionOptions& opts) {
  Driver d{g, dag, rs, opts};
  d.grouping_ = grouping;
  return d.run();
}

}  // namespace loomfuse
