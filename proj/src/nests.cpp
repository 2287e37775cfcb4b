#include "loomfuse/nests.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <sstream>

namespace loomfuse {

NestPtr NestNode::make_leaf(std::vector<RapId> raps) {
  auto n = std::make_shared<NestNode>();
  n->leaf = true;
  n->body = std::move(raps);
  return n;
}

NestPtr NestNode::make_loop(int dim, Range range, NestPtr prologue, NestPtr steady,
                            NestPtr epilogue) {
  if (!steady) throw internal_error("loop nest requires a steady-state child");
  auto n = std::make_shared<NestNode>();
  n->dim = dim;
  n->range = range;
  n->prologue = std::move(prologue);
  n->steady = std::move(steady);
  n->epilogue = std::move(epilogue);
  return n;
}

bool is_perfect(const NestPtr& nest) {
  if (!nest) return true;
  if (nest->leaf) return true;
  return !nest->prologue && !nest->epilogue && is_perfect(nest->steady);
}

int nest_depth(const NestPtr& nest) {
  if (!nest || nest->leaf) return 0;
  int d = 0;
  for (const NestPtr& c : {nest->prologue, nest->steady, nest->epilogue})
    if (c) d = std::max(d, nest_depth(c));
  return 1 + d;
}

void collect_leaf_raps(const NestPtr& nest, std::vector<RapId>& out) {
  if (!nest) return;
  if (nest->leaf) {
    out.insert(out.end(), nest->body.begin(), nest->body.end());
    return;
  }
  collect_leaf_raps(nest->prologue, out);
  collect_leaf_raps(nest->steady, out);
  collect_leaf_raps(nest->epilogue, out);
}

std::set<RapId> leaf_set(const NestPtr& nest) {
  std::vector<RapId> v;
  collect_leaf_raps(nest, v);
  return std::set<RapId>(v.begin(), v.end());
}

int irank(const NestPtr& nest, const RuleSet& rs) {
  if (!nest || nest->leaf) throw internal_error("irank of a leaf nest is undefined");
  return static_cast<int>(rs.loop_order.size()) - 1 - nest->dim;
}

namespace {
void perfect_dims(const NestPtr& nest, std::vector<int>& dims, std::vector<Range>& ranges,
                  NestPtr& leaf) {
  if (nest->leaf) {
    leaf = nest;
    return;
  }
  dims.push_back(nest->dim);
  ranges.push_back(nest->range);
  perfect_dims(nest->steady, dims, ranges, leaf);
}
}  // namespace

NestPtr permute_perfect(const NestPtr& nest, const std::vector<int>& order) {
  if (!is_perfect(nest)) throw internal_error("permute_perfect: nest is not perfect");
  if (nest->leaf) {
    if (!order.empty()) throw internal_error("permute_perfect: order does not match nest dims");
    return nest;
  }
  std::vector<int> dims;
  std::vector<Range> ranges;
  NestPtr leaf;
  perfect_dims(nest, dims, ranges, leaf);
  std::map<int, Range> by_dim;
  for (size_t i = 0; i < dims.size(); ++i) by_dim[dims[i]] = ranges[i];
  if (order.size() != dims.size())
    throw internal_error("permute_perfect: order does not match nest dims");
  for (int d : order)
    if (!by_dim.count(d)) throw internal_error("permute_perfect: order is not a permutation");
  NestPtr cur = leaf;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    cur = NestNode::make_loop(*it, by_dim[*it], nullptr, cur, nullptr);
  return cur;
}

namespace {

std::vector<int> rap_displacement(const Rap& rap, const DataflowDAG& dag, size_t ndims) {
  // displacement of a callsite = offsets of its anchor term (first output for
  // kernels and loads, first input for stores)
  std::vector<int> d(ndims, 0);
  TermId anchor = -1;
  if (!rap.out_terms.empty())
    anchor = rap.out_terms[0];
  else if (!rap.in_terms.empty())
    anchor = rap.in_terms[0];
  if (anchor >= 0)
    for (const auto& o : dag.terms[anchor].dims) d[o.dim] = o.offset;
  return d;
}

// Shape signature: identical for callsites differing only in displacement.
std::string shape_key(const Rap& rap, const DataflowDAG& dag, size_t ndims) {
  std::vector<int> base = rap_displacement(rap, dag, ndims);
  std::ostringstream os;
  os << static_cast<int>(rap.kind) << "|" << rap.kernel << "|" << rap.external;
  auto emit_term = [&](TermId t) {
    const auto& term = dag.terms[t];
    os << "|" << term.tag << ":" << term.ident;
    for (const auto& o : term.dims) os << "," << o.dim << "@" << (o.offset - base[o.dim]);
  };
  for (TermId t : rap.in_terms) emit_term(t);
  os << "|>";
  for (TermId t : rap.out_terms) emit_term(t);
  if (rap.kind != RapKind::kernel) {
    os << "|ext";
    for (const auto& s : rap.ext_slots)
      os << "," << s.dim << "@" << (s.dim >= 0 ? s.shift - base[s.dim] : s.shift);
  }
  // identifier bindings distinguish instances applied to different arrays
  for (const auto& [v, val] : rap.binding)
    if (!val.empty() && !isdigit(static_cast<unsigned char>(val[0]))) {
      bool is_ident = true;
      for (char c : val)
        if (c == '+' || c == '-') is_ident = false;
      if (is_ident) os << "|b:" << v << "=" << val;
    }
  return os.str();
}

bool quotient_acyclic(const DataflowDAG& dag, const std::vector<int>& group_of, int ngroups) {
  std::vector<std::set<int>> adj(ngroups);
  std::vector<int> indeg(ngroups, 0);
  for (const auto& e : dag.edges) {
    int a = group_of[e.from], b = group_of[e.to];
    if (a == b) {
      if (e.from != e.to) return false;  // dependency between members of one group
      continue;
    }
    if (adj[a].insert(b).second) ++indeg[b];
  }
  std::deque<int> ready;
  for (int i = 0; i < ngroups; ++i)
    if (indeg[i] == 0) ready.push_back(i);
  int seen = 0;
  while (!ready.empty()) {
    int v = ready.front();
    ready.pop_front();
    ++seen;
    for (int w : adj[v])
      if (--indeg[w] == 0) ready.push_back(w);
  }
  return seen == ngroups;
}

}  // namespace

GroupingResult group_callsites(const DataflowDAG& dag) {
  size_t ndims = 0;
  for (const auto& t : dag.terms)
    for (const auto& d : t.dims) ndims = std::max(ndims, static_cast<size_t>(d.dim) + 1);

  // bucket by shape, keeping first-seen order for determinism
  std::map<std::string, int> bucket_of;
  std::vector<std::vector<RapId>> buckets;
  for (const auto& rap : dag.raps) {
    std::string key = shape_key(rap, dag, ndims);
    auto it = bucket_of.find(key);
    if (it == bucket_of.end()) {
      bucket_of.emplace(key, static_cast<int>(buckets.size()));
      buckets.push_back({rap.id});
    } else {
      buckets[it->second].push_back(rap.id);
    }
  }

  auto assign = [&](const std::vector<std::vector<RapId>>& bs, std::vector<int>& group_of) {
    group_of.assign(dag.size(), -1);
    for (size_t g = 0; g < bs.size(); ++g)
      for (RapId r : bs[g]) group_of[r] = static_cast<int>(g);
  };

  std::vector<int> group_of;
  assign(buckets, group_of);
  while (!quotient_acyclic(dag, group_of, static_cast<int>(buckets.size()))) {
    // degrade: split the first multi-member bucket that participates in a
    // cycle into singletons and retry
    bool changed = false;
    for (size_t g = 0; g < buckets.size() && !changed; ++g) {
      if (buckets[g].size() < 2) continue;
      std::vector<std::vector<RapId>> trial;
      for (size_t h = 0; h < buckets.size(); ++h) {
        if (h == g)
          for (RapId r : buckets[h]) trial.push_back({r});
        else
          trial.push_back(buckets[h]);
      }
      std::vector<int> trial_of;
      assign(trial, trial_of);
      buckets = std::move(trial);
      group_of = std::move(trial_of);
      changed = true;
    }
    if (!changed)
      throw internal_error("grouping: cyclic quotient with singleton groups (dataflow cycle)");
  }

  GroupingResult res;
  res.group_of = group_of;
  for (size_t g = 0; g < buckets.size(); ++g) {
    CallsiteGroup cg;
    cg.id = static_cast<int>(g);
    const Rap& first = dag.raps[buckets[g][0]];
    cg.kind = first.kind;
    cg.kernel = first.kernel;
    cg.external = first.external;
    cg.members = buckets[g];
    std::set<int> dims;
    for (RapId r : buckets[g]) {
      cg.member_disp.push_back(rap_displacement(dag.raps[r], dag, ndims));
      IterationSpace s = iteration_space_of(dag.raps[r], dag);
      dims.insert(s.dims.begin(), s.dims.end());
    }
    cg.space.dims.assign(dims.begin(), dims.end());
    res.groups.push_back(std::move(cg));
  }
  return res;
}

std::vector<int> CallsiteGroup::min_disp(size_t ndims) const {
  std::vector<int> m(ndims, 0);
  if (!member_disp.empty()) {
    for (size_t d = 0; d < ndims; ++d) {
      int mn = member_disp[0][d];
      for (const auto& md : member_disp) mn = std::min(mn, md[d]);
      m[d] = mn;
    }
  }
  return m;
}

std::vector<int> CallsiteGroup::max_disp(size_t ndims) const {
  std::vector<int> m(ndims, 0);
  if (!member_disp.empty()) {
    for (size_t d = 0; d < ndims; ++d) {
      int mx = member_disp[0][d];
      for (const auto& md : member_disp) mx = std::max(mx, md[d]);
      m[d] = mx;
    }
  }
  return m;
}

std::vector<std::vector<int>> InestDAG::out_adj() const {
  std::vector<std::vector<int>> adj(vertices.size());
  for (const auto& e : edges) adj[e.from].push_back(e.to);
  return adj;
}

std::vector<int> InestDAG::topo_order() const {
  std::vector<int> indeg(vertices.size(), 0);
  auto adj = out_adj();
  for (const auto& e : edges) ++indeg[e.to];
  std::deque<int> ready;
  for (size_t i = 0; i < vertices.size(); ++i)
    if (indeg[i] == 0) ready.push_back(static_cast<int>(i));
  std::vector<int> order;
  while (!ready.empty()) {
    int v = ready.front();
    ready.pop_front();
    order.push_back(v);
    for (int w : adj[v])
      if (--indeg[w] == 0) ready.push_back(w);
  }
  if (order.size() != vertices.size())
    throw internal_error("iteration nest DAG is cyclic");
  return order;
}

InestDAG build_inest_dag(const DataflowDAG& dag, const GroupingResult& grouping,
                         const RuleSet& rs) {
  InestDAG g;
  for (const auto& cg : grouping.groups) {
    NestPtr nest = NestNode::make_leaf(cg.members);
    // perfect nest over the group's space, outermost dim first
    for (auto it = cg.space.dims.rbegin(); it != cg.space.dims.rend(); ++it)
      nest = NestNode::make_loop(*it, rs.ranges[*it], nullptr, nest, nullptr);
    // global order is already ascending-dim; permute_perfect asserts the invariant
    if (!cg.space.dims.empty()) nest = permute_perfect(nest, cg.space.dims);
    g.vertices.push_back(nest);
  }
  std::map<std::pair<int, int>, std::set<TermId>> quotient;
  for (const auto& e : dag.edges) {
    int a = grouping.group_of[e.from], b = grouping.group_of[e.to];
    if (a == b) continue;  // self-loops dropped
    quotient[{a, b}].insert(e.term);
  }
  for (auto& [key, terms] : quotient) g.edges.push_back({key.first, key.second, std::move(terms)});
  g.topo_order();  // grouping guarantees acyclicity; check anyway
  return g;
}

}  // namespace loomfuse
