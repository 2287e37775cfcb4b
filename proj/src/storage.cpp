#include "loomfuse/storage.hpp"

#include <algorithm>
#include <climits>
#include <functional>
#include <sstream>

namespace loomfuse {

namespace {

std::string sanitize(const std::string& tag, const std::string& ident) {
  return tag.empty() ? ident : tag + "_" + ident;
}

}  // namespace

VarTable build_variables(const RuleSet& rs, const DataflowDAG& dag,
                         const GroupingResult& grouping) {
  VarTable vt;
  std::set<std::string> taken;
  for (const auto& a : rs.axioms) taken.insert(a.external.name);
  for (const auto& g : rs.goals) taken.insert(g.external.name);

  auto get_var = [&](const ConcreteTerm& t) -> VarId {
    auto key = std::make_pair(t.tag, t.ident);
    auto it = vt.by_key.find(key);
    if (it != vt.by_key.end()) return it->second;
    Variable v;
    v.id = static_cast<VarId>(vt.vars.size());
    v.tag = t.tag;
    v.ident = t.ident;
    std::string base = sanitize(t.tag, t.ident);
    std::string name = base;
    for (int k = 2; taken.count(name); ++k) name = base + "_v" + std::to_string(k);
    taken.insert(name);
    v.name = name;
    v.type = "double";
    for (const auto& d : t.dims) v.dims.push_back(d.dim);
    vt.by_key.emplace(key, v.id);
    vt.vars.push_back(std::move(v));
    return vt.vars.back().id;
  };

  // materialize variables in term order for deterministic ids
  for (const auto& t : dag.terms) get_var(t);

  for (const auto& rap : dag.raps) {
    switch (rap.kind) {
      case RapKind::load: {
        Variable& v = vt.vars[get_var(dag.terms[rap.out_terms[0]])];
        if (!v.backing) {
          ExtBacking b;
          b.external = rap.external;
          b.slots = rap.ext_slots;
          for (const auto& ax : rs.axioms)
            if (ax.external.name == rap.external) b.type = ax.external.type;
          v.type = b.type.empty() ? v.type : b.type;
          v.backing = std::move(b);
          v.axiom_backed = true;
        }
        break;
      }
      case RapKind::store: {
        Variable& v = vt.vars[get_var(dag.terms[rap.in_terms[0]])];
        if (!v.backing) {
          // write-through: the producing kernel writes the goal buffer directly
          ExtBacking b;
          b.external = rap.external;
          b.slots = rap.ext_slots;
          for (const auto& g : rs.goals)
            if (g.external.name == rap.external) b.type = g.external.type;
          v.type = b.type.empty() ? v.type : b.type;
          v.backing = std::move(b);
        }
        break;
      }
      case RapKind::kernel: {
        const KernelRule& k = rs.kernels[rap.kernel];
        DeclInfo decl = parse_declaration(k.declaration);
        for (size_t oi = 0; oi < k.outputs.size(); ++oi) {
          Variable& v = vt.vars[get_var(dag.terms[rap.out_terms[oi]])];
          v.producer_group = grouping.group_of[rap.id];
          if (!v.axiom_backed && !v.backing) {
            if (const DeclParam* p = decl.param(k.outputs[oi].first)) v.type = p->type;
          }
        }
        break;
      }
    }
  }

  // associative carry: the carry input and the output share one buffer
  for (const auto& rap : dag.raps) {
    if (rap.kind != RapKind::kernel || !rs.kernels[rap.kernel].associative) continue;
    const ConcreteTerm& out = dag.terms[rap.out_terms[0]];
    VarId vo = vt.by_key.at({out.tag, out.ident});
    for (TermId in : rap.in_terms) {
      const ConcreteTerm& ti = dag.terms[in];
      if (ti.ident == out.ident && ti.dims == out.dims && !(ti == out)) {
        VarId vi = vt.by_key.at({ti.tag, ti.ident});
        if (vt.canonical(vi) != vt.canonical(vo)) vt.vars[vt.canonical(vi)].alias_of = vt.canonical(vo);
      }
    }
  }
  return vt;
}

std::string ReuseGraph::path_str() const {
  std::string s;
  for (size_t i = 0; i < ham_path.size(); ++i) {
    if (i) s += " -> ";
    const auto& off = nodes[ham_path[i]];
    s += "(";
    for (size_t k = off.size(); k-- > 0;) {
      s += (off[k] > 0 ? "+" : "") + std::to_string(off[k]);
      if (k) s += ",";
    }
    s += ")";
  }
  return s;
}

ReuseGraph reuse_graph(const std::string& identifier, const std::vector<std::vector<int>>& refs,
                       const std::vector<int>& dims) {
  ReuseGraph g;
  g.identifier = identifier;
  g.dims = dims;
  std::set<std::vector<int>> distinct(refs.begin(), refs.end());
  g.nodes.assign(distinct.begin(), distinct.end());
  // a is visited before b iff offset(a) >lex offset(b): a larger positive
  // offset reaches a given value first
  for (size_t a = 0; a < g.nodes.size(); ++a)
    for (size_t b = 0; b < g.nodes.size(); ++b)
      if (a != b && g.nodes[a] > g.nodes[b]) g.edges.emplace_back(a, b);
  g.ham_path.resize(g.nodes.size());
  for (size_t i = 0; i < g.nodes.size(); ++i) g.ham_path[i] = static_cast<int>(i);
  std::sort(g.ham_path.begin(), g.ham_path.end(),
            [&](int a, int b) { return g.nodes[a] > g.nodes[b]; });
  return g;
}

long StorageDescriptor::alloc_elems() const {
  if (external_backed) return 0;
  long n = 1;
  for (const auto& d : dims) {
    switch (d.role) {
      case DimRole::scoped:
        break;
      case DimRole::rotating:
        n *= d.span + (scheme == Scheme::vector_expanded ? vl : 0);
        break;
      case DimRole::full:
        n *= d.extent;
        break;
    }
  }
  return n;
}

void Footprint::add(std::vector<int> mono, long coeff) {
  std::sort(mono.begin(), mono.end());
  terms[mono] += coeff;
}

std::string Footprint::str(const RuleSet& rs) const {
  // degree-descending, then lexicographic
  std::vector<std::pair<std::vector<int>, long>> order(terms.begin(), terms.end());
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.first.size() != b.first.size()) return a.first.size() > b.first.size();
    return a.first < b.first;
  });
  std::string s;
  for (const auto& [mono, coeff] : order) {
    if (coeff == 0) continue;
    if (!s.empty()) s += " + ";
    std::string m;
    for (int d : mono) {
      if (!m.empty()) m += "*";
      m += "N_" + rs.loop_order[d];
    }
    if (m.empty())
      s += std::to_string(coeff);
    else if (coeff == 1)
      s += m;
    else
      s += std::to_string(coeff) + "*" + m;
  }
  return s.empty() ? "0" : s;
}

namespace {

struct VarUse {
  // everything indexed per global dim
  std::vector<long> agg_min, agg_max;      // all term offsets (reads and writes)
  std::vector<long> read_min, read_max;    // consumed term offsets
  std::vector<long> rel_min, rel_max;      // per-trip cells touched (shift-adjusted)
  std::vector<std::vector<int>> read_offsets;  // distinct consumed offset vectors
  std::vector<int> producer_groups;
  std::set<int> vertices;  // final vertices touching the variable
  bool has_reads = false;
  bool has_writes = false;
};

VarUse collect_use(VarId var, const VarTable& vars, const DataflowDAG& dag,
                   const GroupingResult& grouping, const FusionResult* fusion,
                   const PipelineShifts* shifts, const RuleSet& rs) {
  size_t nd = rs.loop_order.size();
  VarUse u;
  u.agg_min.assign(nd, LONG_MAX);
  u.agg_max.assign(nd, LONG_MIN);
  u.read_min.assign(nd, LONG_MAX);
  u.read_max.assign(nd, LONG_MIN);
  u.rel_min.assign(nd, LONG_MAX);
  u.rel_max.assign(nd, LONG_MIN);

  auto member_disp = [&](RapId r) {
    const auto& cg = grouping.groups[grouping.group_of[r]];
    for (size_t m = 0; m < cg.members.size(); ++m)
      if (cg.members[m] == r) return cg.member_disp[m];
    throw internal_error("rap missing from its group");
  };
  auto shift_of = [&](RapId r, int d) {
    return shifts ? (*shifts).shift[grouping.group_of[r]][d] : 0;
  };

  std::set<std::vector<int>> distinct_reads;
  for (const auto& rap : dag.raps) {
    for (size_t oi = 0; oi < rap.out_terms.size(); ++oi) {
      const ConcreteTerm& t = dag.terms[rap.out_terms[oi]];
      if (vars.of_term(t) != var) continue;
      u.has_writes = true;
      int g = grouping.group_of[rap.id];
      if (std::find(u.producer_groups.begin(), u.producer_groups.end(), g) ==
          u.producer_groups.end())
        u.producer_groups.push_back(g);
      if (fusion) u.vertices.insert(fusion->vertex_of_group[g]);
      auto delta = member_disp(rap.id);
      for (const auto& o : t.dims) {
        u.agg_min[o.dim] = std::min<long>(u.agg_min[o.dim], o.offset);
        u.agg_max[o.dim] = std::max<long>(u.agg_max[o.dim], o.offset);
        long rel = shift_of(rap.id, o.dim) + (o.offset - delta[o.dim]);
        u.rel_min[o.dim] = std::min(u.rel_min[o.dim], rel);
        u.rel_max[o.dim] = std::max(u.rel_max[o.dim], rel);
      }
    }
    for (TermId in : rap.in_terms) {
      const ConcreteTerm& t = dag.terms[in];
      if (vars.of_term(t) != var) continue;
      u.has_reads = true;
      int g = grouping.group_of[rap.id];
      if (fusion) u.vertices.insert(fusion->vertex_of_group[g]);
      auto delta = member_disp(rap.id);
      std::vector<int> off(nd, 0);
      for (const auto& o : t.dims) {
        off[o.dim] = o.offset;
        u.agg_min[o.dim] = std::min<long>(u.agg_min[o.dim], o.offset);
        u.agg_max[o.dim] = std::max<long>(u.agg_max[o.dim], o.offset);
        u.read_min[o.dim] = std::min<long>(u.read_min[o.dim], o.offset);
        u.read_max[o.dim] = std::max<long>(u.read_max[o.dim], o.offset);
        long rel = shift_of(rap.id, o.dim) + (o.offset - delta[o.dim]);
        u.rel_min[o.dim] = std::min(u.rel_min[o.dim], rel);
        u.rel_max[o.dim] = std::max(u.rel_max[o.dim], rel);
      }
      distinct_reads.insert(off);
    }
  }
  u.read_offsets.assign(distinct_reads.begin(), distinct_reads.end());
  return u;
}

// longest common prefix of enclosing-loop paths for all raps touching the
// variable within one vertex
std::vector<int> common_loop_prefix(VarId var, const VarTable& vars, const DataflowDAG& dag,
                                    const GroupingResult& grouping, const FusionResult& fusion) {
  std::vector<std::vector<int>> paths;
  std::vector<int> path;
  std::set<RapId> touching;
  for (const auto& rap : dag.raps) {
    bool touch = false;
    for (TermId t : rap.out_terms) touch |= vars.of_term(dag.terms[t]) == var;
    for (TermId t : rap.in_terms) touch |= vars.of_term(dag.terms[t]) == var;
    if (touch) touching.insert(rap.id);
  }

  std::function<void(const NestPtr&, std::vector<int>&)> walk = [&](const NestPtr& n,
                                                                    std::vector<int>& cur) {
    if (!n) return;
    if (n->leaf) {
      for (RapId r : n->body)
        if (touching.count(r)) {
          paths.push_back(cur);
          return;
        }
      return;
    }
    // prologue and epilogue execute outside the loop body
    walk(n->prologue, cur);
    cur.push_back(n->dim);
    walk(n->steady, cur);
    cur.pop_back();
    walk(n->epilogue, cur);
  };
  for (const auto& v : fusion.dag.vertices) {
    std::vector<int> cur;
    walk(v, cur);
  }
  if (paths.empty()) return {};
  std::vector<int> prefix = paths[0];
  for (const auto& p : paths) {
    size_t k = 0;
    while (k < prefix.size() && k < p.size() && prefix[k] == p[k]) ++k;
    prefix.resize(k);
  }
  return prefix;
}

StorageDescriptor analyze_var(VarId var, const VarTable& vars, const DataflowDAG& dag,
                              const GroupingResult& grouping, const FusionResult& fusion,
                              const PipelineShifts& shifts, const RuleSet& rs) {
  const Variable& v = vars.vars[var];
  StorageDescriptor sd;
  sd.var = var;
  VarUse use = collect_use(var, vars, dag, grouping, &fusion, &shifts, rs);

  bool cross_vertex = use.vertices.size() > 1;
  sd.external_backed = v.terminal();
  bool contractable = !sd.external_backed && !cross_vertex && use.has_writes;

  // spans per dim: reuse span from aggregated offsets, widened by the
  // pipeline window when producers run ahead
  std::map<int, long> span;
  for (int d : v.dims) {
    long agg = use.agg_max[d] - use.agg_min[d] + 1;
    long window = use.rel_max[d] - use.rel_min[d] + 1;
    span[d] = std::max(agg, window);
  }

  int rotating = -1;
  if (contractable) {
    for (int d : v.dims)
      if (span[d] > 1) {
        rotating = d;
        break;
      }
  }

  for (int d : v.dims) {
    DimStorage ds;
    ds.dim = d;
    long trips = rs.ranges[d].trips();
    long spread = use.agg_max[d] - use.agg_min[d];
    ds.extent = trips + spread;
    ds.base = rs.ranges[d].lo + use.agg_min[d];
    if (!contractable) {
      ds.role = DimRole::full;
    } else if (rotating == -1 || d < rotating) {
      ds.role = span[d] > 1 ? DimRole::full : DimRole::scoped;
    } else if (d == rotating) {
      ds.role = DimRole::rotating;
      ds.span = span[d];
    } else {
      ds.role = DimRole::full;
    }
    sd.dims.push_back(ds);
  }

  if (!contractable) {
    sd.scheme = Scheme::full;
  } else if (rotating == -1) {
    sd.scheme = Scheme::full;  // scalar temporary: every dim scoped
  } else {
    bool inner_full = false;
    for (const auto& ds : sd.dims)
      if (ds.dim > rotating && ds.role == DimRole::full) inner_full = true;
    sd.scheme = inner_full ? Scheme::outer_rotate : Scheme::inner_circular;
  }

  // declaration scope
  if (cross_vertex || use.vertices.empty()) {
    sd.decl_vertex = -1;
  } else {
    sd.decl_vertex = *use.vertices.begin();
    std::vector<int> prefix = common_loop_prefix(var, vars, dag, grouping, fusion);
    // the declaration must sit outside every loop the variable stays live
    // across
    std::vector<int> loops;
    for (int d : prefix) {
      bool windowed = false;
      for (int vd : v.dims)
        if (vd == d && span[vd] > 1) windowed = true;
      if (windowed) break;
      loops.push_back(d);
    }
    sd.decl_loops = std::move(loops);
  }
  return sd;
}

}  // namespace

std::vector<std::pair<long, long>> buffer_extents(VarId var, const VarTable& vars,
                                                  const DataflowDAG& dag, const RuleSet& rs) {
  // grouping-independent: aggregate term offsets directly
  const Variable& v = vars.vars[var];
  size_t nd = rs.loop_order.size();
  std::vector<long> mn(nd, 0), mx(nd, 0);
  std::vector<bool> seen(nd, false);
  auto touch = [&](const ConcreteTerm& t) {
    if (vars.of_term(t) != var) return;
    for (const auto& o : t.dims) {
      if (!seen[o.dim]) {
        mn[o.dim] = mx[o.dim] = o.offset;
        seen[o.dim] = true;
      } else {
        mn[o.dim] = std::min<long>(mn[o.dim], o.offset);
        mx[o.dim] = std::max<long>(mx[o.dim], o.offset);
      }
    }
  };
  for (const auto& t : dag.terms) touch(t);
  std::vector<std::pair<long, long>> out;
  for (int d : v.dims)
    out.emplace_back(rs.ranges[d].trips() + (mx[d] - mn[d]), rs.ranges[d].lo + mn[d]);
  return out;
}

Region enclosing_region(VarId var, const VarTable& vars, const DataflowDAG& dag,
                        const GroupingResult& grouping, const FusionResult& fusion,
                        const RuleSet& rs) {
  PipelineShifts shifts = compute_pipeline_shifts(dag, grouping, fusion, rs);
  StorageDescriptor sd = analyze_var(var, vars, dag, grouping, fusion, shifts, rs);
  return Region{sd.decl_vertex, sd.decl_loops};
}

StorageDescriptor contract(VarId var, const VarTable& vars, const DataflowDAG& dag,
                           const GroupingResult& grouping, const FusionResult& fusion,
                           const PipelineShifts& shifts, const RuleSet& rs) {
  return analyze_var(var, vars, dag, grouping, fusion, shifts, rs);
}

StorageDescriptor vector_expand(const StorageDescriptor& sd, int vl) {
  if (vl <= 0) throw internal_error("vector_expand: vector length must be positive");
  if (vl == 1) return sd;
  if (sd.scheme != Scheme::inner_circular) return sd;
  StorageDescriptor out = sd;
  out.scheme = Scheme::vector_expanded;
  out.vl = vl;
  return out;
}

AliasPlan alias_chain(const RuleSet& rs, const DataflowDAG& dag, const VarTable& vars,
                      const GroupingResult& grouping, const PipelineShifts& shifts) {
  AliasPlan plan;
  size_t nd = rs.loop_order.size();
  for (const auto& [in_ext, out_ext] : rs.aliases) {
    // chain from the terminal input across kernel inputs/outputs to the
    // terminal output
    std::set<RapId> start, target;
    for (const auto& rap : dag.raps) {
      if (rap.kind == RapKind::load && rap.external == in_ext) start.insert(rap.id);
      if (rap.kind == RapKind::store && rap.external == out_ext) target.insert(rap.id);
    }
    if (start.empty() || target.empty()) continue;
    std::set<RapId> reach;
    std::vector<RapId> stack(start.begin(), start.end());
    while (!stack.empty()) {
      RapId r = stack.back();
      stack.pop_back();
      if (!reach.insert(r).second) continue;
      for (RapId w : dag.out_adj[r]) stack.push_back(w);
    }
    bool interdependent = false;
    for (RapId t : target) interdependent |= reach.count(t) > 0;
    if (!interdependent) continue;

    // writer: the group producing the stored variable (write-through), or the
    // store group itself when the store materializes a copy
    for (RapId t : target) {
      const Rap& st = dag.raps[t];
      VarId sv = vars.of_term(dag.terms[st.in_terms[0]]);
      int writer_group;
      if (vars.vars[sv].backing && vars.vars[sv].backing->external == out_ext &&
          !vars.vars[sv].axiom_backed)
        writer_group = vars.vars[sv].producer_group;
      else
        writer_group = grouping.group_of[st.id];
      const auto& sw = shifts.shift[writer_group];

      // clobbered reads of any variable backed by the aliased input
      AliasPlan::Entry entry;
      entry.input_external = in_ext;
      entry.output_external = out_ext;
      entry.writer_shift = std::vector<int>(sw.begin(), sw.end());
      entry.writer_group = writer_group;
      std::set<std::vector<int>> offsets;
      for (const auto& rap : dag.raps) {
        if (rap.kind == RapKind::load) continue;
        for (TermId in : rap.in_terms) {
          VarId rv = vars.of_term(dag.terms[in]);
          if (rv < 0 || !vars.vars[rv].axiom_backed ||
              vars.vars[rv].backing->external != in_ext)
            continue;
          entry.var = rv;
          const auto& cg = grouping.groups[grouping.group_of[rap.id]];
          std::vector<int> delta(nd, 0);
          for (size_t m = 0; m < cg.members.size(); ++m)
            if (cg.members[m] == rap.id) delta = cg.member_disp[m];
          const auto& sc = shifts.shift[grouping.group_of[rap.id]];
          std::vector<int> eff(nd, 0);
          for (const auto& o : dag.terms[in].dims)
            eff[o.dim] = sc[o.dim] + (o.offset - delta[o.dim]) - sw[o.dim];
          // read at or after the write trip: lexicographically <= 0
          if (eff <= std::vector<int>(nd, 0)) offsets.insert(eff);
        }
      }
      if (entry.var < 0 || offsets.empty()) continue;
      entry.offsets.assign(offsets.rbegin(), offsets.rend());
      plan.entries.push_back(std::move(entry));
    }
  }
  return plan;
}

StoragePlan analyze_storage(const RuleSet& rs, const DataflowDAG& dag,
                            const GroupingResult& grouping, const FusionResult& fusion,
                            int vector_length) {
  StoragePlan plan;
  plan.vars = build_variables(rs, dag, grouping);
  plan.shifts = compute_pipeline_shifts(dag, grouping, fusion, rs);

  plan.descriptors.resize(plan.vars.vars.size());
  for (const auto& v : plan.vars.vars) {
    if (v.alias_of >= 0) continue;
    StorageDescriptor sd = analyze_var(v.id, plan.vars, dag, grouping, fusion, plan.shifts, rs);
    if (vector_length > 1) sd = vector_expand(sd, vector_length);
    plan.descriptors[v.id] = sd;
  }
  for (const auto& v : plan.vars.vars)
    if (v.alias_of >= 0) plan.descriptors[v.id] = plan.descriptors[plan.vars.canonical(v.id)];

  plan.alias = alias_chain(rs, dag, plan.vars, grouping, plan.shifts);
  for (const auto& entry : plan.alias.entries) {
    // shadow buffer covering the clobbered window
    const Variable& v = plan.vars.vars[entry.var];
    StorageDescriptor sh;
    sh.var = entry.var;
    sh.is_shadow = true;
    std::map<int, std::pair<int, int>> window;  // dim -> (min,max) of eff offsets
    for (int d : v.dims) window[d] = {0, 0};
    for (const auto& off : entry.offsets)
      for (int d : v.dims) {
        window[d].first = std::min(window[d].first, off[d]);
        window[d].second = std::max(window[d].second, off[d]);
      }
    int rotating = -1;
    for (int d : v.dims)
      if (window[d].second - window[d].first + 1 > 1) {
        rotating = d;
        break;
      }
    for (int d : v.dims) {
      DimStorage ds;
      ds.dim = d;
      long span = window[d].second - window[d].first + 1;
      ds.span = span;
      ds.extent = rs.ranges[d].trips();
      ds.base = rs.ranges[d].lo;
      if (d == rotating)
        ds.role = DimRole::rotating;
      else if (rotating != -1 && d > rotating)
        ds.role = DimRole::full;
      else
        ds.role = DimRole::scoped;
      sh.dims.push_back(ds);
    }
    if (rotating == -1) {
      sh.scheme = Scheme::full;  // single cell
      // give it one slot along the innermost dim
      if (!sh.dims.empty()) {
        sh.dims.back().role = DimRole::rotating;
        sh.dims.back().span = 1;
        sh.scheme = Scheme::inner_circular;
      }
    } else {
      bool inner_full = false;
      for (const auto& ds : sh.dims)
        if (ds.dim > rotating && ds.role == DimRole::full) inner_full = true;
      sh.scheme = inner_full ? Scheme::outer_rotate : Scheme::inner_circular;
    }
    sh.decl_vertex = -2;  // resolved at lowering alongside the writer
    plan.shadows.push_back(sh);
  }

  // leading-order footprint: full dims contribute their trip-count symbols,
  // rotating dims their window constant
  std::set<std::string> counted_externals;
  for (const auto& v : plan.vars.vars) {
    if (v.alias_of >= 0) continue;
    const StorageDescriptor& sd = plan.descriptors[v.id];
    if (v.terminal()) {
      if (!counted_externals.insert(v.backing->external).second) continue;
      std::vector<int> mono;
      for (const auto& s : v.backing->slots)
        if (s.dim >= 0) mono.push_back(s.dim);
      plan.footprint.add(mono, 1);
      continue;
    }
    std::vector<int> mono;
    long coeff = 1;
    for (const auto& d : sd.dims) {
      if (d.role == DimRole::full) mono.push_back(d.dim);
      if (d.role == DimRole::rotating) coeff *= d.span + (sd.scheme == Scheme::vector_expanded ? sd.vl : 0);
    }
    plan.footprint.add(mono, coeff);
  }
  for (const auto& sh : plan.shadows) {
    std::vector<int> mono;
    long coeff = 1;
    for (const auto& d : sh.dims) {
      if (d.role == DimRole::full) mono.push_back(d.dim);
      if (d.role == DimRole::rotating) coeff *= d.span;
    }
    plan.footprint.add(mono, coeff);
  }
  return plan;
}

}  // namespace loomfuse
