#include "loomfuse/inference.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

namespace loomfuse {

std::string ConcreteTerm::str(const RuleSet& rs) const {
  std::string s;
  if (!tag.empty()) s += tag + "(";
  s += ident;
  for (const auto& d : dims) {
    s += "[";
    s += d.dim < static_cast<int>(rs.loop_order.size()) ? rs.loop_order[d.dim] : "?";
    if (d.offset > 0) s += "+" + std::to_string(d.offset);
    if (d.offset < 0) s += std::to_string(d.offset);
    s += "]";
  }
  if (!tag.empty()) s += ")";
  return s;
}

std::string Rap::label(const RuleSet& rs) const {
  switch (kind) {
    case RapKind::load:
      return "load " + external;
    case RapKind::store:
      return "store " + external;
    case RapKind::kernel: {
      std::string s = rs.kernels[kernel].name;
      if (!binding.empty()) {
        s += " {";
        for (size_t i = 0; i < binding.size(); ++i) {
          if (i) s += ", ";
          s += binding[i].first + "=" + binding[i].second;
        }
        s += "}";
      }
      return s;
    }
  }
  return "?";
}

TermId Idag::find(const ConcreteTerm& t) const {
  for (size_t i = 0; i < terms.size(); ++i)
    if (terms[i] == t) return static_cast<TermId>(i);
  return -1;
}

void DataflowDAG::build_adjacency() {
  out_adj.assign(raps.size(), {});
  in_adj.assign(raps.size(), {});
  for (const auto& e : edges) {
    out_adj[e.from].push_back(e.to);
    in_adj[e.to].push_back(e.from);
  }
}

std::vector<RapId> DataflowDAG::topo_order() const {
  std::vector<int> indeg(raps.size(), 0);
  for (const auto& e : edges) ++indeg[e.to];
  std::deque<RapId> ready;
  for (size_t i = 0; i < raps.size(); ++i)
    if (indeg[i] == 0) ready.push_back(static_cast<RapId>(i));
  std::vector<RapId> order;
  while (!ready.empty()) {
    RapId v = ready.front();
    ready.pop_front();
    order.push_back(v);
    for (RapId w : out_adj[v])
      if (--indeg[w] == 0) ready.push_back(w);
  }
  if (order.size() != raps.size()) {
    std::string witness;
    for (size_t i = 0; i < raps.size(); ++i)
      if (indeg[i] > 0) witness += (witness.empty() ? "" : ", ") + std::to_string(i);
    throw internal_error("dataflow graph contains a cycle through raps {" + witness + "}");
  }
  return order;
}

namespace {

struct BoundVal {
  bool is_ident = false;
  std::string ident;
  int dim = -1;
  int offset = 0;
  bool operator==(const BoundVal&) const = default;
};

using Binding = std::map<std::string, BoundVal>;

struct InferCtx {
  const RuleSet& rs;
  DiagList& diags;
  Idag idag;
  std::map<ConcreteTerm, TermId> term_ids;
  std::map<std::string, RapId> rap_memo;  // kernel + binding key
  std::map<std::pair<std::string, std::string>, std::vector<int>> dim_signature;
  std::vector<bool> on_stack;
  bool failed = false;

  static constexpr int kDepthCap = 64;

  TermId intern(const ConcreteTerm& t) {
    auto it = term_ids.find(t);
    if (it != term_ids.end()) return it->second;
    TermId id = static_cast<TermId>(idag.terms.size());
    idag.terms.push_back(t);
    idag.producer.push_back(-1);
    idag.consumers.emplace_back();
    on_stack.push_back(false);
    term_ids.emplace(t, id);
    return id;
  }

  bool check_signature(const ConcreteTerm& t, SourceLoc loc) {
    std::vector<int> sig;
    for (const auto& d : t.dims) sig.push_back(d.dim);
    auto key = std::make_pair(t.tag, t.ident);
    auto [it, fresh] = dim_signature.emplace(key, sig);
    if (!fresh && it->second != sig) {
      error(loc, "identifier '" + t.ident + "' used with inconsistent iteration dimensions");
      return false;
    }
    return true;
  }

  void error(SourceLoc loc, const std::string& msg) {
    if (!failed) diags.error(loc, msg);
    failed = true;
  }
};

std::string binding_key(int kernel, const Binding& b) {
  std::ostringstream os;
  os << kernel;
  for (const auto& [v, val] : b) {
    os << "|" << v << "=";
    if (val.is_ident)
      os << val.ident;
    else
      os << val.dim << "+" << val.offset;
  }
  return os.str();
}

// Match a concrete term against a pattern, extending `b`. Purely syntactic;
// returns false without touching diagnostics when the shapes do not line up.
bool match_pattern(InferCtx& ctx, const ConcreteTerm& t, const TermPattern& p, Binding& b) {
  if (t.tag != p.tag) return false;
  if (t.dims.size() != p.subscripts.size()) return false;
  Binding trial = b;
  if (p.ident_is_free()) {
    auto it = trial.find(p.ident);
    BoundVal v{true, t.ident, -1, 0};
    if (it == trial.end())
      trial.emplace(p.ident, v);
    else if (!(it->second == v))
      return false;
  } else if (p.ident != t.ident) {
    return false;
  }
  for (size_t i = 0; i < p.subscripts.size(); ++i) {
    const OffsetExpr& s = p.subscripts[i];
    const DimOffset& d = t.dims[i];
    if (s.is_free()) {
      BoundVal v{false, "", d.dim, d.offset - s.displacement};
      auto it = trial.find(s.var);
      if (it == trial.end())
        trial.emplace(s.var, v);
      else if (!(it->second == v))
        return false;
    } else {
      int dim = ctx.rs.dim_of(s.var);
      if (dim != d.dim || d.offset != s.displacement) return false;
    }
  }
  b = std::move(trial);
  return true;
}

// Instantiate a pattern under a binding. `sweep` allows unbound subscript
// variables to bind to their like-named loop dimension at offset zero
// (reduction inputs that range over the whole space).
std::optional<ConcreteTerm> instantiate(InferCtx& ctx, const TermPattern& p, Binding& b,
                                        bool sweep, const std::string& kernel_name) {
  ConcreteTerm t;
  t.tag = p.tag;
  if (p.ident_is_free()) {
    auto it = b.find(p.ident);
    if (it == b.end() || !it->second.is_ident) {
      ctx.error(p.loc, "kernel '" + kernel_name + "': identifier variable '" + p.ident +
                           "' is not determined by the demanded output");
      return std::nullopt;
    }
    t.ident = it->second.ident;
  } else {
    t.ident = p.ident;
  }
  for (const auto& s : p.subscripts) {
    DimOffset d;
    if (s.is_free()) {
      auto it = b.find(s.var);
      if (it == b.end()) {
        if (!sweep) {
          ctx.error(p.loc, "kernel '" + kernel_name + "': free variable '" + s.var +
                               "' is not determined by the demanded output (only associative "
                               "kernels may sweep unbound variables)");
          return std::nullopt;
        }
        int dim = ctx.rs.dim_of(s.base_name());
        if (dim < 0) {
          ctx.error(p.loc, "kernel '" + kernel_name + "': swept variable '" + s.var +
                               "' must be named after a loop variable");
          return std::nullopt;
        }
        it = b.emplace(s.var, BoundVal{false, "", dim, 0}).first;
      }
      if (it->second.is_ident) {
        ctx.error(p.loc, "variable '" + s.var + "' used both as identifier and subscript");
        return std::nullopt;
      }
      d.dim = it->second.dim;
      d.offset = it->second.offset + s.displacement;
    } else {
      d.dim = ctx.rs.dim_of(s.var);
      d.offset = s.displacement;
    }
    t.dims.push_back(d);
  }
  std::sort(t.dims.begin(), t.dims.end(),
            [](const DimOffset& a, const DimOffset& c) { return a.dim < c.dim; });
  for (size_t i = 0; i + 1 < t.dims.size(); ++i)
    if (t.dims[i].dim == t.dims[i + 1].dim) {
      ctx.error(p.loc, "pattern " + p.str() + " binds the same iteration dimension twice");
      return std::nullopt;
    }
  if (!ctx.check_signature(t, p.loc)) return std::nullopt;
  return t;
}

bool demand(InferCtx& ctx, TermId tid, int depth);

// Creates the rap for `kernel` producing the demanded term (matched against
// output pattern `out_idx`), then demands its inputs.
bool apply_kernel(InferCtx& ctx, TermId tid, int kernel, size_t out_idx, Binding b, int depth) {
  const KernelRule& k = ctx.rs.kernels[kernel];
  std::string key = binding_key(kernel, b);
  if (auto it = ctx.rap_memo.find(key); it != ctx.rap_memo.end()) {
    // shared instance; producer links were registered when it was created
    return ctx.idag.producer[tid] >= 0;
  }

  Rap rap;
  rap.kind = RapKind::kernel;
  rap.kernel = kernel;

  std::vector<TermId> outs(k.outputs.size(), -1);
  for (size_t i = 0; i < k.outputs.size(); ++i) {
    auto t = instantiate(ctx, k.outputs[i].second, b, false, k.name);
    if (!t) return false;
    outs[i] = ctx.intern(*t);
  }
  std::vector<TermId> ins(k.inputs.size(), -1);
  for (size_t i = 0; i < k.inputs.size(); ++i) {
    auto t = instantiate(ctx, k.inputs[i].second, b, k.associative, k.name);
    if (!t) return false;
    ins[i] = ctx.intern(*t);
  }

  rap.id = static_cast<RapId>(ctx.idag.raps.size());
  rap.in_terms = ins;
  rap.out_terms = outs;
  for (const auto& [v, val] : b) {
    if (val.is_ident)
      rap.binding.emplace_back(v, val.ident);
    else {
      std::string s = ctx.rs.loop_order[val.dim];
      if (val.offset > 0) s += "+" + std::to_string(val.offset);
      if (val.offset < 0) s += std::to_string(val.offset);
      rap.binding.emplace_back(v, s);
    }
  }

  for (TermId out : outs) {
    if (ctx.idag.producer[out] >= 0) {
      ctx.error(k.loc, "term " + ctx.idag.terms[out].str(ctx.rs) +
                           " acquires a second producer via kernel '" + k.name + "'");
      return false;
    }
    ctx.idag.producer[out] = rap.id;
  }
  ctx.idag.raps.push_back(rap);
  ctx.rap_memo.emplace(key, rap.id);

  if (k.associative) {
    if (outs.size() != 1) {
      ctx.error(k.loc, "associative kernel '" + k.name + "' must have exactly one output");
      return false;
    }
    bool carry = false;
    for (TermId in : ins) {
      const auto& ti = ctx.idag.terms[in];
      const auto& to = ctx.idag.terms[outs[0]];
      if (ti.ident == to.ident && ti.dims == to.dims && !(ti == to)) carry = true;
    }
    if (!carry) {
      ctx.error(k.loc, "associative kernel '" + k.name +
                           "' lacks a carry input matching its output term");
      return false;
    }
  }

  for (size_t i = 0; i < ins.size(); ++i) {
    ctx.idag.consumers[ins[i]].push_back(rap.id);
    if (!demand(ctx, ins[i], depth + 1)) return false;
  }
  return true;
}

bool demand(InferCtx& ctx, TermId tid, int depth) {
  if (ctx.failed) return false;
  if (ctx.idag.producer[tid] >= 0) return true;
  const ConcreteTerm term = ctx.idag.terms[tid];
  if (ctx.on_stack[tid]) {
    ctx.error({}, "cyclic derivation: term " + term.str(ctx.rs) +
                      " transitively requires itself");
    return false;
  }
  if (depth > InferCtx::kDepthCap) {
    ctx.error({}, "derivation chain for " + term.str(ctx.rs) + " exceeds the depth cap (" +
                      std::to_string(InferCtx::kDepthCap) + "); rules are likely self-referential");
    return false;
  }
  ctx.on_stack[tid] = true;
  bool ok = false;

  // axioms take precedence over kernel derivations
  for (size_t ai = 0; ai < ctx.rs.axioms.size() && !ok; ++ai) {
    const Axiom& ax = ctx.rs.axioms[ai];
    Binding b;
    if (!match_pattern(ctx, term, ax.term, b)) continue;
    Rap rap;
    rap.kind = RapKind::load;
    rap.external = ax.external.name;
    for (const auto& slot : ax.external.subscripts) {
      ExtSlot es;
      if (slot.is_free()) {
        auto it = b.find(slot.var);
        if (it == b.end() || it->second.is_ident) {
          ctx.error(ax.external.loc, "external subscript variable '" + slot.var +
                                         "' is not bound by the axiom term");
          break;
        }
        es.dim = it->second.dim;
        es.shift = it->second.offset + slot.displacement;
      } else {
        es.dim = ctx.rs.dim_of(slot.var);
        es.shift = slot.displacement;
      }
      rap.ext_slots.push_back(es);
    }
    if (ctx.failed) break;
    rap.id = static_cast<RapId>(ctx.idag.raps.size());
    rap.out_terms = {tid};
    ctx.idag.producer[tid] = rap.id;
    ctx.idag.raps.push_back(rap);
    ok = true;
  }

  if (!ok && !ctx.failed) {
    for (size_t ki = 0; ki < ctx.rs.kernels.size() && !ok; ++ki) {
      const KernelRule& k = ctx.rs.kernels[ki];
      for (size_t oi = 0; oi < k.outputs.size() && !ok; ++oi) {
        Binding b;
        if (!match_pattern(ctx, term, k.outputs[oi].second, b)) continue;
        ok = apply_kernel(ctx, tid, static_cast<int>(ki), oi, std::move(b), depth);
        if (ctx.failed) break;
      }
      if (ctx.failed) break;
    }
  }

  if (!ok && !ctx.failed) {
    std::string near;
    for (const auto& k : ctx.rs.kernels)
      for (const auto& [p, pat] : k.outputs)
        if (pat.tag == term.tag || pat.ident == term.ident || pat.ident_is_free())
          near += (near.empty() ? "" : ", ") + k.name;
    std::string msg = "no rule produces term " + term.str(ctx.rs);
    if (!near.empty()) msg += " (nearest candidates: " + near + ")";
    ctx.error({}, msg);
  }
  ctx.on_stack[tid] = false;
  return ok && !ctx.failed;
}

}  // namespace

std::optional<Idag> infer_idag(const RuleSet& rs, DiagList& diags) {
  InferCtx ctx{rs, diags};

  // goal demands, in declaration order
  std::vector<TermId> goal_ids;
  for (size_t gi = 0; gi < rs.goals.size(); ++gi) {
    const Goal& g = rs.goals[gi];
    ConcreteTerm t;
    t.tag = g.term.tag;
    t.ident = g.term.ident;
    for (const auto& s : g.term.subscripts) t.dims.push_back({rs.dim_of(s.var), 0});
    std::sort(t.dims.begin(), t.dims.end(),
              [](const DimOffset& a, const DimOffset& c) { return a.dim < c.dim; });
    if (!ctx.check_signature(t, g.term.loc)) return std::nullopt;
    TermId tid = ctx.intern(t);
    goal_ids.push_back(tid);
    ctx.idag.goal_terms.push_back(tid);
    ctx.idag.goal_externals[tid] = static_cast<int>(gi);
  }
  for (TermId tid : goal_ids) {
    if (!demand(ctx, tid, 0)) return std::nullopt;
  }

  // store pseudo-raps, one per goal
  for (size_t gi = 0; gi < rs.goals.size(); ++gi) {
    const Goal& g = rs.goals[gi];
    TermId tid = goal_ids[gi];
    Rap rap;
    rap.kind = RapKind::store;
    rap.external = g.external.name;
    rap.id = static_cast<RapId>(ctx.idag.raps.size());
    rap.in_terms = {tid};
    for (const auto& slot : g.external.subscripts) {
      ExtSlot es;
      es.dim = rs.dim_of(slot.var);
      es.shift = slot.displacement;
      if (es.dim < 0) {
        diags.error(g.external.loc,
                    "goal external subscript must use declared loop variables");
        return std::nullopt;
      }
      rap.ext_slots.push_back(es);
    }
    ctx.idag.consumers[tid].push_back(rap.id);
    ctx.idag.raps.push_back(rap);
  }

  if (ctx.failed) return std::nullopt;
  return std::move(ctx.idag);
}

DataflowDAG rap_dual(const Idag& idag) {
  DataflowDAG dag;
  dag.raps = idag.raps;
  dag.terms = idag.terms;
  dag.producer = idag.producer;
  std::set<DataflowEdge> seen;
  for (const auto& rap : idag.raps) {
    for (TermId t : rap.in_terms) {
      RapId p = idag.producer[t];
      if (p < 0) throw internal_error("term without producer in completed idag");
      DataflowEdge e{p, rap.id, t};
      if (seen.insert(e).second) dag.edges.push_back(e);
    }
  }
  dag.build_adjacency();
  dag.topo_order();  // acyclicity check; throws with witness
  return dag;
}

IterationSpace iteration_space_of(const Rap& rap, const DataflowDAG& dag) {
  std::set<int> dims;
  auto add = [&](TermId t) {
    for (const auto& d : dag.terms[t].dims) dims.insert(d.dim);
  };
  for (TermId t : rap.in_terms) add(t);
  for (TermId t : rap.out_terms) add(t);
  IterationSpace s;
  s.dims.assign(dims.begin(), dims.end());
  return s;
}

bool dataflow_le(const std::set<RapId>& R, const std::set<RapId>& S, const DataflowDAG& dag) {
  if (R.empty() || S.empty()) return true;
  // no vertex of S may reach a vertex of R
  std::vector<char> visited(dag.size(), 0);
  std::vector<RapId> stack(S.begin(), S.end());
  while (!stack.empty()) {
    RapId v = stack.back();
    stack.pop_back();
    if (visited[v]) continue;
    visited[v] = 1;
    if (R.count(v)) return false;
    for (RapId w : dag.out_adj[v]) {
      if (!visited[w]) stack.push_back(w);
    }
  }
  return true;
}

}  // namespace loomfuse
