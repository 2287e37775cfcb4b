#ifndef LOOMFUSE_INFERENCE_HPP
#define LOOMFUSE_INFERENCE_HPP

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "loomfuse/rulespec.hpp"

namespace loomfuse {

using TermId = int;
using RapId = int;
using VarId = int;

// Per-dimension coordinate of a concrete term: offset from the canonical cell
// along the loop dimension `dim` (index into RuleSet::loop_order).
struct DimOffset {
  int dim = 0;
  int offset = 0;
  auto operator<=>(const DimOffset&) const = default;
};

// A concrete data reference in the translation-free frame. Value semantics;
// terms are interned and used as graph keys.
struct ConcreteTerm {
  std::string tag;
  std::string ident;
  std::vector<DimOffset> dims;  // sorted by dim

  auto operator<=>(const ConcreteTerm&) const = default;
  std::string str(const RuleSet& rs) const;
};

enum class RapKind { kernel, load, store };

// How a load/store touches its external buffer: per external subscript slot,
// index = cell coordinate along `dim` plus `shift`.
struct ExtSlot {
  int dim = -1;  // -1: constant index (rank-collapsing axioms)
  int shift = 0;
  auto operator<=>(const ExtSlot&) const = default;
};

struct Rap {
  RapId id = -1;
  RapKind kind = RapKind::kernel;
  int kernel = -1;  // index into RuleSet::kernels for kind == kernel
  std::vector<TermId> in_terms;   // positionally match kernel input params
  std::vector<TermId> out_terms;  // positionally match kernel output params
  // free variable -> bound value, for display and grouping
  std::vector<std::pair<std::string, std::string>> binding;
  // load/store only
  std::string external;
  std::vector<ExtSlot> ext_slots;

  std::string label(const RuleSet& rs) const;
};

// Inference DAG: concrete terms as vertices, rule applications as edges.
struct Idag {
  std::vector<ConcreteTerm> terms;  // TermId -> term
  std::vector<Rap> raps;
  std::vector<RapId> producer;          // TermId -> producing rap (-1 for none yet)
  std::vector<std::vector<RapId>> consumers;  // TermId -> consuming raps
  std::vector<TermId> goal_terms;
  std::map<TermId, int> goal_externals;  // goal term -> index into RuleSet::goals

  TermId find(const ConcreteTerm& t) const;
};

struct DataflowEdge {
  RapId from = -1;
  RapId to = -1;
  TermId term = -1;
  auto operator<=>(const DataflowEdge&) const = default;
};

// The RAP dual of the inference DAG: callsites as vertices, exchanged terms
// as edges.
struct DataflowDAG {
  std::vector<Rap> raps;
  std::vector<ConcreteTerm> terms;
  std::vector<DataflowEdge> edges;
  std::vector<RapId> producer;  // TermId -> rap

  std::vector<std::vector<RapId>> out_adj;  // rap -> successor raps
  std::vector<std::vector<RapId>> in_adj;

  size_t size() const { return raps.size(); }
  void build_adjacency();
  std::vector<RapId> topo_order() const;  // throws internal_error with a cycle witness
};

struct IterationSpace {
  std::vector<int> dims;  // loop-order indices, outermost first
  bool operator==(const IterationSpace&) const = default;
};

// Backward chaining from goals to axioms. Fails with diagnostics when a term
// has no producer, a derivation cycles, or a free variable stays unbound.
std::optional<Idag> infer_idag(const RuleSet& rs, DiagList& diags);

// Builds the dual graph and checks acyclicity.
DataflowDAG rap_dual(const Idag& idag);

// Union of loop dimensions appearing on terms incident to `rap`.
IterationSpace iteration_space_of(const Rap& rap, const DataflowDAG& dag);

// True iff every vertex of R can be topologically ordered before every vertex
// of S, i.e. no vertex of S reaches a vertex of R.
bool dataflow_le(const std::set<RapId>& R, const std::set<RapId>& S, const DataflowDAG& dag);

}  // namespace loomfuse

#endif
