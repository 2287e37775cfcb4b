#ifndef LOOMFUSE_STORAGE_HPP
#define LOOMFUSE_STORAGE_HPP

#include "loomfuse/shifts.hpp"

namespace loomfuse {

// Storage backing provided by an external buffer (axiom or goal). Index of
// slot k = cell coordinate along slots[k].dim plus slots[k].shift.
struct ExtBacking {
  std::string external;
  std::string type;
  std::vector<ExtSlot> slots;
};

struct Variable {
  VarId id = -1;
  std::string tag;
  std::string ident;
  std::string name;  // emission name, collision-checked
  std::string type;  // element type text
  std::vector<int> dims;  // loop dims, outermost first
  int producer_group = -1;
  int alias_of = -1;  // associative carry unified into another variable
  std::optional<ExtBacking> backing;
  bool axiom_backed = false;

  bool terminal() const { return backing.has_value(); }
};

struct VarTable {
  std::vector<Variable> vars;
  std::map<std::pair<std::string, std::string>, VarId> by_key;  // (tag, ident)

  VarId canonical(VarId v) const {
    while (v >= 0 && vars[v].alias_of >= 0) v = vars[v].alias_of;
    return v;
  }
  VarId of_term(const ConcreteTerm& t) const {
    auto it = by_key.find({t.tag, t.ident});
    return it == by_key.end() ? -1 : canonical(it->second);
  }
};

VarTable build_variables(const RuleSet& rs, const DataflowDAG& dag,
                         const GroupingResult& grouping);

// Reuse pattern of one variable's input references under the iteration
// order: a tournament whose unique Hamiltonian path is the order in which
// the offsets revisit a given value.
struct ReuseGraph {
  std::string identifier;
  std::vector<std::vector<int>> nodes;           // distinct offset vectors (full dim width)
  std::vector<std::pair<int, int>> edges;        // a -> b: a visited before b
  std::vector<int> ham_path;                     // node indices, first visit first
  std::vector<int> dims;                         // dims the offsets range over

  // Path rendered with the innermost offset first, matching the stencil
  // diagrams, e.g. "(0,+1) -> (+1,0) -> (0,0) -> (-1,0) -> (0,-1)".
  std::string path_str() const;
};

ReuseGraph reuse_graph(const std::string& identifier, const std::vector<std::vector<int>>& refs,
                       const std::vector<int>& dims);

enum class Scheme { full, inner_circular, outer_rotate, vector_expanded };

enum class DimRole { scoped, rotating, full };

struct DimStorage {
  int dim = -1;
  DimRole role = DimRole::full;
  long span = 1;    // rotating: live window size
  long extent = 0;  // full: allocated length
  long base = 0;    // full: cell coordinate of index 0
};

struct StorageDescriptor {
  VarId var = -1;
  Scheme scheme = Scheme::full;
  int vl = 1;  // vector_expanded: rotation step; buffer size = span + vl
  std::vector<DimStorage> dims;     // parallel to variable dims
  int decl_vertex = -1;             // -1: top-level (spans nests)
  std::vector<int> decl_loops;      // loops enclosing the declaration point
  bool external_backed = false;
  bool is_shadow = false;  // alias-copy shadow buffer

  long span() const {
    for (const auto& d : dims)
      if (d.role == DimRole::rotating) return d.span;
    return 1;
  }
  int rotating_dim() const {
    for (const auto& d : dims)
      if (d.role == DimRole::rotating) return d.dim;
    return -1;
  }
  long alloc_elems() const;  // concrete element count for internal storage
};

// Footprint polynomial over symbolic trip counts N_<var>.
struct Footprint {
  std::map<std::vector<int>, long> terms;  // monomial (sorted dim list) -> coefficient
  void add(std::vector<int> mono, long coeff);
  std::string str(const RuleSet& rs) const;
  bool operator==(const Footprint&) const = default;
};

// Pre-write temporaries demanded by in/out aliasing: for each aliased
// (input, output) pair with a dependency chain between them, the input
// offsets read at or after the trip that overwrites them.
struct AliasPlan {
  struct Entry {
    std::string input_external;
    std::string output_external;
    std::vector<std::vector<int>> offsets;  // clobbered read offsets
    VarId var = -1;                         // the axiom-backed variable involved
    int writer_group = -1;
    std::vector<int> writer_shift;
  };
  std::vector<Entry> entries;
  bool empty() const { return entries.empty(); }
};

struct StoragePlan {
  VarTable vars;
  std::vector<StorageDescriptor> descriptors;  // indexed by canonical VarId
  AliasPlan alias;
  // shadow descriptors for alias entries, same index as alias.entries
  std::vector<StorageDescriptor> shadows;
  Footprint footprint;
  PipelineShifts shifts;
};

// Concrete per-dimension sizes for a variable stored in full: trip count
// plus the offset spread, with the lower bound shifted so every access is
// in bounds. Returns {extent, base} per dim of the variable.
std::vector<std::pair<long, long>> buffer_extents(VarId var, const VarTable& vars,
                                                  const DataflowDAG& dag, const RuleSet& rs);

struct Region {
  int vertex = -1;  // -1 = spans multiple nests
  std::vector<int> loops;
};

Region enclosing_region(VarId var, const VarTable& vars, const DataflowDAG& dag,
                        const GroupingResult& grouping, const FusionResult& fusion,
                        const RuleSet& rs);

// Contraction of one intermediate variable from its reuse pattern; shifts
// widen the window when the pipeline runs producers early.
StorageDescriptor contract(VarId var, const VarTable& vars, const DataflowDAG& dag,
                           const GroupingResult& grouping, const FusionResult& fusion,
                           const PipelineShifts& shifts, const RuleSet& rs);

// Expands an inner-circular buffer for vector rotation: total size span+VL,
// rotation moves VL elements once per VL trips. VL=1 leaves it unchanged.
StorageDescriptor vector_expand(const StorageDescriptor& sd, int vl);

AliasPlan alias_chain(const RuleSet& rs, const DataflowDAG& dag, const VarTable& vars,
                      const GroupingResult& grouping, const PipelineShifts& shifts);

StoragePlan analyze_storage(const RuleSet& rs, const DataflowDAG& dag,
                            const GroupingResult& grouping, const FusionResult& fusion,
                            int vector_length);

}  // namespace loomfuse

#endif
