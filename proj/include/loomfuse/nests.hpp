#ifndef LOOMFUSE_NESTS_HPP
#define LOOMFUSE_NESTS_HPP

#include <memory>

#include "loomfuse/inference.hpp"

namespace loomfuse {

struct NestNode;
using NestPtr = std::shared_ptr<const NestNode>;

// Iteration nest: either a leaf body of callsites or a loop over one
// iteration variable with prologue / steady-state / epilogue phases.
// Prologue and epilogue may be absent; a nest with both absent all the way
// down is `perfect` and corresponds directly to an iteration space.
struct NestNode {
  bool leaf = false;
  std::vector<RapId> body;  // leaf only; execution order fixed at lowering

  int dim = -1;  // loop only; index into loop_order
  Range range;
  NestPtr prologue;  // may be null
  NestPtr steady;    // non-null for loops
  NestPtr epilogue;  // may be null

  static NestPtr make_leaf(std::vector<RapId> raps);
  static NestPtr make_loop(int dim, Range range, NestPtr prologue, NestPtr steady,
                           NestPtr epilogue);
};

bool is_perfect(const NestPtr& nest);
int nest_depth(const NestPtr& nest);
void collect_leaf_raps(const NestPtr& nest, std::vector<RapId>& out);
std::set<RapId> leaf_set(const NestPtr& nest);

// Rank of the outermost loop identifier under the global order: the
// outermost variable in loop_order has the highest rank. Leaves are an error.
int irank(const NestPtr& nest, const RuleSet& rs);

// Reorders a perfect nest's loops to `order` (outermost first). `order` must
// be a permutation of the nest's dims.
NestPtr permute_perfect(const NestPtr& nest, const std::vector<int>& order);

// Callsites merged because they differ only in spatial displacements.
struct CallsiteGroup {
  int id = -1;
  RapKind kind = RapKind::kernel;
  int kernel = -1;
  std::string external;  // load/store
  std::vector<RapId> members;
  // per member, displacement along every loop dim (0 where absent)
  std::vector<std::vector<int>> member_disp;
  IterationSpace space;

  std::vector<int> min_disp(size_t ndims) const;
  std::vector<int> max_disp(size_t ndims) const;
};

struct GroupingResult {
  std::vector<CallsiteGroup> groups;
  std::vector<int> group_of;  // RapId -> group index
};

// Groups callsites by kernel name and parameter shape; members that would
// introduce cycles among groups degrade to singletons.
GroupingResult group_callsites(const DataflowDAG& dag);

struct InestEdge {
  int from = -1;
  int to = -1;
  std::set<TermId> terms;
};

struct InestDAG {
  std::vector<NestPtr> vertices;  // one per callsite group initially
  std::vector<InestEdge> edges;

  std::vector<std::vector<int>> out_adj() const;
  std::vector<int> topo_order() const;  // throws internal_error on cycle
};

// One perfect nest per group over its iteration space, permuted to the
// global loop order; edges are the quotient of dataflow edges.
InestDAG build_inest_dag(const DataflowDAG& dag, const GroupingResult& grouping,
                         const RuleSet& rs);

}  // namespace loomfuse

#endif
