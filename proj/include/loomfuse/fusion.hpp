#ifndef LOOMFUSE_FUSION_HPP
#define LOOMFUSE_FUSION_HPP

#include "loomfuse/nests.hpp"

namespace loomfuse {

// Result of pairwise nest fusion; `fused` is null when unfusable.
struct FuseOutcome {
  NestPtr fused;
  bool unfusable() const { return fused == nullptr; }
};

enum class RapClass { pointwise, reduction, broadcast };

RapClass classify_rap(const Rap& rap, const DataflowDAG& dag);

// Cut forced by concave dataflow: a reduction whose transitive consumers
// broadcast the reduced value back up to a higher rank.
struct SplitCut {
  RapId reduction = -1;
  std::vector<size_t> edges;  // indices into the initial InestDAG edge list
  std::set<int> upstream;     // vertex ids of the initial InestDAG
  std::set<int> downstream;
};

std::vector<SplitCut> detect_concave_split(const InestDAG& g, const DataflowDAG& dag,
                                           const GroupingResult& grouping);

// Recursively fuses two iteration nests under the global loop order, per the
// rank-ordering / dataflow-ordering rules. Nests must agree on ranges for any
// shared identifier; a mismatch is an unfusable outcome, not an error.
FuseOutcome fuse_inest(const NestPtr& a, const NestPtr& b, const DataflowDAG& dag,
                       const RuleSet& rs);

struct FusionOptions {
  bool check_each_step = false;  // re-verify acyclicity after every merge
};

struct FusionResult {
  InestDAG dag;                    // fused vertices and surviving edges
  std::vector<SplitCut> splits;    // concave splits that were applied
  std::vector<int> vertex_of_group;  // initial vertex -> final vertex index
};

// Outer traversal: visits vertices in topological order, fusing across
// incoming edges or severing along separating edges when fusion fails.
FusionResult fuse_inest_dag(const InestDAG& g, const DataflowDAG& dag,
                            const GroupingResult& grouping, const RuleSet& rs,
                            const FusionOptions& opts = {});

}  // namespace loomfuse

#endif
