#ifndef LOOMFUSE_SHIFTS_HPP
#define LOOMFUSE_SHIFTS_HPP

#include "loomfuse/fusion.hpp"

namespace loomfuse {

// Per-group pipeline shifts within each fused nest. A group with shift s
// executes cell (trip + s) at every trip; shifts make every intra-nest
// dataflow edge causal (producers run at or before the trip that consumes
// them) and bound the storage window of contracted buffers.
//
// shift[g][d] = max(max member displacement, max over intra-nest consumers c
// of shift[c][d] + read offset) — zero for stores and for terminal loads.
struct PipelineShifts {
  std::vector<std::vector<int>> shift;  // group id -> per loop dim
};

PipelineShifts compute_pipeline_shifts(const DataflowDAG& dag, const GroupingResult& grouping,
                                       const FusionResult& fusion, const RuleSet& rs);

}  // namespace loomfuse

#endif
