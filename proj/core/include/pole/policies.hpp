#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pole/machine.hpp"
#include "pole/workload.hpp"

namespace pole {

// The action-token sequence: one core id per index chunk. Data placement is
// implicit (chunk i's data lives on the node of assignments[i]).
struct Schedule {
  std::vector<CoreId> assignments;

  int num_chunks() const { return static_cast<int>(assignments.size()); }
};

void validate_schedule(const Schedule& schedule, const MachineTopology& topology);

// OS local allocation proxy: chunks round-robin over all cores in id order.
Schedule os_default(const MachineTopology& topology, const IndexConfig& index);

// Chunk i served by node (i mod num_nodes); cores rotate within each node.
Schedule os_interleave(const MachineTopology& topology, const IndexConfig& index);

// Contiguous chunk ranges per node (sizes differ by at most 1); cores rotate
// within each node's range.
Schedule shared_everything_numa(const MachineTopology& topology, const IndexConfig& index);

// Same chunk-to-core map as SE:N; the strict-pinning behavior (no OS rotation,
// isolation discount) is a simulator run option, since the action vocabulary
// is core ids only.
Schedule shared_nothing(const MachineTopology& topology, const IndexConfig& index);

// Each chunk repeats its predecessor's core with probability locality_bias,
// otherwise draws uniformly over all cores.
Schedule random_policy(const MachineTopology& topology, const IndexConfig& index,
                       uint64_t rng_seed, double locality_bias);

enum class BaselineKind { OsDefault, OsInterleave, SharedEverythingNuma, SharedNothing };

const char* baseline_name(BaselineKind kind);
Schedule make_baseline(BaselineKind kind, const MachineTopology& topology,
                       const IndexConfig& index);

}  // namespace pole
