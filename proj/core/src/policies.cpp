#include "pole/policies.hpp"

#include "pole/errors.hpp"
#include "pole/rng.hpp"

namespace pole {

void validate_schedule(const Schedule& schedule, const MachineTopology& topology) {
  const int cores = topology.total_cores();
  for (size_t i = 0; i < schedule.assignments.size(); ++i) {
    const int c = schedule.assignments[i].index;
    if (c < 0 || c >= cores) {
      throw ContractError("schedule chunk " + std::to_string(i) + " assigns core " +
                          std::to_string(c) + ", out of range for '" + topology.name + "' (" +
                          std::to_string(cores) + " cores)");
    }
  }
}

Schedule os_default(const MachineTopology& topology, const IndexConfig& index) {
  validate_index(index);
  Schedule s;
  s.assignments.reserve(index.num_chunks);
  const int cores = topology.total_cores();
  for (int i = 0; i < index.num_chunks; ++i) {
    s.assignments.push_back(CoreId{i % cores});
  }
  return s;
}

Schedule os_interleave(const MachineTopology& topology, const IndexConfig& index) {
  validate_index(index);
  Schedule s;
  s.assignments.reserve(index.num_chunks);
  std::vector<int> next_in_node(topology.num_nodes, 0);
  for (int i = 0; i < index.num_chunks; ++i) {
    const int node = i % topology.num_nodes;
    const int offset = next_in_node[node]++ % topology.cores_per_node;
    s.assignments.push_back(CoreId{node * topology.cores_per_node + offset});
  }
  return s;
}

Schedule shared_everything_numa(const MachineTopology& topology, const IndexConfig& index) {
  validate_index(index);
  Schedule s;
  s.assignments.reserve(index.num_chunks);
  const int n = topology.num_nodes;
  const int base = index.num_chunks / n;
  const int extra = index.num_chunks % n;  // first `extra` nodes take one more
  int chunk = 0;
  for (int node = 0; node < n; ++node) {
    const int range = base + (node < extra ? 1 : 0);
    for (int k = 0; k < range; ++k, ++chunk) {
      s.assignments.push_back(
          CoreId{node * topology.cores_per_node + k % topology.cores_per_node});
    }
  }
  return s;
}

Schedule shared_nothing(const MachineTopology& topology, const IndexConfig& index) {
  // Identical chunk-to-core map; the behavioral difference lives in RunOptions.
  return shared_everything_numa(topology, index);
}

Schedule random_policy(const MachineTopology& topology, const IndexConfig& index,
                       uint64_t rng_seed, double locality_bias) {
  validate_index(index);
  if (locality_bias < 0.0 || locality_bias > 1.0) {
    throw ContractError("locality_bias must be in [0,1]");
  }
  Schedule s;
  s.assignments.reserve(index.num_chunks);
  Rng rng(rng_seed);
  const int cores = topology.total_cores();
  int previous = static_cast<int>(rng.next_below(static_cast<uint64_t>(cores)));
  s.assignments.push_back(CoreId{previous});
  for (int i = 1; i < index.num_chunks; ++i) {
    if (rng.next_double() >= locality_bias) {
      previous = static_cast<int>(rng.next_below(static_cast<uint64_t>(cores)));
    }
    s.assignments.push_back(CoreId{previous});
  }
  return s;
}

const char* baseline_name(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::OsDefault: return "os-default";
    case BaselineKind::OsInterleave: return "os-interleave";
    case BaselineKind::SharedEverythingNuma: return "se-numa";
    case BaselineKind::SharedNothing: return "shared-nothing";
  }
  return "?";
}

Schedule make_baseline(BaselineKind kind, const MachineTopology& topology,
                       const IndexConfig& index) {
  switch (kind) {
    case BaselineKind::OsDefault: return os_default(topology, index);
    case BaselineKind::OsInterleave: return os_interleave(topology, index);
    case BaselineKind::SharedEverythingNuma: return shared_everything_numa(topology, index);
    case BaselineKind::SharedNothing: return shared_nothing(topology, index);
  }
  throw ContractError("unknown baseline kind");
}

}  // namespace pole
