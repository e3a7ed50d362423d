#pragma once

#include <string>
#include <vector>

namespace pole {

struct CoreId {
  int index = 0;
  friend bool operator==(const CoreId&, const CoreId&) = default;
};

// A NUMA machine: nodes of equal core count, a symmetric latency-multiplier
// matrix between nodes, and a per-node saturation model. Immutable after
// construction/validation; all operations on it are pure.
struct MachineTopology {
  std::string name;
  int num_nodes = 1;
  int cores_per_node = 1;
  double local_latency_ns = 100.0;
  // num_nodes x num_nodes, unitless multipliers, diagonal 1.0, entries >= 1.
  std::vector<std::vector<double>> distance_matrix;
  // Accesses-per-window a node serves before the saturation term kicks in.
  double node_bandwidth_capacity = 25000.0;
  // 0 disables the saturation term entirely.
  double contention_exponent = 1.0;
  double clock_ghz = 1.0;

  int total_cores() const { return num_nodes * cores_per_node; }
};

// Throws ConfigError when an invariant fails (asymmetric/sub-1.0 distance
// matrix, non-positive counts, ...).
void validate_topology(const MachineTopology& topology);

// Presets: sandy-bridge, grace-hopper, skylake-x, tiny-2x2, tiny-4x1.
MachineTopology builtin_topology(const std::string& name);
const std::vector<std::string>& builtin_topology_names();

// Key/value config file loader; errors cite file:line.
MachineTopology load_topology_file(const std::string& path);

// Resolves a preset name, falling back to treating it as a config file path.
MachineTopology resolve_topology(const std::string& name_or_path);

int node_of(const MachineTopology& topology, CoreId core);

// local_latency_ns * distance[from][to] * (1 + (load/capacity)^exponent).
// The saturation factor is dropped when contention_exponent == 0 so that a
// zero exponent means "contention off" rather than a flat 2x.
double access_latency(const MachineTopology& topology, int from_node, int to_node,
                      double node_load);

}  // namespace pole
