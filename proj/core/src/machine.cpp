#include "pole/machine.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "pole/errors.hpp"

namespace pole {

namespace {

std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (size_t i = 0; i < names.size(); ++i) {
    if (i) out += ", ";
    out += names[i];
  }
  return out;
}

std::vector<std::vector<double>> uniform_distance(int n, double off_diag) {
  std::vector<std::vector<double>> m(n, std::vector<double>(n, off_diag));
  for (int i = 0; i < n; ++i) m[i][i] = 1.0;
  return m;
}

// 4-node presets: 2.0 between sockets except the farthest pair (0,3) at 4.0,
// spanning the up-to-4x remote latency range.
std::vector<std::vector<double>> four_node_distance() {
  auto m = uniform_distance(4, 2.0);
  m[0][3] = m[3][0] = 4.0;
  return m;
}

}  // namespace

void validate_topology(const MachineTopology& t) {
  if (t.num_nodes < 1 || t.cores_per_node < 1) {
    throw ConfigError("topology '" + t.name + "': num_nodes and cores_per_node must be >= 1");
  }
  if (t.local_latency_ns <= 0.0) {
    throw ConfigError("topology '" + t.name + "': local_latency_ns must be positive");
  }
  if (t.node_bandwidth_capacity <= 0.0) {
    throw ConfigError("topology '" + t.name + "': node_bandwidth_capacity must be positive");
  }
  if (t.contention_exponent < 0.0) {
    throw ConfigError("topology '" + t.name + "': contention_exponent must be >= 0");
  }
  if (t.clock_ghz <= 0.0) {
    throw ConfigError("topology '" + t.name + "': clock_ghz must be positive");
  }
  const size_t n = static_cast<size_t>(t.num_nodes);
  if (t.distance_matrix.size() != n) {
    throw ConfigError("topology '" + t.name + "': distance_matrix must have " +
                      std::to_string(t.num_nodes) + " rows, got " +
                      std::to_string(t.distance_matrix.size()));
  }
  for (size_t i = 0; i < n; ++i) {
    if (t.distance_matrix[i].size() != n) {
      throw ConfigError("topology '" + t.name + "': distance_matrix row " + std::to_string(i) +
                        " must have " + std::to_string(t.num_nodes) + " entries");
    }
    for (size_t j = 0; j < n; ++j) {
      const double d = t.distance_matrix[i][j];
      if (d < 1.0) {
        throw ConfigError("topology '" + t.name + "': distance_matrix[" + std::to_string(i) +
                          "][" + std::to_string(j) + "] = " + std::to_string(d) + " is < 1.0");
      }
    }
    if (t.distance_matrix[i][i] != 1.0) {
      throw ConfigError("topology '" + t.name + "': distance_matrix[" + std::to_string(i) +
                        "][" + std::to_string(i) + "] must be exactly 1.0");
    }
  }
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      if (t.distance_matrix[i][j] != t.distance_matrix[j][i]) {
        throw ConfigError("topology '" + t.name + "': distance_matrix is asymmetric at [" +
                          std::to_string(i) + "][" + std::to_string(j) + "]");
      }
    }
  }
}

const std::vector<std::string>& builtin_topology_names() {
  static const std::vector<std::string> names = {"sandy-bridge", "grace-hopper", "skylake-x",
                                                 "tiny-2x2", "tiny-4x1"};
  return names;
}

MachineTopology builtin_topology(const std::string& name) {
  MachineTopology t;
  t.name = name;
  if (name == "sandy-bridge") {
    t.num_nodes = 4;
    t.cores_per_node = 8;
    t.local_latency_ns = 100.0;
    t.distance_matrix = four_node_distance();
    t.node_bandwidth_capacity = 25000.0;
    t.contention_exponent = 1.0;
    t.clock_ghz = 2.2;
  } else if (name == "grace-hopper") {
    t.num_nodes = 1;
    t.cores_per_node = 72;
    t.local_latency_ns = 105.0;
    t.distance_matrix = uniform_distance(1, 1.0);
    t.node_bandwidth_capacity = 100000.0;
    t.contention_exponent = 1.0;
    t.clock_ghz = 3.1;
  } else if (name == "skylake-x") {
    t.num_nodes = 4;
    t.cores_per_node = 23;
    t.local_latency_ns = 95.0;
    t.distance_matrix = four_node_distance();
    t.node_bandwidth_capacity = 25000.0;
    t.contention_exponent = 1.0;
    t.clock_ghz = 2.7;
  } else if (name == "tiny-2x2") {
    t.num_nodes = 2;
    t.cores_per_node = 2;
    t.local_latency_ns = 100.0;
    t.distance_matrix = uniform_distance(2, 2.0);
    t.node_bandwidth_capacity = 25000.0;
    t.contention_exponent = 1.0;
    t.clock_ghz = 1.0;
  } else if (name == "tiny-4x1") {
    t.num_nodes = 4;
    t.cores_per_node = 1;
    t.local_latency_ns = 100.0;
    t.distance_matrix = four_node_distance();
    t.node_bandwidth_capacity = 25000.0;
    t.contention_exponent = 1.0;
    t.clock_ghz = 1.0;
  } else {
    throw ConfigError("unknown topology preset '" + name +
                      "' (valid: " + join_names(builtin_topology_names()) + ")");
  }
  validate_topology(t);
  return t;
}

namespace {

struct KvLine {
  std::string key;
  std::string value;
  int line = 0;
};

std::vector<KvLine> parse_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::vector<KvLine> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      // Blank or comment-only lines are fine; anything else is malformed.
      bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
      if (!blank) {
        throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
      }
      continue;
    }
    auto trim = [](std::string s) {
      const size_t a = s.find_first_not_of(" \t\r");
      if (a == std::string::npos) return std::string();
      const size_t b = s.find_last_not_of(" \t\r");
      return s.substr(a, b - a + 1);
    };
    KvLine kv;
    kv.key = trim(line.substr(0, eq));
    kv.value = trim(line.substr(eq + 1));
    kv.line = lineno;
    if (kv.key.empty()) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
    }
    out.push_back(std::move(kv));
  }
  return out;
}

double parse_double_at(const std::string& path, const KvLine& kv) {
  try {
    size_t pos = 0;
    double v = std::stod(kv.value, &pos);
    if (pos != kv.value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(path + ":" + std::to_string(kv.line) + ": '" + kv.value +
                      "' is not a number for key '" + kv.key + "'");
  }
}

int parse_int_at(const std::string& path, const KvLine& kv) {
  const double v = parse_double_at(path, kv);
  const int i = static_cast<int>(v);
  if (static_cast<double>(i) != v) {
    throw ConfigError(path + ":" + std::to_string(kv.line) + ": '" + kv.value +
                      "' is not an integer for key '" + kv.key + "'");
  }
  return i;
}

}  // namespace

MachineTopology load_topology_file(const std::string& path) {
  MachineTopology t;
  t.name = path;
  t.distance_matrix.clear();
  std::vector<int> row_lines;
  bool saw_nodes = false, saw_cores = false;
  for (const KvLine& kv : parse_kv_file(path)) {
    if (kv.key == "name") {
      t.name = kv.value;
    } else if (kv.key == "num_nodes") {
      t.num_nodes = parse_int_at(path, kv);
      saw_nodes = true;
    } else if (kv.key == "cores_per_node") {
      t.cores_per_node = parse_int_at(path, kv);
      saw_cores = true;
    } else if (kv.key == "local_latency_ns") {
      t.local_latency_ns = parse_double_at(path, kv);
    } else if (kv.key == "node_bandwidth_capacity") {
      t.node_bandwidth_capacity = parse_double_at(path, kv);
    } else if (kv.key == "contention_exponent") {
      t.contention_exponent = parse_double_at(path, kv);
    } else if (kv.key == "clock_ghz") {
      t.clock_ghz = parse_double_at(path, kv);
    } else if (kv.key == "distance_row") {
      std::istringstream row(kv.value);
      std::vector<double> entries;
      std::string tok;
      while (row >> tok) {
        KvLine cell{kv.key, tok, kv.line};
        entries.push_back(parse_double_at(path, cell));
      }
      if (entries.empty()) {
        throw ConfigError(path + ":" + std::to_string(kv.line) + ": empty distance_row");
      }
      t.distance_matrix.push_back(std::move(entries));
      row_lines.push_back(kv.line);
    } else {
      throw ConfigError(path + ":" + std::to_string(kv.line) + ": unknown key '" + kv.key + "'");
    }
  }
  if (!saw_nodes || !saw_cores) {
    throw ConfigError(path + ": missing required key " +
                      std::string(!saw_nodes ? "'num_nodes'" : "'cores_per_node'"));
  }
  if (t.distance_matrix.empty() && t.num_nodes == 1) {
    t.distance_matrix = {{1.0}};
  }

  // Re-run the structural checks with line attribution where we have it.
  const size_t n = static_cast<size_t>(t.num_nodes);
  if (t.distance_matrix.size() != n) {
    throw ConfigError(path + ": expected " + std::to_string(t.num_nodes) +
                      " distance_row lines, got " + std::to_string(t.distance_matrix.size()));
  }
  for (size_t i = 0; i < n; ++i) {
    const std::string at = path + ":" + std::to_string(row_lines.empty() ? 0 : row_lines[i]);
    if (t.distance_matrix[i].size() != n) {
      throw ConfigError(at + ": distance_row has " + std::to_string(t.distance_matrix[i].size()) +
                        " entries, expected " + std::to_string(t.num_nodes));
    }
    for (size_t j = 0; j < n; ++j) {
      if (t.distance_matrix[i][j] < 1.0) {
        throw ConfigError(at + ": distance entry " + std::to_string(j) + " is < 1.0");
      }
    }
    if (t.distance_matrix[i][i] != 1.0) {
      throw ConfigError(at + ": diagonal entry must be exactly 1.0");
    }
    for (size_t j = 0; j < i; ++j) {
      if (t.distance_matrix[i][j] != t.distance_matrix[j][i]) {
        throw ConfigError(at + ": asymmetric with row " +
                          std::to_string(row_lines.empty() ? 0 : row_lines[j]) + " at column " +
                          std::to_string(j));
      }
    }
  }
  validate_topology(t);
  return t;
}

MachineTopology resolve_topology(const std::string& name_or_path) {
  for (const std::string& p : builtin_topology_names()) {
    if (p == name_or_path) return builtin_topology(name_or_path);
  }
  std::ifstream probe(name_or_path);
  if (probe.good()) return load_topology_file(name_or_path);
  throw ConfigError("unknown topology '" + name_or_path +
                    "' (not a preset: " + join_names(builtin_topology_names()) +
                    "; and not a readable config file)");
}

int node_of(const MachineTopology& t, CoreId core) {
  if (core.index < 0 || core.index >= t.total_cores()) {
    throw ContractError("core id " + std::to_string(core.index) + " out of range for topology '" +
                        t.name + "' with " + std::to_string(t.total_cores()) + " cores");
  }
  return core.index / t.cores_per_node;
}

double access_latency(const MachineTopology& t, int from_node, int to_node, double node_load) {
  if (from_node < 0 || from_node >= t.num_nodes || to_node < 0 || to_node >= t.num_nodes) {
    throw ContractError("node index out of range for topology '" + t.name + "'");
  }
  if (node_load < 0.0) {
    throw ContractError("node_load must be >= 0");
  }
  double saturation = 0.0;
  if (t.contention_exponent > 0.0) {
    saturation = std::pow(node_load / t.node_bandwidth_capacity, t.contention_exponent);
  }
  return t.local_latency_ns * t.distance_matrix[from_node][to_node] * (1.0 + saturation);
}

}  // namespace pole
