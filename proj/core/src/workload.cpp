#include "pole/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "pole/errors.hpp"
#include "pole/rng.hpp"

namespace pole {

void validate_index(const IndexConfig& index) {
  if (index.num_chunks < 1) throw ConfigError("index: num_chunks must be >= 1");
  if (index.keys_per_chunk < 1.0) throw ConfigError("index: keys_per_chunk must be >= 1");
  if (index.key_skew < 0.0) throw ConfigError("index: key_skew must be >= 0");
  if (index.record_bytes < 1) throw ConfigError("index: record_bytes must be >= 1");
}

void validate_workload(const WorkloadSpec& s) {
  const double sum = s.read_fraction + s.update_fraction + s.scan_fraction;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("workload '" + s.name + "': fractions sum to " + std::to_string(sum) +
                      ", expected 1.0");
  }
  if (s.read_fraction < 0 || s.update_fraction < 0 || s.scan_fraction < 0) {
    throw ConfigError("workload '" + s.name + "': fractions must be in [0,1]");
  }
  if (s.scan_fraction > 0.0 && s.scan_length_mean < 1) {
    throw ConfigError("workload '" + s.name + "': scan_length_mean must be >= 1 when scans occur");
  }
  if (s.queries_per_window < 1) {
    throw ConfigError("workload '" + s.name + "': queries_per_window must be >= 1");
  }
}

const std::vector<std::string>& builtin_workload_names() {
  static const std::vector<std::string> names = {"ycsb-a", "ycsb-c", "ycsb-e"};
  return names;
}

WorkloadSpec make_workload(const std::string& name) {
  WorkloadSpec s;
  s.name = name;
  if (name == "ycsb-a") {
    s.read_fraction = 0.5;
    s.update_fraction = 0.5;
    s.scan_fraction = 0.0;
  } else if (name == "ycsb-c") {
    s.read_fraction = 1.0;
    s.update_fraction = 0.0;
    s.scan_fraction = 0.0;
  } else if (name == "ycsb-e") {
    s.read_fraction = 0.0;
    s.update_fraction = 0.05;
    s.scan_fraction = 0.95;
  } else {
    throw ConfigError("unknown workload '" + name + "' (valid: ycsb-a, ycsb-c, ycsb-e)");
  }
  validate_workload(s);
  return s;
}

namespace {

std::pair<std::string, std::string> split_kv(const std::string& line) {
  const size_t eq = line.find('=');
  auto trim = [](std::string s) {
    const size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return std::string();
    const size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  };
  if (eq == std::string::npos) return {"", ""};
  return {trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
}

}  // namespace

WorkloadSpec load_workload_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open workload file '" + path + "'");
  WorkloadSpec s;
  s.name = path;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto [key, value] = split_kv(line);
    const std::string at = path + ":" + std::to_string(lineno);
    if (key.empty()) throw ConfigError(at + ": expected 'key = value'");
    try {
      if (key == "name") s.name = value;
      else if (key == "read_fraction") s.read_fraction = std::stod(value);
      else if (key == "update_fraction") s.update_fraction = std::stod(value);
      else if (key == "scan_fraction") s.scan_fraction = std::stod(value);
      else if (key == "scan_length_mean") s.scan_length_mean = std::stoi(value);
      else if (key == "queries_per_window") s.queries_per_window = std::stoi(value);
      else throw ConfigError(at + ": unknown key '" + key + "'");
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError(at + ": '" + value + "' is not a number for key '" + key + "'");
    }
  }
  validate_workload(s);
  return s;
}

WorkloadSpec resolve_workload(const std::string& name_or_path) {
  for (const std::string& n : builtin_workload_names()) {
    if (n == name_or_path) return make_workload(name_or_path);
  }
  std::ifstream probe(name_or_path);
  if (probe.good()) return load_workload_file(name_or_path);
  throw ConfigError("unknown workload '" + name_or_path +
                    "' (not ycsb-a/ycsb-c/ycsb-e and not a readable config file)");
}

ZipfSampler::ZipfSampler(int num_items, double exponent) {
  if (num_items < 1) throw ContractError("ZipfSampler: num_items must be >= 1");
  cdf_.resize(num_items);
  double total = 0.0;
  for (int i = 0; i < num_items; ++i) {
    total += exponent == 0.0 ? 1.0 : 1.0 / std::pow(static_cast<double>(i + 1), exponent);
    cdf_[i] = total;
  }
  for (double& c : cdf_) c /= total;
  cdf_.back() = 1.0;
}

int ZipfSampler::sample(double u01) const {
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u01);
  return static_cast<int>(std::min<std::ptrdiff_t>(it - cdf_.begin(),
                                                   static_cast<std::ptrdiff_t>(cdf_.size()) - 1));
}

QueryBatch sample_batch(const IndexConfig& index, const WorkloadSpec& spec, uint64_t rng_seed) {
  validate_index(index);
  validate_workload(spec);
  const int n = index.num_chunks;
  QueryBatch batch;
  batch.reads.assign(n, 0);
  batch.updates.assign(n, 0);
  batch.scan_touches.assign(n, 0);
  batch.total_queries = spec.queries_per_window;

  ZipfSampler zipf(n, index.key_skew);
  Rng rng(rng_seed);
  const double read_cut = spec.read_fraction;
  const double update_cut = spec.read_fraction + spec.update_fraction;
  // Scan lengths are uniform over [1, 2*mean-1], so the mean is exact.
  const int scan_span = spec.scan_length_mean * 2 - 1;

  for (int q = 0; q < spec.queries_per_window; ++q) {
    const int chunk = zipf.sample(rng.next_double());
    const double op = rng.next_double();
    if (op < read_cut) {
      batch.reads[chunk] += 1;
    } else if (op < update_cut) {
      batch.updates[chunk] += 1;
    } else {
      int length = 1 + static_cast<int>(rng.next_below(static_cast<uint64_t>(scan_span)));
      length = std::min(length, n - chunk);  // clamp at the index boundary
      batch.scans.push_back(ScanOp{chunk, length});
      for (int j = chunk; j < chunk + length; ++j) batch.scan_touches[j] += 1;
    }
  }
  return batch;
}

IndexConfig grow_index(const IndexConfig& index, int64_t inserted_records) {
  if (inserted_records < 0) throw ContractError("grow_index: inserted_records must be >= 0");
  const double current = index.keys_per_chunk * static_cast<double>(index.num_chunks);
  IndexConfig grown = index;
  grown.keys_per_chunk =
      index.keys_per_chunk * ((current + static_cast<double>(inserted_records)) / current);
  return grown;
}

}  // namespace pole
