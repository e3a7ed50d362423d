#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pole {

// The index is modeled as I_c chunks with access-cost parameters, not as a
// real tree. keys_per_chunk is an average and may be fractional after growth.
struct IndexConfig {
  int num_chunks = 256;
  double keys_per_chunk = 117187.5;  // 30M records over 256 chunks
  double key_skew = 0.99;            // Zipfian exponent over chunks
  int record_bytes = 16;             // 8-byte key + 8-byte value
};

void validate_index(const IndexConfig& index);

struct WorkloadSpec {
  std::string name = "ycsb-a";
  double read_fraction = 0.5;
  double update_fraction = 0.5;
  double scan_fraction = 0.0;
  int scan_length_mean = 4;  // in chunks touched
  int queries_per_window = 10000;
};

void validate_workload(const WorkloadSpec& spec);

struct ScanOp {
  int origin_chunk = 0;
  int length = 1;  // chunks touched, origin included, clamped at the last chunk
};

// One measurement window's query stream. Per-chunk counts are the public
// contract; the scan list keeps the origin->touch association the cost model
// needs for remote-access attribution.
struct QueryBatch {
  std::vector<int64_t> reads;
  std::vector<int64_t> updates;
  std::vector<int64_t> scan_touches;
  std::vector<ScanOp> scans;
  int64_t total_queries = 0;  // point ops + scan origins
};

WorkloadSpec make_workload(const std::string& name);
const std::vector<std::string>& builtin_workload_names();
WorkloadSpec load_workload_file(const std::string& path);
WorkloadSpec resolve_workload(const std::string& name_or_path);

QueryBatch sample_batch(const IndexConfig& index, const WorkloadSpec& spec, uint64_t rng_seed);

// Scales keys_per_chunk by (current + inserted) / current records; the chunk
// count stays fixed.
IndexConfig grow_index(const IndexConfig& index, int64_t inserted_records);

// Precomputed inverse-CDF sampler over [0, num_chunks); exponent 0 is uniform.
class ZipfSampler {
 public:
  ZipfSampler(int num_items, double exponent);
  int sample(double u01) const;  // u01 in [0,1)

 private:
  std::vector<double> cdf_;
};

}  // namespace pole
