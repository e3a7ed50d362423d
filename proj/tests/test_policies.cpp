#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "pole/errors.hpp"
#include "pole/machine.hpp"
#include "pole/policies.hpp"

using namespace pole;

namespace {

IndexConfig chunks(int n) {
  IndexConfig idx;
  idx.num_chunks = n;
  return idx;
}

}  // namespace

TEST_SUITE("policies") {

TEST_CASE("os_default round-robins over all cores") {
  MachineTopology t = builtin_topology("tiny-2x2");
  Schedule s = os_default(t, chunks(10));
  for (int i = 0; i < 10; ++i) CHECK(s.assignments[i].index == i % 4);
}

// The two structural guarantees behind the baseline comparison: interleave
// maps chunk i to node i mod N, and the clustered baselines give every node a
// contiguous range whose sizes differ by at most one. Checked across every
// preset at several index sizes.
TEST_CASE("interleave node rule and clustered range rule hold on all presets") {
  for (const std::string& name : builtin_topology_names()) {
    MachineTopology t = builtin_topology(name);
    for (int ic : {4, 16, 256}) {
      CAPTURE(name);
      CAPTURE(ic);
      IndexConfig idx = chunks(ic);

      Schedule inter = os_interleave(t, idx);
      REQUIRE(inter.num_chunks() == ic);
      CHECK_NOTHROW(validate_schedule(inter, t));
      for (int i = 0; i < ic; ++i) {
        CHECK(node_of(t, inter.assignments[i]) == i % t.num_nodes);
      }

      for (Schedule s : {shared_everything_numa(t, idx), shared_nothing(t, idx)}) {
        CHECK_NOTHROW(validate_schedule(s, t));
        // Node sequence must be non-decreasing (contiguous ranges)...
        std::vector<int> counts(t.num_nodes, 0);
        int prev_node = 0;
        for (int i = 0; i < ic; ++i) {
          const int node = node_of(t, s.assignments[i]);
          CHECK(node >= prev_node);
          prev_node = node;
          counts[node] += 1;
        }
        // ...with sizes within 1 of each other.
        const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
        CHECK(*hi - *lo <= 1);
      }
    }
  }
}

TEST_CASE("shared-nothing shares the clustered chunk map") {
  MachineTopology t = builtin_topology("sandy-bridge");
  Schedule a = shared_everything_numa(t, chunks(256));
  Schedule b = shared_nothing(t, chunks(256));
  CHECK(a.assignments == b.assignments);
}

TEST_CASE("interleave rotates cores within each node") {
  MachineTopology t = builtin_topology("tiny-2x2");  // nodes {0,1}, 2 cores each
  Schedule s = os_interleave(t, chunks(8));
  // node 0 chunks: 0,2,4,6 -> cores 0,1,0,1; node 1 chunks: 1,3,5,7 -> 2,3,2,3
  std::vector<int> want = {0, 2, 1, 3, 0, 2, 1, 3};
  for (int i = 0; i < 8; ++i) CHECK(s.assignments[i].index == want[i]);
}

TEST_CASE("validate_schedule rejects out-of-range cores") {
  MachineTopology t = builtin_topology("tiny-2x2");
  Schedule s;
  s.assignments = {CoreId{0}, CoreId{4}};
  CHECK_THROWS_AS(validate_schedule(s, t), ContractError);
  s.assignments = {CoreId{0}, CoreId{-1}};
  CHECK_THROWS_AS(validate_schedule(s, t), ContractError);
}

TEST_CASE("random policies are seeded and bias-sensitive") {
  MachineTopology t = builtin_topology("sandy-bridge");
  IndexConfig idx = chunks(256);
  Schedule a = random_policy(t, idx, 5, 0.5);
  Schedule b = random_policy(t, idx, 5, 0.5);
  CHECK(a.assignments == b.assignments);
  Schedule c = random_policy(t, idx, 6, 0.5);
  CHECK(a.assignments != c.assignments);
  CHECK_NOTHROW(validate_schedule(a, t));

  auto repeats = [](const Schedule& s) {
    int r = 0;
    for (size_t i = 1; i < s.assignments.size(); ++i) {
      if (s.assignments[i] == s.assignments[i - 1]) ++r;
    }
    return r;
  };
  // bias 1.0 pins everything to one core; bias 0 rarely repeats (1/32 chance).
  CHECK(repeats(random_policy(t, idx, 7, 1.0)) == 255);
  CHECK(repeats(random_policy(t, idx, 7, 0.0)) < 40);
  CHECK(repeats(random_policy(t, idx, 8, 0.9)) > 180);
  CHECK_THROWS_AS(random_policy(t, idx, 0, 1.5), ContractError);
}

TEST_CASE("baseline kinds map to names and builders") {
  MachineTopology t = builtin_topology("tiny-4x1");
  CHECK(std::string(baseline_name(BaselineKind::OsDefault)) == "os-default");
  CHECK(std::string(baseline_name(BaselineKind::OsInterleave)) == "os-interleave");
  CHECK(std::string(baseline_name(BaselineKind::SharedEverythingNuma)) == "se-numa");
  CHECK(std::string(baseline_name(BaselineKind::SharedNothing)) == "shared-nothing");
  Schedule s = make_baseline(BaselineKind::OsInterleave, t, chunks(16));
  CHECK(s.assignments == os_interleave(t, chunks(16)).assignments);
}

}  // TEST_SUITE
