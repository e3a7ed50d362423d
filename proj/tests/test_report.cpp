// Rendering and file-format tests: the chunk grids, the CSV outputs, and the
// schedule file round trip.
#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "pole/errors.hpp"
#include "pole/machine.hpp"
#include "pole/report.hpp"
#include "pole/simulator.hpp"

using namespace pole;

namespace {

std::string temp_path(const char* stem) {
  return std::string("/tmp/pole_test_") + stem + "_" + std::to_string(::getpid());
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Schedule sched(std::vector<int> cores) {
  Schedule s;
  for (int c : cores) s.assignments.push_back(CoreId{c});
  return s;
}

int count_occurrences(const std::string& hay, const std::string& needle) {
  int n = 0;
  for (size_t p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

TEST_SUITE("report") {

TEST_CASE("grid text: 16 chunks per row, node-bracketed cells") {
  const MachineTopology topo = builtin_topology("tiny-2x2");
  const Schedule s =
      sched({0, 1, 2, 3, 0, 0, 1, 1, 2, 2, 3, 3, 0, 2, 1, 3, 3, 2, 1, 0});

  const std::string text = policy_grid_text(s, topo);
  CHECK(text == slurp(std::string(POLE_TEST_DATA_DIR) + "/grid_tiny2x2_20.txt"));

  // Row boundaries follow chunk id: row r opens with chunk 16*r.
  std::vector<std::string> lines;
  std::stringstream ss(text);
  for (std::string l; std::getline(ss, l);) lines.push_back(l);
  REQUIRE(lines.size() == 2);
  CHECK(lines[0].substr(0, 6) == "[0]  0");   // chunk 0 -> core 0, node 0
  CHECK(lines[1].substr(0, 6) == "[1]  3");   // chunk 16 -> core 3, node 1
  CHECK(lines[0].size() == 16 * 6 + 15);      // 16 cells, single-space joined

  // A full 256-chunk schedule renders 16 rows.
  std::vector<int> big(256);
  for (int i = 0; i < 256; ++i) big[i] = i % 4;
  const std::string full = policy_grid_text(sched(big), topo);
  CHECK(count_occurrences(full, "\n") == 16);
}

TEST_CASE("grid svg: one labeled rect per chunk, node-indexed palette") {
  const MachineTopology topo = builtin_topology("tiny-2x2");
  const Schedule s = sched({0, 1, 2, 3, 0, 0, 1, 1, 2, 2, 3, 3, 0, 2, 1, 3, 3, 2, 1, 0});
  const std::string svg = policy_grid_svg(s, topo);

  CHECK(svg.rfind("<svg xmlns=\"http://www.w3.org/2000/svg\"", 0) == 0);
  CHECK(svg.find("viewBox=") != std::string::npos);
  CHECK(svg.substr(svg.size() - 7) == "</svg>\n");
  CHECK(count_occurrences(svg, "<rect") == 20);
  CHECK(count_occurrences(svg, "<text") == 20);

  // Node 0 and node 1 cells carry distinct fills; every fill is one of them.
  const int fills_node0 = count_occurrences(svg, "fill=\"#4e79a7\"");
  const int fills_node1 = count_occurrences(svg, "fill=\"#f28e2b\"");
  CHECK(fills_node0 == 10);  // cores 0 and 1 appear 10 times total
  CHECK(fills_node1 == 10);
  // Labels are bare core ids.
  CHECK(svg.find(">0</text>") != std::string::npos);
  CHECK(svg.find(">3</text>") != std::string::npos);

  // Deterministic output: no timestamps or random ids.
  CHECK(policy_grid_svg(s, topo) == svg);
}

TEST_CASE("grid rendering rejects broken schedules") {
  const MachineTopology topo = builtin_topology("tiny-2x2");
  CHECK_THROWS_AS(policy_grid_text(Schedule{}, topo), ContractError);
  CHECK_THROWS_AS(policy_grid_svg(Schedule{}, topo), ContractError);
  CHECK_THROWS_AS(policy_grid_text(sched({0, 4}), topo), ContractError);
  CHECK_THROWS_AS(policy_grid_svg(sched({-1}), topo), ContractError);
}

TEST_CASE("schedule csv round trip") {
  const Schedule s = sched({3, 1, 2, 0, 0, 1});
  const std::string csv = schedule_to_csv(s);
  CHECK(csv == "chunk,core\n0,3\n1,1\n2,2\n3,0\n4,0\n5,1\n");

  const std::string path = temp_path("sched");
  write_text_file(path, csv);
  const Schedule back = schedule_from_csv_file(path);
  REQUIRE(back.num_chunks() == s.num_chunks());
  for (int i = 0; i < s.num_chunks(); ++i) {
    CHECK(back.assignments[i].index == s.assignments[i].index);
  }

  SUBCASE("loader rejects malformed files") {
    write_text_file(path, "core,chunk\n0,0\n");
    CHECK_THROWS_AS(schedule_from_csv_file(path), IoError);

    write_text_file(path, "chunk,core\n0,0\n2,1\n");  // gap in chunk ids
    CHECK_THROWS_AS(schedule_from_csv_file(path), IoError);

    write_text_file(path, "chunk,core\n0,zero\n");
    CHECK_THROWS_AS(schedule_from_csv_file(path), IoError);

    write_text_file(path, "chunk,core\n0,-2\n");
    CHECK_THROWS_AS(schedule_from_csv_file(path), IoError);

    write_text_file(path, "chunk,core\n");
    CHECK_THROWS_AS(schedule_from_csv_file(path), IoError);

    CHECK_THROWS_AS(schedule_from_csv_file("/nonexistent/x.csv"), IoError);

    // Errors carry file and line for a quick jump to the offender.
    write_text_file(path, "chunk,core\n0,0\nbad line\n");
    try {
      schedule_from_csv_file(path);
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find(path + ":3") != std::string::npos);
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("raw episode csv carries one exact row per episode") {
  Episode ep;
  ep.topology_name = "tiny-2x2";
  ep.workload_name = "ycsb-a";
  ep.policy = "os-default";
  ep.seed = 7;
  ep.total_return = 6.5;
  ep.mean_throughput_qps = 120000.0;
  ep.total_local_accesses = 4096.0;
  ep.total_remote_accesses = 512.0;

  const std::string csv = eval_raw_csv({ep});
  CHECK(csv ==
        "topology,workload,policy,seed,total_return,mean_throughput_qps,local_accesses,"
        "remote_accesses\n"
        "tiny-2x2,ycsb-a,os-default,7,6.5,120000,4096,512\n");
  CHECK(eval_raw_csv({}) ==
        "topology,workload,policy,seed,total_return,mean_throughput_qps,local_accesses,"
        "remote_accesses\n");
}

TEST_CASE("summary csv lists per-policy columns and the speedup") {
  EvalReport rep;
  EvalCell cell;
  cell.topology = "tiny-2x2";
  cell.workload = "ycsb-a";
  cell.seen = true;
  cell.policies.push_back({"os-default", 1.5, 0.25, 100.0, 10.0, 2.0});
  cell.policies.push_back({"pole-dt", 3.0, 0.5, 200.0, 11.0, 1.0});
  cell.pole_mean = 3.0;
  cell.best_baseline_mean = 1.5;
  cell.best_baseline = "os-default";
  cell.speedup = 2.0;
  rep.cells.push_back(cell);

  const std::string csv = eval_summary_csv(rep);
  CHECK(csv ==
        "topology,workload,seen,os_default_return_mean,os_default_return_std,os_default_qps_mean,"
        "pole_dt_return_mean,pole_dt_return_std,pole_dt_qps_mean,"
        "best_baseline,best_baseline_mean,pole_mean,speedup\n"
        "tiny-2x2,ycsb-a,seen,1.5,0.25,100,3,0.5,200,os-default,1.5,3,2\n");

  // Every cell must list the same policies in the same order.
  EvalReport bad = rep;
  EvalCell odd = cell;
  odd.policies.pop_back();
  bad.cells.push_back(odd);
  CHECK_THROWS_AS(eval_summary_csv(bad), ContractError);

  CHECK(eval_summary_csv(EvalReport{}) ==
        "topology,workload,seen,best_baseline,best_baseline_mean,pole_mean,speedup\n");
}

TEST_CASE("training curve csv") {
  CHECK(train_curve_csv({1.5, 0.75}, {0.25, 0.5}) ==
        "epoch,loss,accuracy\n0,1.5,0.25\n1,0.75,0.5\n");
  CHECK_THROWS_AS(train_curve_csv({1.0}, {}), ContractError);
}

TEST_CASE("write_text_file writes exactly and reports failures") {
  const std::string path = temp_path("txt");
  write_text_file(path, "alpha\nbeta");
  CHECK(slurp(path) == "alpha\nbeta");
  write_text_file(path, "");  // truncates
  CHECK(slurp(path).empty());
  std::remove(path.c_str());
  CHECK_THROWS_AS(write_text_file("/nonexistent/dir/file.txt", "x"), IoError);
}

}  // TEST_SUITE
