#include "pole/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "pole/errors.hpp"

namespace pole {

namespace {

constexpr int kGridColumns = 16;

// Fixed palette; fill is indexed by node % 8.
const char* kNodePalette[8] = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759",
                               "#b07aa1", "#76b7b2", "#edc948", "#9c755f"};

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string csv_name(std::string s) {
  for (char& c : s) {
    if (c == '-' || c == ':' || c == ' ') c = '_';
  }
  return s;
}

}  // namespace

std::string eval_raw_csv(const std::vector<Episode>& episodes) {
  std::ostringstream out;
  out << "topology,workload,policy,seed,total_return,mean_throughput_qps,local_accesses,"
         "remote_accesses\n";
  for (const Episode& ep : episodes) {
    out << ep.topology_name << ',' << ep.workload_name << ',' << ep.policy << ',' << ep.seed
        << ',' << fmt_double(ep.total_return) << ',' << fmt_double(ep.mean_throughput_qps) << ','
        << fmt_double(ep.total_local_accesses) << ',' << fmt_double(ep.total_remote_accesses)
        << '\n';
  }
  return out.str();
}

std::string eval_summary_csv(const EvalReport& report) {
  std::ostringstream out;
  if (report.cells.empty()) {
    return "topology,workload,seen,best_baseline,best_baseline_mean,pole_mean,speedup\n";
  }
  const auto& first = report.cells.front().policies;
  out << "topology,workload,seen";
  for (const PolicySummary& p : first) {
    const std::string n = csv_name(p.policy);
    out << ',' << n << "_return_mean," << n << "_return_std," << n << "_qps_mean";
  }
  out << ",best_baseline,best_baseline_mean,pole_mean,speedup\n";
  for (const EvalCell& cell : report.cells) {
    if (cell.policies.size() != first.size()) {
      throw ContractError("evaluation cells disagree on the policy list");
    }
    out << cell.topology << ',' << cell.workload << ',' << (cell.seen ? "seen" : "unseen");
    for (const PolicySummary& p : cell.policies) {
      out << ',' << fmt_double(p.mean_return) << ',' << fmt_double(p.std_return) << ','
          << fmt_double(p.mean_throughput);
    }
    out << ',' << cell.best_baseline << ',' << fmt_double(cell.best_baseline_mean) << ','
        << fmt_double(cell.pole_mean) << ',' << fmt_double(cell.speedup) << '\n';
  }
  return out.str();
}

std::string train_curve_csv(const std::vector<double>& losses, const std::vector<double>& accs) {
  if (losses.size() != accs.size()) {
    throw ContractError("training curve loss/accuracy lengths differ");
  }
  std::ostringstream out;
  out << "epoch,loss,accuracy\n";
  for (size_t i = 0; i < losses.size(); ++i) {
    out << i << ',' << fmt_double(losses[i]) << ',' << fmt_double(accs[i]) << '\n';
  }
  return out.str();
}

std::string policy_grid_text(const Schedule& schedule, const MachineTopology& topology) {
  const int n = schedule.num_chunks();
  if (n == 0) throw ContractError("cannot render an empty schedule");
  std::ostringstream out;
  for (int i = 0; i < n; ++i) {
    const int core = schedule.assignments[i].index;
    if (core < 0 || core >= topology.total_cores()) {
      throw ContractError("schedule assigns chunk " + std::to_string(i) +
                          " to out-of-range core " + std::to_string(core));
    }
    const int node = core / topology.cores_per_node;
    char cell[32];
    std::snprintf(cell, sizeof(cell), "[%d]%3d", node, core);
    out << cell;
    if ((i + 1) % kGridColumns == 0 || i + 1 == n) {
      out << '\n';
    } else {
      out << ' ';
    }
  }
  return out.str();
}

std::string policy_grid_svg(const Schedule& schedule, const MachineTopology& topology) {
  const int n = schedule.num_chunks();
  if (n == 0) throw ContractError("cannot render an empty schedule");
  const int rows = (n + kGridColumns - 1) / kGridColumns;
  const int cw = 34;
  const int ch = 24;
  const int margin = 6;
  const int width = margin * 2 + kGridColumns * cw;
  const int height = margin * 2 + rows * ch;

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  out << "<style>text{font:11px monospace;fill:#111;text-anchor:middle;}"
         "rect{stroke:#333;stroke-width:0.5;}</style>\n";
  for (int i = 0; i < n; ++i) {
    const int core = schedule.assignments[i].index;
    if (core < 0 || core >= topology.total_cores()) {
      throw ContractError("schedule assigns chunk " + std::to_string(i) +
                          " to out-of-range core " + std::to_string(core));
    }
    const int node = core / topology.cores_per_node;
    const int r = i / kGridColumns;
    const int c = i % kGridColumns;
    const int x = margin + c * cw;
    const int y = margin + r * ch;
    out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cw << "\" height=\"" << ch
        << "\" fill=\"" << kNodePalette[node % 8] << "\"/>\n";
    out << "<text x=\"" << x + cw / 2 << "\" y=\"" << y + ch / 2 + 4 << "\">" << core
        << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string schedule_to_csv(const Schedule& schedule) {
  std::ostringstream out;
  out << "chunk,core\n";
  for (int i = 0; i < schedule.num_chunks(); ++i) {
    out << i << ',' << schedule.assignments[i].index << '\n';
  }
  return out.str();
}

Schedule schedule_from_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open schedule file '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != "chunk,core") {
    throw IoError(path + ": expected a 'chunk,core' header row");
  }
  Schedule s;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    int chunk = -1;
    int core = -1;
    if (std::sscanf(line.c_str(), "%d,%d", &chunk, &core) != 2) {
      throw IoError(path + ":" + std::to_string(lineno) + ": malformed row '" + line + "'");
    }
    if (chunk != static_cast<int>(s.assignments.size())) {
      throw IoError(path + ":" + std::to_string(lineno) + ": chunks must be contiguous from 0");
    }
    if (core < 0) {
      throw IoError(path + ":" + std::to_string(lineno) + ": negative core id");
    }
    s.assignments.push_back(CoreId{core});
  }
  if (s.assignments.empty()) throw IoError(path + ": no schedule rows");
  return s;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("failed while writing '" + path + "'");
}

}  // namespace pole
