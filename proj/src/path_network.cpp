#include "evplan/path_network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "evplan/text.hpp"

namespace evplan {

namespace {

struct RawRow {
  long long seq;
  PathNode node;
  int line;
};

}  // namespace

LoadResult load_paths(std::istream& nodes_csv) {
  LoadResult out;
  std::string line;
  int line_no = 0;
  if (!std::getline(nodes_csv, line)) {
    throw std::runtime_error("path csv: empty file");
  }
  ++line_no;
  if (csv_fields(line) !=
      std::vector<std::string>{"path_id", "seq", "node_id", "x", "y", "cum_dist_km"}) {
    throw std::runtime_error("path csv: bad header, expected path_id,seq,node_id,x,y,cum_dist_km");
  }

  // group rows by path_id in file order
  std::vector<std::pair<std::string, std::vector<RawRow>>> groups;
  std::map<std::string, size_t> group_index;
  std::set<std::pair<std::string, long long>> seen_seq;
  while (std::getline(nodes_csv, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto f = csv_fields(line);
    if (f.size() != 6) {
      throw std::runtime_error("path csv line " + std::to_string(line_no) +
                               ": expected 6 fields");
    }
    auto seq = parse_int(f[1]);
    auto x = parse_double(f[3]);
    auto y = parse_double(f[4]);
    auto cd = parse_double(f[5]);
    if (!seq || !x || !y || !cd) {
      throw std::runtime_error("path csv line " + std::to_string(line_no) +
                               ": malformed numeric field");
    }
    if (!seen_seq.insert({f[0], *seq}).second) {
      throw std::runtime_error("path csv line " + std::to_string(line_no) +
                               ": duplicate (path_id, seq) = (" + f[0] + ", " +
                               std::to_string(*seq) + ")");
    }
    auto it = group_index.find(f[0]);
    if (it == group_index.end()) {
      group_index.emplace(f[0], groups.size());
      groups.push_back({f[0], {}});
      it = group_index.find(f[0]);
    }
    groups[it->second].second.push_back(
        {*seq, PathNode{f[2], *x, *y, *cd, -1, -1}, line_no});
  }

  for (auto& [path_id, rows] : groups) {
    std::stable_sort(rows.begin(), rows.end(),
                     [](const RawRow& a, const RawRow& b) { return a.seq < b.seq; });
    if (rows.size() < 2) {
      out.diagnostics.push_back("path " + path_id + " rejected: fewer than 2 nodes (line " +
                                std::to_string(rows.front().line) + ")");
      continue;
    }
    bool ok = true;
    if (rows.front().node.cum_dist_km != 0.0) {
      out.diagnostics.push_back("path " + path_id +
                                " rejected: cum_dist does not start at 0 (line " +
                                std::to_string(rows.front().line) + ")");
      ok = false;
    }
    for (size_t i = 1; ok && i < rows.size(); ++i) {
      if (!(rows[i].node.cum_dist_km > rows[i - 1].node.cum_dist_km)) {
        out.diagnostics.push_back("path " + path_id +
                                  " rejected: non-monotone cum_dist (line " +
                                  std::to_string(rows[i].line) + ")");
        ok = false;
      }
    }
    if (!ok) continue;
    TravelPath path;
    path.id = path_id;
    for (auto& r : rows) path.nodes.push_back(std::move(r.node));
    out.paths.push_back(std::move(path));
  }
  return out;
}

LoadResult load_paths(const std::string& nodes_path,
                      const std::optional<std::string>& meta_path) {
  std::ifstream nodes(nodes_path);
  if (!nodes) throw std::runtime_error("cannot open path csv: " + nodes_path);
  LoadResult out = load_paths(nodes);

  if (meta_path) {
    std::ifstream meta(*meta_path);
    if (!meta) throw std::runtime_error("cannot open path meta csv: " + *meta_path);
    std::string line;
    if (!std::getline(meta, line) ||
        csv_fields(line) != std::vector<std::string>{"path_id", "flow_per_week"}) {
      throw std::runtime_error("path meta csv: bad header, expected path_id,flow_per_week");
    }
    std::map<std::string, double> flows;
    int line_no = 1;
    while (std::getline(meta, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      auto f = csv_fields(line);
      auto flow = f.size() == 2 ? parse_double(f[1]) : std::nullopt;
      if (!flow || *flow < 0.0) {
        throw std::runtime_error("path meta csv line " + std::to_string(line_no) +
                                 ": malformed row");
      }
      flows[f[0]] = *flow;
    }
    for (auto& path : out.paths) {
      auto it = flows.find(path.id);
      if (it == flows.end()) {
        out.diagnostics.push_back("path " + path.id + ": no flow in meta file, using 0");
      } else {
        path.flow = it->second;
      }
    }
  }
  return out;
}

std::vector<TravelPath> filter_by_range(const std::vector<TravelPath>& paths,
                                        double range_km, RangeFilterMode mode) {
  if (!(range_km > 0.0)) {
    throw std::invalid_argument("filter_by_range: range must be > 0");
  }
  std::vector<TravelPath> out;
  for (const auto& p : paths) {
    const bool keep = mode == RangeFilterMode::StrictGreater
                          ? p.length_km() > range_km
                          : p.length_km() >= range_km;
    if (keep) out.push_back(p);
  }
  return out;
}

void GridSpec::validate() const {
  if (rows < 1 || cols < 1) throw std::invalid_argument("GridSpec: rows/cols must be >= 1");
  if (!(x_max > x_min) || !(y_max > y_min)) {
    throw std::invalid_argument("GridSpec: degenerate bounding box");
  }
}

std::pair<int, int> GridSpec::cell_of(double x, double y) const {
  const double fx = (x - x_min) / (x_max - x_min);
  const double fy = (y - y_min) / (y_max - y_min);
  int col = static_cast<int>(std::floor(fx * cols));
  int row = static_cast<int>(std::floor(fy * rows));
  col = std::clamp(col, 0, cols - 1);
  row = std::clamp(row, 0, rows - 1);
  return {row, col};
}

std::string GridSpec::cell_id(int row, int col) {
  return "r" + std::to_string(row) + "c" + std::to_string(col);
}

SnapResult snap_to_grid(const std::vector<TravelPath>& paths, const GridSpec& grid) {
  grid.validate();
  SnapResult out;
  std::set<std::string> candidate_set;
  for (const auto& path : paths) {
    TravelPath snapped;
    snapped.id = path.id;
    snapped.flow = path.flow;
    std::set<std::string> cells_on_path;
    for (size_t i = 0; i < path.nodes.size(); ++i) {
      PathNode node = path.nodes[i];
      const bool interior = i > 0 && i + 1 < path.nodes.size();
      const bool outside = node.x < grid.x_min || node.x > grid.x_max ||
                           node.y < grid.y_min || node.y > grid.y_max;
      if (outside) {
        ++out.clamped_nodes;
        out.warnings.push_back("node " + node.node_id + " of path " + path.id +
                               " outside the grid bbox; clamped");
      }
      const auto [row, col] = grid.cell_of(node.x, node.y);
      const std::string cell = GridSpec::cell_id(row, col);
      out.node_to_cell.emplace(node.node_id, cell);
      if (!interior) {
        snapped.nodes.push_back(node);  // o/d stay pseudo nodes
        continue;
      }
      node.cell_row = row;
      node.cell_col = col;
      node.node_id = cell;
      if (!snapped.nodes.empty() && snapped.nodes.back().node_id == cell) {
        continue;  // consecutive stops in one cell: keep the first passage
      }
      if (!cells_on_path.insert(cell).second) {
        out.warnings.push_back("path " + path.id + " revisits cell " + cell +
                               "; only the first passage is kept");
        continue;
      }
      candidate_set.insert(cell);
      snapped.nodes.push_back(std::move(node));
    }
    out.paths.push_back(std::move(snapped));
  }
  out.candidates.assign(candidate_set.begin(), candidate_set.end());
  return out;
}

std::string ExpandedNetwork::label(int endpoint) const {
  if (endpoint == kOrigin) return "o";
  if (endpoint == kDest) return "d";
  return stops.at(static_cast<size_t>(endpoint)).node_id;
}

ExpandedNetwork expand_path(const TravelPath& path, double range_km, OriginRule rule) {
  if (!(range_km > 0.0)) {
    throw std::invalid_argument("expand_path: range must be > 0");
  }
  if (path.nodes.size() < 2) {
    throw std::invalid_argument("expand_path: path needs at least 2 nodes");
  }
  ExpandedNetwork net;
  net.path_id = path.id;
  net.flow = path.flow;
  net.stops.assign(path.nodes.begin() + 1, path.nodes.end() - 1);

  if (net.stops.empty()) {
    net.feasible_by_construction = false;
    net.infeasible_reason = "no candidate stations on path";
    return net;
  }

  const double origin_pos = path.nodes.front().cum_dist_km;
  const double dest_pos = path.nodes.back().cum_dist_km;
  const double half = range_km / 2.0;
  const double start_ref = rule == OriginRule::HalfOrigin
                               ? origin_pos
                               : net.stops.front().cum_dist_km;
  const double end_ref = rule == OriginRule::HalfOrigin
                             ? dest_pos
                             : net.stops.back().cum_dist_km;

  const int n = static_cast<int>(net.stops.size());
  bool has_origin_arc = false, has_dest_arc = false;
  for (int i = 0; i < n; ++i) {
    const double d = net.stops[i].cum_dist_km - start_ref;
    if (d >= 0.0 && d <= half) {
      net.arcs.push_back({kOrigin, i, net.stops[i].cum_dist_km - origin_pos});
      has_origin_arc = true;
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double d = net.stops[j].cum_dist_km - net.stops[i].cum_dist_km;
      if (d <= range_km) net.arcs.push_back({i, j, d});
    }
  }
  for (int i = 0; i < n; ++i) {
    const double d = end_ref - net.stops[i].cum_dist_km;
    if (d >= 0.0 && d <= half) {
      net.arcs.push_back({i, kDest, dest_pos - net.stops[i].cum_dist_km});
      has_dest_arc = true;
    }
  }

  if (!has_origin_arc || !has_dest_arc) {
    net.feasible_by_construction = false;
    net.infeasible_reason = !has_origin_arc
                                ? "no station reachable from the origin"
                                : "no station within reach of the destination";
  }
  return net;
}

int MilpInstance::candidate_index(const std::string& id) const {
  for (int i = 0; i < static_cast<int>(candidates.size()); ++i) {
    if (candidates[i].id == id) return i;
  }
  return -1;
}

std::string MilpInstance::arc_label(const PathNet& net, int endpoint) const {
  if (endpoint == kOrigin) return "o";
  if (endpoint == kDest) return "d";
  return candidates.at(static_cast<size_t>(net.stop_candidate.at(
                           static_cast<size_t>(endpoint)))).id;
}

MilpInstance assemble_instance(const std::vector<ExpandedNetwork>& networks,
                               const CostSpec& costs,
                               const CapacitySpec& capacity,
                               std::optional<double> budget) {
  if (networks.empty()) {
    throw std::invalid_argument("assemble_instance: no expanded networks");
  }
  if (costs.default_cost < 0.0) {
    throw std::invalid_argument("assemble_instance: negative default cost");
  }
  for (const auto& [id, c] : costs.overrides) {
    if (c < 0.0) throw std::invalid_argument("assemble_instance: negative cost for " + id);
  }
  if (!capacity.uncapacitated && !(capacity.per_week() > 0.0)) {
    throw std::invalid_argument("assemble_instance: capacity must be > 0");
  }
  if (budget && *budget < 0.0) {
    throw std::invalid_argument("assemble_instance: negative budget");
  }

  MilpInstance inst;
  for (const auto& net : networks) inst.total_flow += net.flow;

  // Candidate set: ordered by grid cell, then id, so assembly is idempotent.
  std::map<std::tuple<int, int, std::string>, Candidate> ordered;
  for (const auto& net : networks) {
    for (const auto& stop : net.stops) {
      std::tuple<int, int, std::string> key{stop.cell_row, stop.cell_col, stop.node_id};
      auto it = ordered.find(key);
      if (it == ordered.end()) {
        Candidate c;
        c.id = stop.node_id;
        c.cell_row = stop.cell_row;
        c.cell_col = stop.cell_col;
        auto ov = costs.overrides.find(c.id);
        c.cost = ov != costs.overrides.end() ? ov->second : costs.default_cost;
        c.capacity = capacity.uncapacitated ? inst.total_flow : capacity.per_week();
        ordered.emplace(key, std::move(c));
      }
    }
  }
  std::map<std::string, int> index_of;
  for (auto& [key, cand] : ordered) {
    index_of[cand.id] = static_cast<int>(inst.candidates.size());
    inst.candidates.push_back(cand);
  }

  for (const auto& net : networks) {
    MilpInstance::PathNet pn;
    pn.path_id = net.path_id;
    pn.flow = net.flow;
    pn.arcs = net.arcs;
    pn.feasible_by_construction = net.feasible_by_construction;
    for (const auto& stop : net.stops) pn.stop_candidate.push_back(index_of.at(stop.node_id));
    inst.networks.push_back(std::move(pn));
  }

  inst.p_max = budget ? *budget : static_cast<double>(inst.candidates.size());
  return inst;
}

}  // namespace evplan
