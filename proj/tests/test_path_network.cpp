#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "evplan/path_network.hpp"

using namespace evplan;

namespace {

TravelPath fig9_path() {
  TravelPath p;
  p.id = "1";
  p.flow = 80.0;
  p.nodes = {{"o", 0, 0, 0},   {"A", 10, 0, 10},  {"B", 50, 0, 50},
             {"C", 80, 0, 80}, {"D", 120, 0, 120}, {"d", 130, 0, 130}};
  return p;
}

std::set<std::pair<std::string, std::string>> arc_labels(const ExpandedNetwork& net) {
  std::set<std::pair<std::string, std::string>> out;
  for (const auto& arc : net.arcs) {
    out.insert({net.label(arc.from), net.label(arc.to)});
  }
  return out;
}

const std::set<std::pair<std::string, std::string>> kFig9Arcs = {
    {"o", "A"}, {"o", "B"}, {"A", "B"}, {"A", "C"}, {"B", "C"},
    {"B", "D"}, {"C", "D"}, {"C", "d"}, {"D", "d"}};

}  // namespace

TEST_CASE("load_paths parses and validates") {
  std::istringstream csv(
      "path_id,seq,node_id,x,y,cum_dist_km\n"
      "1,0,o,0,0,0\n"
      "1,1,d,5,0,5\n");
  LoadResult r = load_paths(csv);
  REQUIRE(r.paths.size() == 1);
  CHECK(r.paths[0].length_km() == 5.0);
  CHECK(r.paths[0].nodes.size() == 2);
  CHECK(r.diagnostics.empty());
}

TEST_CASE("load_paths rejects a corrupt path but keeps the others") {
  std::istringstream csv(
      "path_id,seq,node_id,x,y,cum_dist_km\n"
      "1,0,o,0,0,0\n"
      "1,1,d,5,0,5\n"
      "2,0,o,0,0,0\n"
      "2,1,m,3,0,9\n"
      "2,2,d,5,0,7\n"   // cum_dist drops: reject path 2
      "3,0,o,0,0,0\n"
      "3,1,d,4,0,4\n");
  LoadResult r = load_paths(csv);
  CHECK(r.paths.size() == 2);
  REQUIRE(r.diagnostics.size() == 1);
  CHECK(r.diagnostics[0].find("path 2") != std::string::npos);
  CHECK(r.diagnostics[0].find("line 6") != std::string::npos);
}

TEST_CASE("load_paths aborts on duplicate (path_id, seq)") {
  std::istringstream csv(
      "path_id,seq,node_id,x,y,cum_dist_km\n"
      "1,0,o,0,0,0\n"
      "1,0,m,1,0,1\n"
      "1,1,d,5,0,5\n");
  CHECK_THROWS_WITH_AS(load_paths(csv),
                       doctest::Contains("duplicate (path_id, seq)"),
                       std::runtime_error);
}

TEST_CASE("load_paths reads the bundled fixture") {
  const std::string dir = std::string(EVPLAN_FIXTURES) + "/fig9";
  LoadResult r = load_paths(dir + "/path_nodes.csv", dir + "/path_meta.csv");
  REQUIRE(r.paths.size() == 1);
  CHECK(r.paths[0].length_km() == 130.0);
  CHECK(r.paths[0].flow == 80.0);
  CHECK(r.paths[0].nodes.size() == 6);
}

TEST_CASE("range filter keeps strictly longer paths by default") {
  std::vector<TravelPath> paths(3);
  paths[0].id = "a"; paths[0].nodes = {{"o", 0, 0, 0}, {"d", 0, 0, 100}};
  paths[1].id = "b"; paths[1].nodes = {{"o", 0, 0, 0}, {"d", 0, 0, 150}};
  paths[2].id = "c"; paths[2].nodes = {{"o", 0, 0, 0}, {"d", 0, 0, 160}};

  auto strict = filter_by_range(paths, 150.0);
  REQUIRE(strict.size() == 1);
  CHECK(strict[0].id == "c");

  CHECK(filter_by_range(paths, 250.0).empty());

  auto geq = filter_by_range(paths, 150.0, RangeFilterMode::GreaterEqual);
  REQUIRE(geq.size() == 2);
  CHECK(geq[0].id == "b");
  CHECK(geq[1].id == "c");

  // idempotence
  auto twice = filter_by_range(strict, 150.0);
  CHECK(twice.size() == strict.size());
}

TEST_CASE("grid cell arithmetic") {
  GridSpec grid{10, 10, 0.0, 0.0, 1.0, 1.0};
  CHECK(grid.cell_of(0.55, 0.35) == std::pair{3, 5});
  CHECK(grid.cell_of(0.0, 0.0) == std::pair{0, 0});
  CHECK(grid.cell_of(1.0, 1.0) == std::pair{9, 9});  // max edge clamps inward
  CHECK(grid.cell_of(2.0, -1.0) == std::pair{0, 9});

  CHECK_THROWS_AS((GridSpec{0, 10, 0, 0, 1, 1}).validate(), std::invalid_argument);
  CHECK_THROWS_AS((GridSpec{10, 10, 0, 0, 0, 1}).validate(), std::invalid_argument);
}

TEST_CASE("snapping merges cells across paths and preserves distances") {
  TravelPath p1;
  p1.id = "1";
  p1.nodes = {{"s1", 0, 0, 0}, {"m1", 0.52, 0.3, 40}, {"e1", 1, 1, 90}};
  TravelPath p2;
  p2.id = "2";
  p2.nodes = {{"s2", 0, 1, 0}, {"m2", 0.55, 0.35, 55}, {"e2", 1, 0, 130}};
  GridSpec grid{10, 10, 0.0, 0.0, 1.0, 1.0};

  SnapResult snapped = snap_to_grid({p1, p2}, grid);
  REQUIRE(snapped.candidates.size() == 1);  // both interiors in cell r3c5
  CHECK(snapped.candidates[0] == "r3c5");
  CHECK(snapped.paths[0].nodes[1].node_id == "r3c5");
  CHECK(snapped.paths[1].nodes[1].node_id == "r3c5");
  // along-path distances are the input cumulative values, bit-exact
  CHECK(snapped.paths[0].nodes[1].cum_dist_km == 40.0);
  CHECK(snapped.paths[1].nodes[1].cum_dist_km == 55.0);
  CHECK(snapped.paths[0].nodes[2].cum_dist_km == 90.0);
}

TEST_CASE("snapping clamps out-of-bbox nodes with a warning") {
  TravelPath p;
  p.id = "1";
  p.nodes = {{"s", 0, 0, 0}, {"m", 1.7, 0.5, 10}, {"e", 1, 1, 20}};
  GridSpec grid{10, 10, 0.0, 0.0, 1.0, 1.0};
  SnapResult snapped = snap_to_grid({p}, grid);
  CHECK(snapped.clamped_nodes == 1);
  CHECK(!snapped.warnings.empty());
  CHECK(snapped.paths[0].nodes[1].cell_col == 9);
}

TEST_CASE("refining the grid never loses candidates") {
  std::mt19937 rng(101);
  std::uniform_real_distribution<double> coord(0.0, 100.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<TravelPath> paths;
    for (int p = 0; p < 6; ++p) {
      TravelPath path;
      path.id = "p" + std::to_string(p);
      double cum = 0.0;
      const int stops = 4 + static_cast<int>(rng() % 4);
      for (int i = 0; i < stops; ++i) {
        cum += 1.0 + coord(rng) * 0.3;
        path.nodes.push_back({"n" + std::to_string(p) + "_" + std::to_string(i),
                              coord(rng), coord(rng), i == 0 ? 0.0 : cum});
      }
      paths.push_back(path);
    }
    GridSpec coarse{10, 10, 0.0, 0.0, 100.0, 100.0};
    GridSpec fine{50, 50, 0.0, 0.0, 100.0, 100.0};
    const size_t coarse_count = snap_to_grid(paths, coarse).candidates.size();
    const size_t fine_count = snap_to_grid(paths, fine).candidates.size();
    CHECK(fine_count >= coarse_count);
  }
}

TEST_CASE("the four-stop path expands to exactly the nine admissible arcs") {
  for (OriginRule rule : {OriginRule::HalfOrigin, OriginRule::HalfFirstStation}) {
    ExpandedNetwork net = expand_path(fig9_path(), 100.0, rule);
    CHECK(net.feasible_by_construction);
    CHECK(net.stops.size() == 4);
    CHECK(arc_labels(net) == kFig9Arcs);
    CHECK(net.arcs.size() == 9);
  }
}

TEST_CASE("expansion distances are along-path") {
  ExpandedNetwork net = expand_path(fig9_path(), 100.0);
  for (const auto& arc : net.arcs) {
    const double from_pos = arc.from == kOrigin ? 0.0
                            : net.stops[static_cast<size_t>(arc.from)].cum_dist_km;
    const double to_pos = arc.to == kDest ? 130.0
                          : net.stops[static_cast<size_t>(arc.to)].cum_dist_km;
    CHECK(arc.dist_km == to_pos - from_pos);
    CHECK(arc.dist_km <= (arc.from == kOrigin || arc.to == kDest ? 100.0 : 100.0));
  }
}

TEST_CASE("no direct o-d arc, ever") {
  // even a short two-stop trip keeps the pseudo nodes apart
  TravelPath p;
  p.id = "short";
  p.nodes = {{"o", 0, 0, 0}, {"A", 0, 0, 5}, {"d", 0, 0, 10}};
  ExpandedNetwork net = expand_path(p, 1000.0);
  for (const auto& arc : net.arcs) {
    CHECK(!(arc.from == kOrigin && arc.to == kDest));
  }
  CHECK(net.feasible_by_construction);
}

TEST_CASE("zero candidates is infeasible by construction") {
  TravelPath p;
  p.id = "empty";
  p.nodes = {{"o", 0, 0, 0}, {"d", 0, 0, 10}};
  ExpandedNetwork net = expand_path(p, 1000.0);
  CHECK(!net.feasible_by_construction);
  CHECK(net.arcs.empty());
}

TEST_CASE("unreachable trip ends are flagged") {
  TravelPath p;
  p.id = "far";
  p.nodes = {{"o", 0, 0, 0}, {"A", 0, 0, 90}, {"d", 0, 0, 100}};
  ExpandedNetwork net = expand_path(p, 100.0);  // A is 90 > R/2 from o
  CHECK(!net.feasible_by_construction);
}

TEST_CASE("shrinking the range shrinks or preserves the arc set") {
  const TravelPath path = fig9_path();
  std::set<std::pair<std::string, std::string>> prev;
  for (double r : {260.0, 200.0, 150.0, 100.0, 70.0, 40.0}) {
    auto arcs = arc_labels(expand_path(path, r));
    if (!prev.empty()) {
      for (const auto& arc : arcs) CHECK(prev.count(arc) == 1);
      CHECK(arcs.size() <= prev.size());
    }
    prev = arcs;
  }
}

TEST_CASE("assembly: fig9 instance shape") {
  ExpandedNetwork net = expand_path(fig9_path(), 100.0);
  CostSpec costs;
  CapacitySpec cap;
  cap.uncapacitated = false;
  cap.value = 60.0;
  MilpInstance inst = assemble_instance({net}, costs, cap, 10.0);
  CHECK(inst.candidates.size() == 4);
  CHECK(inst.networks.size() == 1);
  CHECK(inst.networks[0].arcs.size() == 9);
  CHECK(inst.total_flow == 80.0);
  for (const auto& c : inst.candidates) {
    CHECK(c.capacity == 60.0);
    CHECK(c.cost == 1.0);
  }
}

TEST_CASE("assembly: uncapacitated substitutes the total flow") {
  ExpandedNetwork net = expand_path(fig9_path(), 100.0);
  MilpInstance inst = assemble_instance({net}, {}, {}, std::nullopt);
  for (const auto& c : inst.candidates) CHECK(c.capacity == 80.0);
  CHECK(inst.p_max == 4.0);
}

TEST_CASE("assembly: per-hour capacities convert to weekly") {
  ExpandedNetwork net = expand_path(fig9_path(), 100.0);
  CapacitySpec cap;
  cap.uncapacitated = false;
  cap.value = 5.0;
  cap.per_hour = true;
  MilpInstance inst = assemble_instance({net}, {}, cap, std::nullopt);
  for (const auto& c : inst.candidates) CHECK(c.capacity == 840.0);

  cap.hours_per_week = 24.0;
  MilpInstance daily = assemble_instance({net}, {}, cap, std::nullopt);
  for (const auto& c : daily.candidates) CHECK(c.capacity == 120.0);
}

TEST_CASE("assembly: deduplication is idempotent and deterministic") {
  TravelPath p1 = fig9_path();
  TravelPath p2 = fig9_path();
  p2.id = "2";
  std::reverse(p2.nodes.begin(), p2.nodes.end());
  for (auto& n : p2.nodes) n.cum_dist_km = 130.0 - n.cum_dist_km;

  auto nets = std::vector<ExpandedNetwork>{expand_path(p1, 100.0), expand_path(p2, 100.0)};
  MilpInstance a = assemble_instance(nets, {}, {}, std::nullopt);
  MilpInstance b = assemble_instance(nets, {}, {}, std::nullopt);
  CHECK(a.candidates.size() == 4);  // shared stations dedup across paths
  REQUIRE(a.candidates.size() == b.candidates.size());
  for (size_t i = 0; i < a.candidates.size(); ++i) {
    CHECK(a.candidates[i].id == b.candidates[i].id);
  }
}

TEST_CASE("assembly: error paths") {
  ExpandedNetwork net = expand_path(fig9_path(), 100.0);
  CostSpec bad_cost;
  bad_cost.default_cost = -1.0;
  CHECK_THROWS_AS(assemble_instance({net}, bad_cost, {}, std::nullopt),
                  std::invalid_argument);
  CapacitySpec bad_cap;
  bad_cap.uncapacitated = false;
  bad_cap.value = -5.0;
  CHECK_THROWS_AS(assemble_instance({net}, {}, bad_cap, std::nullopt),
                  std::invalid_argument);
  CHECK_THROWS_AS(assemble_instance({net}, {}, {}, -1.0), std::invalid_argument);
}

TEST_CASE("arc rules replayed by an independent validator") {
  std::mt19937 rng(77);
  std::uniform_real_distribution<double> gap(5.0, 60.0);
  for (int trial = 0; trial < 20; ++trial) {
    TravelPath p;
    p.id = "t" + std::to_string(trial);
    double cum = 0.0;
    p.nodes.push_back({"o", 0, 0, 0.0});
    const int stops = 2 + static_cast<int>(rng() % 5);
    for (int i = 0; i < stops; ++i) {
      cum += gap(rng);
      p.nodes.push_back({"s" + std::to_string(i), cum, 0, cum});
    }
    cum += gap(rng);
    p.nodes.push_back({"d", cum, 0, cum});
    const double R = 80.0;

    for (OriginRule rule : {OriginRule::HalfOrigin, OriginRule::HalfFirstStation}) {
      ExpandedNetwork net = expand_path(p, R, rule);
      const double start_ref =
          rule == OriginRule::HalfOrigin ? 0.0 : net.stops.front().cum_dist_km;
      const double end_ref = rule == OriginRule::HalfOrigin
                                 ? p.length_km()
                                 : net.stops.back().cum_dist_km;
      std::set<std::pair<int, int>> got;
      for (const auto& arc : net.arcs) got.insert({arc.from, arc.to});
      // replay the three rules exhaustively
      const int n = static_cast<int>(net.stops.size());
      for (int i = 0; i < n; ++i) {
        const bool o_ok = net.stops[i].cum_dist_km - start_ref <= R / 2.0 &&
                          net.stops[i].cum_dist_km - start_ref >= 0.0;
        CHECK(got.count({kOrigin, i}) == (o_ok ? 1u : 0u));
        const bool d_ok = end_ref - net.stops[i].cum_dist_km <= R / 2.0 &&
                          end_ref - net.stops[i].cum_dist_km >= 0.0;
        CHECK(got.count({i, kDest}) == (d_ok ? 1u : 0u));
        for (int j = i + 1; j < n; ++j) {
          const bool ij_ok =
              net.stops[j].cum_dist_km - net.stops[i].cum_dist_km <= R;
          CHECK(got.count({i, j}) == (ij_ok ? 1u : 0u));
        }
      }
    }
  }
}
