#pragma once

#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace evplan {

struct PathNode {
  std::string node_id;
  double x = 0.0;
  double y = 0.0;
  double cum_dist_km = 0.0;
  // set by grid snapping; -1 means not snapped
  int cell_row = -1;
  int cell_col = -1;
};

/// An EV driving path: origin, interior candidate stops, destination, with
/// cumulative along-path distances starting at 0.
struct TravelPath {
  std::string id;
  std::vector<PathNode> nodes;
  double flow = 0.0;  ///< vehicles/week

  double length_km() const {
    return nodes.empty() ? 0.0 : nodes.back().cum_dist_km;
  }
};

struct LoadResult {
  std::vector<TravelPath> paths;
  std::vector<std::string> diagnostics;  ///< per-path rejections, etc.
};

/// Parses path nodes from `path_id,seq,node_id,x,y,cum_dist_km` rows. Paths
/// with non-monotone or nonzero-start cumulative distances are rejected
/// individually with a line-numbered diagnostic; duplicate (path_id, seq)
/// pairs abort the load.
LoadResult load_paths(std::istream& nodes_csv);

/// File variant; the optional meta file (`path_id,flow_per_week`) attaches
/// weekly flows. Paths without a meta row keep flow 0 and get a diagnostic.
LoadResult load_paths(const std::string& nodes_path,
                      const std::optional<std::string>& meta_path);

enum class RangeFilterMode { StrictGreater, GreaterEqual };

/// Keeps paths longer than the driving range (vehicles on shorter paths never
/// need an intermediate stop). Order preserved.
std::vector<TravelPath> filter_by_range(const std::vector<TravelPath>& paths,
                                        double range_km,
                                        RangeFilterMode mode = RangeFilterMode::StrictGreater);

struct GridSpec {
  int rows = 1;
  int cols = 1;
  double x_min = 0.0, y_min = 0.0, x_max = 1.0, y_max = 1.0;

  void validate() const;
  /// Cell of a point; coordinates outside the bbox clamp to the border cells.
  std::pair<int, int> cell_of(double x, double y) const;
  static std::string cell_id(int row, int col);
};

struct SnapResult {
  std::vector<TravelPath> paths;  ///< interior node ids rewritten to cell ids
  std::map<std::string, std::string> node_to_cell;
  std::vector<std::string> candidates;  ///< distinct interior cells, sorted
  std::vector<std::string> warnings;
  int clamped_nodes = 0;
};

/// Aggregates interior path nodes onto grid cells. Stops of different paths
/// in one cell become one candidate. Along-path distances stay the input
/// cumulative distances; consecutive stops collapsing into one cell keep the
/// first stop's distance.
SnapResult snap_to_grid(const std::vector<TravelPath>& paths,
                        const GridSpec& grid);

enum class OriginRule {
  HalfOrigin,        ///< trip ends reach stations within R/2 of o / d
  HalfFirstStation,  ///< within R/2 of the first / last candidate stop
};

/// Arc endpoints: kOrigin / kDest pseudo nodes or an index into `stops`.
constexpr int kOrigin = -1;
constexpr int kDest = -2;

struct Arc {
  int from = 0;
  int to = 0;
  double dist_km = 0.0;
};

/// Per-path expanded network: pseudo origin/destination plus the interior
/// candidate stops, and every arc admissible under the range rules.
struct ExpandedNetwork {
  std::string path_id;
  double flow = 0.0;
  std::vector<PathNode> stops;
  std::vector<Arc> arcs;
  bool feasible_by_construction = true;
  std::string infeasible_reason;

  std::string label(int endpoint) const;  ///< "o", "d" or the stop's node id
};

/// Builds the expanded network of one path for driving range R:
///   - (o, i) for stops within R/2 of the trip start (or of the first stop),
///   - (i, d) symmetrically at the trip end,
///   - (i, j) for ordered stop pairs within R.
/// A network without any (o, .) or (., d) arc is marked
/// infeasible-by-construction.
ExpandedNetwork expand_path(const TravelPath& path, double range_km,
                            OriginRule rule = OriginRule::HalfOrigin);

constexpr double kUncapped = std::numeric_limits<double>::infinity();

struct Candidate {
  std::string id;
  int cell_row = -1;
  int cell_col = -1;
  double cost = 1.0;
  double capacity = kUncapped;  ///< vehicles/week
};

struct CostSpec {
  double default_cost = 1.0;
  std::map<std::string, double> overrides;  ///< by candidate id
};

struct CapacitySpec {
  bool uncapacitated = true;
  double value = 0.0;
  bool per_hour = false;
  double hours_per_week = 168.0;

  double per_week() const { return per_hour ? value * hours_per_week : value; }
};

/// Station-planning instance: deduplicated candidates with costs and
/// capacities, per-path expanded networks referencing them, the station
/// budget, and the total weekly flow.
struct MilpInstance {
  std::vector<Candidate> candidates;

  struct PathNet {
    std::string path_id;
    double flow = 0.0;
    std::vector<int> stop_candidate;  ///< stop index -> candidate index
    std::vector<Arc> arcs;            ///< endpoints in stop-index space
    bool feasible_by_construction = true;
  };
  std::vector<PathNet> networks;

  double p_max = 0.0;      ///< station budget (count)
  double total_flow = 0.0; ///< sum of path flows = total charging demand

  int candidate_index(const std::string& id) const;
  std::string arc_label(const PathNet& net, int endpoint) const;
};

/// Deduplicates candidates across paths (ordered by grid cell, then id) and
/// normalizes capacities to vehicles/week. Uncapacitated instances substitute
/// the total flow for each capacity, which keeps the relaxation well scaled.
/// Omitting the budget means "no budget row" (p_max = candidate count).
MilpInstance assemble_instance(const std::vector<ExpandedNetwork>& networks,
                               const CostSpec& costs,
                               const CapacitySpec& capacity,
                               std::optional<double> budget);

}  // namespace evplan
