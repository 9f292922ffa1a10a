#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace ctxforest {

/// Directed network with explicit source and sink nodes. Arcs are stored in
/// pairs (arc, reverse) so residual capacities live next to each other.
class FlowNetwork {
 public:
  struct Arc {
    std::uint32_t head;
    double capacity;
  };

  FlowNetwork(std::size_t num_nodes, std::size_t source, std::size_t sink);

  std::size_t add_node();
  /// Adds from->to with `capacity` and to->from with `reverse_capacity`.
  void add_arc(std::size_t from, std::size_t to, double capacity, double reverse_capacity = 0.0);

  std::size_t num_nodes() const { return out_.size(); }
  std::size_t source() const { return source_; }
  std::size_t sink() const { return sink_; }
  const std::vector<Arc>& arcs() const { return arcs_; }
  /// Arc ids leaving a node; arc id ^ 1 is its reverse.
  const std::vector<std::uint32_t>& out_arcs(std::size_t node) const { return out_[node]; }
  std::uint32_t tail(std::uint32_t arc) const { return arcs_[arc ^ 1U].head; }

 private:
  std::vector<Arc> arcs_;
  std::vector<std::vector<std::uint32_t>> out_;
  std::size_t source_;
  std::size_t sink_;
};

struct MaxFlowResult {
  double flow = 0.0;
  /// 1 for nodes on the source side of the minimum cut.
  std::vector<std::uint8_t> source_side;
  /// Capacity of the returned cut, recomputed from the original arcs.
  double cut = 0.0;
};

/// Two-search-tree augmenting path max-flow (grow / augment / adopt).
MaxFlowResult max_flow(const FlowNetwork& net);

/// Total capacity of arcs leaving the source side.
double cut_capacity(const FlowNetwork& net, const std::vector<std::uint8_t>& source_side);

}  // namespace ctxforest
