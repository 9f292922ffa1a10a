#include "ctxforest/maxflow.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "ctxforest/error.hpp"

namespace ctxforest {

FlowNetwork::FlowNetwork(std::size_t num_nodes, std::size_t source, std::size_t sink)
    : out_(num_nodes), source_(source), sink_(sink) {
  if (source >= num_nodes || sink >= num_nodes) throw ValidationError("terminal outside the network");
  if (source == sink) throw ValidationError("source and sink must differ");
}

std::size_t FlowNetwork::add_node() {
  out_.emplace_back();
  return out_.size() - 1;
}

void FlowNetwork::add_arc(std::size_t from, std::size_t to, double capacity, double reverse_capacity) {
  if (from >= out_.size() || to >= out_.size()) throw ValidationError("arc endpoint outside the network");
  if (!(capacity >= 0.0) || !(reverse_capacity >= 0.0) || !std::isfinite(capacity) ||
      !std::isfinite(reverse_capacity)) {
    throw ValidationError("arc capacities must be finite and non-negative");
  }
  const auto id = static_cast<std::uint32_t>(arcs_.size());
  arcs_.push_back({static_cast<std::uint32_t>(to), capacity});
  arcs_.push_back({static_cast<std::uint32_t>(from), reverse_capacity});
  out_[from].push_back(id);
  out_[to].push_back(id + 1);
}

namespace {

// Boykov-Kolmogorov search trees rooted at the source (S) and sink (T).
// For an S node the parent arc points parent -> node; for a T node it
// points node -> parent. Both must keep positive residual capacity.
class TwoTreeSolver {
 public:
  explicit TwoTreeSolver(const FlowNetwork& net)
      : net_(net),
        residual_(net.arcs().size()),
        tree_(net.num_nodes(), kFree),
        parent_(net.num_nodes(), kNone),
        stamp_(net.num_nodes(), 0),
        dist_(net.num_nodes(), 0),
        queued_(net.num_nodes(), 0) {
    for (std::size_t a = 0; a < residual_.size(); ++a) residual_[a] = net.arcs()[a].capacity;
    tree_[net.source()] = kSource;
    tree_[net.sink()] = kSink;
    // Seed both trees with the terminals' neighbors so the terminals
    // themselves (often adjacent to every node) are not rescanned after
    // each augmentation.
    seed(static_cast<std::uint32_t>(net.source()), kSource);
    seed(static_cast<std::uint32_t>(net.sink()), kSink);
  }

  MaxFlowResult solve() {
    MaxFlowResult result;
    for (;;) {
      const std::uint32_t bridge = grow();
      if (bridge == kNone) break;
      ++time_;
      result.flow += augment(bridge);
      adopt();
    }
    result.source_side.resize(net_.num_nodes());
    for (std::size_t v = 0; v < net_.num_nodes(); ++v) result.source_side[v] = tree_[v] == kSource ? 1 : 0;
    result.cut = cut_capacity(net_, result.source_side);
    return result;
  }

 private:
  static constexpr std::uint8_t kFree = 0;
  static constexpr std::uint8_t kSource = 1;
  static constexpr std::uint8_t kSink = 2;
  static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

  bool is_root(std::uint32_t v) const { return v == net_.source() || v == net_.sink(); }

  // Residual capacity usable to extend tree t across arc a (leaving a tree node).
  double tree_capacity(std::uint8_t t, std::uint32_t a) const { return t == kSource ? residual_[a] : residual_[a ^ 1U]; }

  std::uint32_t parent_node(std::uint32_t v) const {
    const std::uint32_t a = parent_[v];
    return tree_[v] == kSource ? net_.tail(a) : net_.arcs()[a].head;
  }

  void seed(std::uint32_t root, std::uint8_t t) {
    bool blocked = false;
    for (std::uint32_t a : net_.out_arcs(root)) {
      if (tree_capacity(t, a) <= 0.0) continue;
      const std::uint32_t q = net_.arcs()[a].head;
      if (tree_[q] == kFree) {
        tree_[q] = t;
        parent_[q] = t == kSource ? a : (a ^ 1U);
        dist_[q] = 1;
        activate(q);
      } else if (tree_[q] != t) {
        blocked = true;  // direct source-sink arc or a node touching both terminals
      }
    }
    if (blocked) activate(root);
  }

  void activate(std::uint32_t v) {
    if (!queued_[v]) {
      queued_[v] = 1;
      active_.push_back(v);
    }
  }

  // Returns an arc oriented S -> T joining the trees, or kNone when the
  // active front is exhausted.
  std::uint32_t grow() {
    while (!active_.empty()) {
      const std::uint32_t p = active_.front();
      if (tree_[p] == kFree) {
        active_.pop_front();
        queued_[p] = 0;
        continue;
      }
      for (std::uint32_t a : net_.out_arcs(p)) {
        if (tree_capacity(tree_[p], a) <= 0.0) continue;
        const std::uint32_t q = net_.arcs()[a].head;
        if (tree_[q] == kFree) {
          tree_[q] = tree_[p];
          parent_[q] = tree_[p] == kSource ? a : (a ^ 1U);
          stamp_[q] = stamp_[p];
          dist_[q] = dist_[p] + 1;
          activate(q);
        } else if (tree_[q] != tree_[p]) {
          return tree_[p] == kSource ? a : (a ^ 1U);
        }
      }
      active_.pop_front();
      queued_[p] = 0;
    }
    return kNone;
  }

  double augment(std::uint32_t bridge) {
    double bottleneck = residual_[bridge];
    for (std::uint32_t v = net_.tail(bridge); !is_root(v); v = parent_node(v)) {
      bottleneck = std::min(bottleneck, residual_[parent_[v]]);
    }
    for (std::uint32_t v = net_.arcs()[bridge].head; !is_root(v); v = parent_node(v)) {
      bottleneck = std::min(bottleneck, residual_[parent_[v]]);
    }

    push(bridge, bottleneck);
    for (std::uint32_t v = net_.tail(bridge); !is_root(v);) {
      const std::uint32_t up = parent_node(v);
      push(parent_[v], bottleneck);
      if (residual_[parent_[v]] <= 0.0) make_orphan(v);
      v = up;
    }
    for (std::uint32_t v = net_.arcs()[bridge].head; !is_root(v);) {
      const std::uint32_t up = parent_node(v);
      push(parent_[v], bottleneck);
      if (residual_[parent_[v]] <= 0.0) make_orphan(v);
      v = up;
    }
    return bottleneck;
  }

  void push(std::uint32_t a, double amount) {
    residual_[a] -= amount;
    residual_[a ^ 1U] += amount;
  }

  void make_orphan(std::uint32_t v) {
    parent_[v] = kNone;
    orphans_.push_back(v);
  }

  // Distance from q to its tree root, or -1 if q hangs below an orphan.
  // Verified paths are stamped with the current time so later checks can
  // stop early.
  long origin_distance(std::uint32_t q) {
    long d = 0;
    std::uint32_t v = q;
    for (;;) {
      if (is_root(v)) break;
      if (stamp_[v] == time_) {
        d += dist_[v];
        break;
      }
      if (parent_[v] == kNone) return -1;
      v = parent_node(v);
      ++d;
    }
    long dd = d;
    for (v = q; !is_root(v) && stamp_[v] != time_; v = parent_node(v)) {
      stamp_[v] = time_;
      dist_[v] = dd--;
    }
    return d;
  }

  void adopt() {
    while (!orphans_.empty()) {
      const std::uint32_t p = orphans_.front();
      orphans_.pop_front();
      const std::uint8_t t = tree_[p];

      std::uint32_t best_arc = kNone;
      long best_dist = std::numeric_limits<long>::max();
      for (std::uint32_t a : net_.out_arcs(p)) {
        const std::uint32_t q = net_.arcs()[a].head;
        if (tree_[q] != t) continue;
        // Capacity from q into p (S) or from p into q (T).
        const double cap = t == kSource ? residual_[a ^ 1U] : residual_[a];
        if (cap <= 0.0) continue;
        const long d = origin_distance(q);
        if (d >= 0 && d < best_dist) {
          best_dist = d;
          best_arc = t == kSource ? (a ^ 1U) : a;
        }
      }
      if (best_arc != kNone) {
        parent_[p] = best_arc;
        stamp_[p] = time_;
        dist_[p] = best_dist + 1;
        continue;
      }

      for (std::uint32_t a : net_.out_arcs(p)) {
        const std::uint32_t q = net_.arcs()[a].head;
        if (tree_[q] != t) continue;
        const double cap = t == kSource ? residual_[a ^ 1U] : residual_[a];
        if (cap > 0.0) activate(q);
        if (!is_root(q) && parent_[q] != kNone && parent_node(q) == p) make_orphan(q);
      }
      tree_[p] = kFree;
    }
  }

  const FlowNetwork& net_;
  std::vector<double> residual_;
  std::vector<std::uint8_t> tree_;
  std::vector<std::uint32_t> parent_;
  std::vector<long> stamp_;
  std::vector<long> dist_;
  std::vector<std::uint8_t> queued_;
  std::deque<std::uint32_t> active_;
  std::deque<std::uint32_t> orphans_;
  long time_ = 0;
};

}  // namespace

double cut_capacity(const FlowNetwork& net, const std::vector<std::uint8_t>& source_side) {
  double cut = 0.0;
  for (std::size_t v = 0; v < net.num_nodes(); ++v) {
    if (!source_side[v]) continue;
    for (std::uint32_t a : net.out_arcs(v)) {
      if (!source_side[net.arcs()[a].head]) cut += net.arcs()[a].capacity;
    }
  }
  return cut;
}

MaxFlowResult max_flow(const FlowNetwork& net) { return TwoTreeSolver(net).solve(); }

}  // namespace ctxforest
