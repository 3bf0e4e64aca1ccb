#pragma once

#include <limits>
#include <stdexcept>
#include <vector>

#include "emvsim/network.hpp"

namespace emv::routing {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct RoutingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Per-directed-link EMV travel time, seconds. Rejects nonpositive entries.
class LinkTimeField {
public:
    LinkTimeField() = default;
    explicit LinkTimeField(std::vector<double> times);

    double at(int link_id) const { return times_.at(static_cast<size_t>(link_id)); }
    void set(int link_id, double t);
    size_t size() const { return times_.size(); }

private:
    std::vector<double> times_;
};

// Free-flow EMV link times: length / s_f.
LinkTimeField free_flow_times(const net::TrafficNetwork& net);

struct RoutingTable {
    int destination = -1;
    std::vector<double> eta;  // per node, kInf if unreachable
    std::vector<int> next;    // successor node id, -1 at dest / unreachable
    std::vector<int> hops;    // support-chain length of the eta estimate
};

// Single-destination Dijkstra over forward link costs; Next is the first hop
// of a shortest path, ties broken toward the lowest node id.
RoutingTable prepopulate(const net::TrafficNetwork& net, const LinkTimeField& t0, int dest);

// One synchronized Jacobi sweep of the decentralized update:
// eta_i <- min over outgoing (i -> j) of (T_ij + eta_j).
// A neighbor estimate whose support chain already spans |V|-1 hops is treated
// as unusable; this breaks the count-to-infinity pattern after a cost
// increase, so |V| sweeps always reconverge to the shortest-path solution.
RoutingTable update_step(const net::TrafficNetwork& net, const RoutingTable& table,
                         const LinkTimeField& t);

// Next hop for the EMV standing at `current`; throws if unreachable, returns
// -1 at the destination.
int emv_next_hop(const RoutingTable& table, int current);

// (ETA, Next) pair exposed to RL agents, refreshed only when the EMV first
// crosses the half-length point of its current link.
class FrozenView {
public:
    void reset() { has_value_ = false; crossed_half_ = false; }
    void on_new_link() { crossed_half_ = false; }
    void observe(const RoutingTable& table, double progress_fraction);
    bool valid() const { return has_value_; }
    double eta(int node) const { return eta_.at(static_cast<size_t>(node)); }
    int next(int node) const { return next_.at(static_cast<size_t>(node)); }

private:
    bool has_value_ = false;
    bool crossed_half_ = false;
    std::vector<double> eta_;
    std::vector<int> next_;
};

} // namespace emv::routing
