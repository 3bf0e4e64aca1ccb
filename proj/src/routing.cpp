#include "emvsim/routing.hpp"

#include <queue>

namespace emv::routing {

LinkTimeField::LinkTimeField(std::vector<double> times) : times_(std::move(times)) {
    for (double t : times_)
        if (!(t > 0)) throw RoutingError("link times must be positive");
}

void LinkTimeField::set(int link_id, double t) {
    if (!(t > 0)) throw RoutingError("link times must be positive");
    times_.at(static_cast<size_t>(link_id)) = t;
}

LinkTimeField free_flow_times(const net::TrafficNetwork& net) {
    std::vector<double> t;
    t.reserve(net.links.size());
    for (const net::Link& l : net.links) t.push_back(l.length_m / l.v_emv_mps);
    return LinkTimeField(std::move(t));
}

RoutingTable prepopulate(const net::TrafficNetwork& net, const LinkTimeField& t0, int dest) {
    if (dest < 0 || dest >= static_cast<int>(net.nodes.size()))
        throw RoutingError("destination node does not exist");
    const size_t n = net.nodes.size();
    RoutingTable table;
    table.destination = dest;
    table.eta.assign(n, kInf);
    table.next.assign(n, -1);
    table.hops.assign(n, 0);

    // Dijkstra on the reversed graph from the destination.
    using QE = std::pair<double, int>;
    std::priority_queue<QE, std::vector<QE>, std::greater<>> pq;
    table.eta[static_cast<size_t>(dest)] = 0.0;
    pq.push({0.0, dest});
    std::vector<char> done(n, 0);
    while (!pq.empty()) {
        auto [d, u] = pq.top();
        pq.pop();
        if (done[static_cast<size_t>(u)]) continue;
        done[static_cast<size_t>(u)] = 1;
        for (int lid : net.in_link_ids(u)) {
            int v = net.link(lid).from_node;
            double nd = d + t0.at(lid);
            if (nd < table.eta[static_cast<size_t>(v)]) {
                table.eta[static_cast<size_t>(v)] = nd;
                table.hops[static_cast<size_t>(v)] = table.hops[static_cast<size_t>(u)] + 1;
                pq.push({nd, v});
            }
        }
    }
    // First hop: argmin over outgoing links, lowest successor id on ties.
    for (size_t i = 0; i < n; ++i) {
        if (static_cast<int>(i) == dest || table.eta[i] == kInf) continue;
        double best = kInf;
        int best_j = -1;
        for (int lid : net.out_link_ids(static_cast<int>(i))) {
            int j = net.link(lid).to_node;
            double c = t0.at(lid) + table.eta[static_cast<size_t>(j)];
            if (c < best - 1e-15 || (std::abs(c - best) <= 1e-15 && j < best_j)) {
                best = c;
                best_j = j;
            }
        }
        table.next[i] = best_j;
    }
    return table;
}

RoutingTable update_step(const net::TrafficNetwork& net, const RoutingTable& table,
                         const LinkTimeField& t) {
    const int n = static_cast<int>(net.nodes.size());
    RoutingTable out = table;
    if (out.hops.size() != static_cast<size_t>(n)) out.hops.assign(static_cast<size_t>(n), 0);
    for (size_t i = 0; i < net.nodes.size(); ++i) {
        if (static_cast<int>(i) == table.destination) {
            out.eta[i] = 0.0;
            out.next[i] = -1;
            out.hops[i] = 0;
            continue;
        }
        double best = kInf;
        int best_j = -1;
        for (int lid : net.out_link_ids(static_cast<int>(i))) {
            int j = net.link(lid).to_node;
            int hj = table.hops.empty() ? 0 : table.hops[static_cast<size_t>(j)];
            if (hj + 1 > n - 1) continue; // stale support chain, see header
            double c = t.at(lid) + table.eta[static_cast<size_t>(j)];
            if (c < best - 1e-15 || (std::abs(c - best) <= 1e-15 && j >= 0 && j < best_j)) {
                best = c;
                best_j = j;
            }
        }
        out.eta[i] = best;
        out.next[i] = best == kInf ? -1 : best_j;
        out.hops[i] = best == kInf
                          ? 0
                          : (table.hops.empty() ? 1
                                                : table.hops[static_cast<size_t>(best_j)] + 1);
    }
    return out;
}

int emv_next_hop(const RoutingTable& table, int current) {
    if (current == table.destination) return -1;
    if (table.eta.at(static_cast<size_t>(current)) == kInf)
        throw RoutingError("node " + std::to_string(current) +
                           " cannot reach the destination");
    return table.next.at(static_cast<size_t>(current));
}

void FrozenView::observe(const RoutingTable& table, double progress_fraction) {
    if (!has_value_ || (!crossed_half_ && progress_fraction >= 0.5)) {
        eta_ = table.eta;
        next_ = table.next;
        has_value_ = true;
        if (progress_fraction >= 0.5) crossed_half_ = true;
    }
}

} // namespace emv::routing
