#include "emvsim/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "emvsim/rng.hpp"

namespace emv::baselines {

using net::Link;
using net::TrafficNetwork;

// ---- fixed time -------------------------------------------------------------

double fixed_time_offset(const FixedTimeSpec& spec, int node) {
    if (!spec.randomize_offsets) return 0.0;
    int slots = static_cast<int>(std::llround(spec.cycle_s / spec.control_step_s));
    Rng rng(derive_seed(spec.offset_seed, 0x6f666673ULL + static_cast<std::uint64_t>(node)));
    return static_cast<double>(rng.next_below(static_cast<std::uint64_t>(slots))) *
           spec.control_step_s;
}

int fixed_time_phase(const FixedTimeSpec& spec, int node, double t) {
    if (t < 0.0) throw BaselineError("negative time");
    if (spec.cycle_s <= 0.0 ||
        std::abs(std::remainder(spec.cycle_s, spec.control_step_s)) > 1e-9)
        throw BaselineError("cycle must be a positive multiple of the control step");
    std::vector<double> w = spec.split;
    if (w.empty()) w.assign(8, 1.0);
    if (w.size() != 8) throw BaselineError("split must cover the 8 phases");
    double total = 0.0;
    for (double v : w) {
        if (v < 0.0) throw BaselineError("negative split weight");
        total += v;
    }
    double u = std::fmod(t + fixed_time_offset(spec, node), spec.cycle_s);
    double acc = 0.0;
    for (int p = 0; p < 8; ++p) {
        acc += spec.cycle_s * w[static_cast<size_t>(p)] / total;
        if (u < acc - 1e-9) return p;
    }
    return 7;
}

std::vector<int> FixedTimeController::decide(const TrafficNetwork& net, const dyn::SimState&,
                                             double t) {
    std::vector<int> phases(net.nodes.size());
    for (size_t i = 0; i < phases.size(); ++i)
        phases[i] = fixed_time_phase(spec_, static_cast<int>(i), t);
    return phases;
}

// ---- max pressure -----------------------------------------------------------

int max_pressure_phase(const TrafficNetwork& net, int node,
                       const pressure::PressureSnapshot& snap, int current, double min_phase_s,
                       double held_s) {
    if (held_s < min_phase_s) return current;
    int best = 0;
    double best_p = -std::numeric_limits<double>::infinity();
    for (int p = 0; p < static_cast<int>(net.node(node).phases.size()); ++p) {
        double v = pressure::phase_pressure(net, node, p, snap);
        if (v > best_p + 1e-12) {
            best_p = v;
            best = p;
        }
    }
    return best;
}

void MaxPressureController::reset(const TrafficNetwork& net, std::uint64_t) {
    current_.assign(net.nodes.size(), 0);
    held_.assign(net.nodes.size(), min_phase_s_); // free choice on the first step
}

std::vector<int> MaxPressureController::decide(const TrafficNetwork& net,
                                               const dyn::SimState& state, double) {
    if (current_.size() != net.nodes.size()) reset(net, 0);
    pressure::PressureSnapshot snap = state.snapshot();
    for (size_t i = 0; i < current_.size(); ++i) {
        int chosen = max_pressure_phase(net, static_cast<int>(i), snap, current_[i],
                                        min_phase_s_, held_[i]);
        if (chosen != current_[i]) {
            current_[i] = chosen;
            held_[i] = 0.0;
        }
        held_[i] += 5.0; // control-step granularity
    }
    return current_;
}

// ---- green wave -------------------------------------------------------------

int green_wave_override(const TrafficNetwork& net, int base_phase, int node, int emv_link,
                        int next_link, double distance_m, double trigger_distance_m) {
    if (distance_m > trigger_distance_m) return base_phase;
    const net::Intersection& n = net.node(node);
    for (int p = 0; p < static_cast<int>(n.phases.size()); ++p) {
        for (const net::Movement& m : net.movements_of_phase(node, p)) {
            if (net.lane(m.in_lane).link_id != emv_link) continue;
            if (next_link < 0 || net.lane(m.out_lane).link_id == next_link) return p;
        }
    }
    throw BaselineError("no phase serves the EMV movement at node " + std::to_string(node));
}

GreenWaveController::GreenWaveController(std::unique_ptr<dyn::IController> base,
                                         dyn::IRouter* router, double trigger_distance_m)
    : base_(std::move(base)), router_(router), trigger_m_(trigger_distance_m) {
    if (!base_) throw BaselineError("green wave needs a base controller");
}

void GreenWaveController::reset(const TrafficNetwork& net, std::uint64_t seed) {
    base_->reset(net, seed);
}

std::vector<int> GreenWaveController::decide(const TrafficNetwork& net,
                                             const dyn::SimState& state, double t) {
    std::vector<int> phases = base_->decide(net, state, t);
    const dyn::EmvStatus& e = state.emv();
    if (!e.active || e.arrived || e.failed || e.link < 0) return phases;
    int node = net.link(e.link).to_node;
    int next_link = e.next_link;
    if (next_link < 0 && router_) {
        int nn = router_->next_node(node);
        if (nn >= 0)
            for (int cand : net.out_link_ids(node))
                if (net.link(cand).to_node == nn && (next_link < 0 || cand < next_link))
                    next_link = cand;
    }
    phases[static_cast<size_t>(node)] =
        green_wave_override(net, phases[static_cast<size_t>(node)], node, e.link, next_link,
                            state.emv_distance_to_stop_m(), trigger_m_);
    return phases;
}

// ---- A* ----------------------------------------------------------------------

std::vector<int> static_astar_route(const TrafficNetwork& net,
                                    const routing::LinkTimeField& t, int origin, int dest) {
    double vmax = 0.0;
    for (const Link& l : net.links) vmax = std::max(vmax, l.v_emv_mps);
    if (vmax <= 0.0) throw BaselineError("network has no positive EMV speed");
    auto heuristic = [&](int node) {
        const net::Intersection& a = net.node(node);
        const net::Intersection& b = net.node(dest);
        return (std::abs(a.x_m - b.x_m) + std::abs(a.y_m - b.y_m)) / vmax;
    };
    size_t n = net.nodes.size();
    std::vector<double> g(n, routing::kInf);
    std::vector<int> via(n, -1);
    std::vector<char> closed(n, 0);
    using Item = std::pair<double, int>; // (f, node)
    std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
    g[static_cast<size_t>(origin)] = 0.0;
    open.push({heuristic(origin), origin});
    while (!open.empty()) {
        auto [f, u] = open.top();
        open.pop();
        if (closed[static_cast<size_t>(u)]) continue;
        closed[static_cast<size_t>(u)] = 1;
        if (u == dest) break;
        for (int lid : net.out_link_ids(u)) {
            const Link& l = net.link(lid);
            double cand = g[static_cast<size_t>(u)] + t.at(lid);
            size_t v = static_cast<size_t>(l.to_node);
            if (cand < g[v] - 1e-15) {
                g[v] = cand;
                via[v] = lid;
                open.push({cand + heuristic(l.to_node), l.to_node});
            }
        }
    }
    if (origin != dest && via[static_cast<size_t>(dest)] < 0)
        throw BaselineError("destination unreachable from origin");
    std::vector<int> route;
    for (int at = dest; at != origin;) {
        int lid = via[static_cast<size_t>(at)];
        route.push_back(lid);
        at = net.link(lid).from_node;
    }
    std::reverse(route.begin(), route.end());
    return route;
}

void StaticAStarRouter::adopt_route(const TrafficNetwork& net, const std::vector<int>& links) {
    next_.assign(net.nodes.size(), -1);
    for (int lid : links)
        next_[static_cast<size_t>(net.link(lid).from_node)] = net.link(lid).to_node;
}

void StaticAStarRouter::on_episode_start(const TrafficNetwork& net, const dyn::EmvSpec& spec,
                                         const dyn::SimState&) {
    destination_ = spec.destination;
    try {
        adopt_route(net, static_astar_route(net, routing::free_flow_times(net), spec.origin,
                                            spec.destination));
    } catch (const BaselineError&) {
        next_.assign(net.nodes.size(), -1);
    }
}

int StaticAStarRouter::next_node(int at) {
    if (at == destination_) return -1;
    return next_.empty() ? -1 : next_[static_cast<size_t>(at)];
}

void DynamicAStarRouter::refresh(const TrafficNetwork& net, const routing::LinkTimeField& t,
                                 int from_node) {
    ++refreshes_;
    if (from_node == destination_) return;
    try {
        std::vector<int> links = static_astar_route(net, t, from_node, destination_);
        // keep the already-travelled prefix intact; replace from here on
        for (int lid : links)
            next_[static_cast<size_t>(net.link(lid).from_node)] = net.link(lid).to_node;
    } catch (const BaselineError&) {
        // keep the previous plan when the replan fails
    }
}

void DynamicAStarRouter::on_control_step(const TrafficNetwork& net, const dyn::SimState& state,
                                         double t) {
    if (t > 0.0 && t < last_refresh_ + period_s_) return;
    last_refresh_ = t;
    const dyn::EmvStatus& e = state.emv();
    int from = destination_;
    if (e.active && !e.arrived && e.link >= 0) {
        from = net.link(e.link).to_node;
    } else if (!e.active && state.emv_spec()) {
        from = state.emv_spec()->origin;
    }
    refresh(net, state.emv_link_times(), from);
}

} // namespace emv::baselines
