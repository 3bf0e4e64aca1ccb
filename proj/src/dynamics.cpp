#include "emvsim/dynamics.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <queue>

namespace emv::dyn {

using net::Link;
using net::TrafficNetwork;

double congested_speed(double n_vehicles, const Link& link) {
    double k = static_cast<double>(link.capacity);
    double factor = std::max(0.1, 1.0 - n_vehicles / k);
    return link.v_free_mps * factor;
}

double emv_speed(double n_vehicles, const Link& link) {
    double k = static_cast<double>(link.capacity);
    double threshold = k + link.emergency_capacity - k / static_cast<double>(link.lane_count);
    if (n_vehicles <= threshold) return link.v_emv_mps;
    return congested_speed(n_vehicles, link);
}

std::vector<int> static_vehicle_route(const TrafficNetwork& net, int origin, int dest) {
    if (origin == dest) return {};
    size_t n = net.nodes.size();
    std::vector<double> dist(n, routing::kInf);
    std::vector<int> via_link(n, -1); // link used to reach this node
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[static_cast<size_t>(origin)] = 0.0;
    pq.push({0.0, origin});
    while (!pq.empty()) {
        auto [d, u] = pq.top();
        pq.pop();
        if (d > dist[static_cast<size_t>(u)]) continue;
        if (u == dest) break;
        for (int lid : net.out_link_ids(u)) {
            const Link& l = net.link(lid);
            double nd = d + l.length_m / l.v_free_mps;
            size_t v = static_cast<size_t>(l.to_node);
            if (nd < dist[v] - 1e-15) {
                dist[v] = nd;
                via_link[v] = lid;
                pq.push({nd, l.to_node});
            }
        }
    }
    if (via_link[static_cast<size_t>(dest)] < 0) return {};
    std::vector<int> route;
    for (int at = dest; at != origin;) {
        int lid = via_link[static_cast<size_t>(at)];
        route.push_back(lid);
        at = net.link(lid).from_node;
    }
    std::reverse(route.begin(), route.end());
    return route;
}

SimState::SimState(const TrafficNetwork& net, const std::vector<FlowConfig>& flows,
                   std::optional<EmvSpec> emv, double horizon_s, std::uint64_t seed,
                   const SimOptions& opts)
    : net_(net), opts_(opts), horizon_s_(horizon_s), emv_spec_(emv) {
    queues_.resize(net.lanes.size());
    occupancy_.assign(net.lanes.size(), 0.0);
    cooldown_.assign(net.lanes.size(), 0.0);
    if (emv_spec_) {
        if (emv_spec_->dispatch_s >= horizon_s_)
            throw ControlError("EMV dispatch time is not before the horizon");
        if (emv_spec_->origin < 0 || emv_spec_->origin >= static_cast<int>(net.nodes.size()) ||
            emv_spec_->destination < 0 ||
            emv_spec_->destination >= static_cast<int>(net.nodes.size()))
            throw ControlError("EMV origin/destination outside the network");
    }

    // Precompute the full injection schedule: arithmetic spacing with seeded
    // jitter, seeded destination draws, static free-flow routes. Everything
    // downstream of this is RNG-free, which makes episodes bit-reproducible.
    std::map<std::pair<int, int>, std::vector<int>> route_cache;
    auto route_for = [&](int o, int d) -> const std::vector<int>& {
        auto key = std::make_pair(o, d);
        auto it = route_cache.find(key);
        if (it == route_cache.end())
            it = route_cache.emplace(key, static_vehicle_route(net_, o, d)).first;
        return it->second;
    };
    for (size_t fi = 0; fi < flows.size(); ++fi) {
        const FlowConfig& f = flows[fi];
        if (f.rate_veh_per_lane_hr < 0.0) throw ControlError("negative flow rate");
        if (f.start_s < 0.0 || f.end_s > horizon_s_ || f.end_s < f.start_s)
            throw ControlError("flow window outside the horizon");
        if (f.rate_veh_per_lane_hr == 0.0 || f.origins.empty() || f.destinations.empty())
            continue;
        for (int origin : f.origins) {
            int lanes = 0;
            for (int lid : net_.out_link_ids(origin))
                lanes = std::max(lanes, net_.link(lid).lane_count);
            if (lanes == 0) continue; // dead-end origin
            double spacing = 3600.0 / (f.rate_veh_per_lane_hr * lanes);
            Rng rng(derive_seed(derive_seed(seed, 0x466c6f77ULL + fi),
                                static_cast<std::uint64_t>(origin)));
            for (int k = 0;; ++k) {
                double base = f.start_s + k * spacing;
                if (base >= f.end_s) break;
                double jitter = rng.uniform(-opts_.injection_jitter, opts_.injection_jitter);
                double t = std::clamp(base + jitter * spacing, f.start_s, f.end_s);
                int dest = f.destinations[rng.next_below(f.destinations.size())];
                if (dest == origin) continue;
                const std::vector<int>& route = route_for(origin, dest);
                if (route.empty()) continue;
                schedule_.push_back({t, origin, route});
            }
        }
    }
    std::stable_sort(schedule_.begin(), schedule_.end(),
                     [](const Injection& a, const Injection& b) { return a.time_s < b.time_s; });
}

double SimState::link_occupancy(int link_id) const {
    const Link& l = net_.link(link_id);
    double n = 0.0;
    for (int i = 0; i < l.lane_count; ++i)
        n += occupancy_[static_cast<size_t>(l.first_lane + i)];
    return n;
}

pressure::PressureSnapshot SimState::snapshot() const {
    pressure::PressureSnapshot s;
    s.count = occupancy_;
    return s;
}

double SimState::emv_distance_to_stop_m() const {
    if (!emv_.active || emv_.link < 0) return -1.0;
    return net_.link(emv_.link).length_m - emv_.pos_m;
}

double SimState::emv_progress_fraction() const {
    if (!emv_.active || emv_.link < 0) return 0.0;
    return emv_.pos_m / net_.link(emv_.link).length_m;
}

routing::LinkTimeField SimState::emv_link_times() const {
    std::vector<double> t;
    t.reserve(net_.links.size());
    for (const Link& l : net_.links) t.push_back(l.length_m / emv_speed(link_occupancy(l.id), l));
    return routing::LinkTimeField(std::move(t));
}

int SimState::pick_entry_lane(int link_id) const {
    // Least-occupied lane with space; ties toward the lowest lane index.
    const Link& l = net_.link(link_id);
    int best = -1;
    double best_occ = 0.0;
    for (int i = 0; i < l.lane_count; ++i) {
        int lane = l.first_lane + i;
        double occ = occupancy_[static_cast<size_t>(lane)];
        if (occ >= net_.lane(lane).x_max) continue;
        if (best < 0 || occ < best_occ) {
            best = lane;
            best_occ = occ;
        }
    }
    return best;
}

void SimState::enter_link(Vehicle& v, int link_id) {
    const Link& l = net_.link(link_id);
    // Restrict the lane choice to lanes that can serve the vehicle's next
    // turn, so a point queue can never trap a vehicle behind a wrong-lane
    // stop line. The last link of the route is unconstrained.
    int next_link = (v.route_pos + 1 < v.route.size())
                        ? v.route[v.route_pos + 1]
                        : -1;
    int best = -1;
    double best_occ = 0.0;
    for (int i = 0; i < l.lane_count; ++i) {
        int lane = l.first_lane + i;
        double occ = occupancy_[static_cast<size_t>(lane)];
        if (occ >= net_.lane(lane).x_max) continue;
        if (next_link >= 0) {
            auto outs = net_.out_links_of_in_lane(l.to_node, lane);
            if (std::find(outs.begin(), outs.end(), next_link) == outs.end()) continue;
        }
        if (best < 0 || occ < best_occ) {
            best = lane;
            best_occ = occ;
        }
    }
    if (best < 0) throw ControlError("enter_link called with no admissible lane");
    v.lane = best;
    v.queued = false;
    double n_before = link_occupancy(link_id);
    occupancy_[static_cast<size_t>(best)] += 1.0;
    double speed = congested_speed(n_before, l);
    v.transit_remaining_s = l.length_m / speed;
}

void SimState::complete_trip(Vehicle& v) {
    occupancy_[static_cast<size_t>(v.lane)] -= 1.0;
    v.lane = -1;
    v.in_network = false;
    v.completed = true;
    v.exit_time_s = clock_s_;
    in_network_ -= 1;
    completed_ += 1;
    completed_duration_sum_ += v.exit_time_s - v.entry_time_s;
}

void SimState::advance_transits(double dt) {
    for (Vehicle& v : vehicles_) {
        if (!v.in_network || v.queued || v.cls == VehicleClass::Emv) continue;
        v.transit_remaining_s -= dt;
        if (v.transit_remaining_s > 1e-12) continue;
        v.transit_remaining_s = 0.0;
        if (v.route_pos + 1 == v.route.size()) {
            complete_trip(v);
        } else {
            v.queued = true;
            queues_[static_cast<size_t>(v.lane)].push_back(v.id);
        }
    }
}

void SimState::discharge_queues(const std::vector<int>& phases, double dt) {
    for (size_t lane = 0; lane < queues_.size(); ++lane) {
        cooldown_[lane] = std::max(0.0, cooldown_[lane] - dt);
        std::deque<int>& q = queues_[lane];
        while (!q.empty() && cooldown_[lane] <= 1e-12) {
            Vehicle& v = vehicles_[static_cast<size_t>(q.front())];
            int node = net_.link(net_.lane(static_cast<int>(lane)).link_id).to_node;
            int next_link = v.route[v.route_pos + 1];
            // Movement must be permitted by the node's active phase.
            bool green = false;
            for (const net::Movement& m :
                 net_.movements_of_phase(node, phases[static_cast<size_t>(node)])) {
                if (m.in_lane == static_cast<int>(lane) &&
                    net_.lane(m.out_lane).link_id == next_link) {
                    green = true;
                    break;
                }
            }
            if (!green) break;
            // Target lane must have space and serve the turn after next.
            const Link& nl = net_.link(next_link);
            bool space = false;
            int probe = (v.route_pos + 2 < v.route.size()) ? v.route[v.route_pos + 2] : -1;
            for (int i = 0; i < nl.lane_count && !space; ++i) {
                int tl = nl.first_lane + i;
                if (occupancy_[static_cast<size_t>(tl)] >= net_.lane(tl).x_max) continue;
                if (probe >= 0) {
                    auto outs = net_.out_links_of_in_lane(nl.to_node, tl);
                    if (std::find(outs.begin(), outs.end(), probe) == outs.end()) continue;
                }
                space = true;
            }
            if (!space) break;
            q.pop_front();
            occupancy_[lane] -= 1.0;
            v.route_pos += 1;
            enter_link(v, next_link);
            cooldown_[lane] += opts_.saturation_headway_s;
        }
    }
}

void SimState::advance_emv(const std::vector<int>& phases, double dt) {
    if (!emv_spec_ || emv_.arrived || emv_.failed) return;
    const EmvSpec& spec = *emv_spec_;
    if (!emv_.active) {
        // activate only in a tick that starts at or after the dispatch time,
        // so the budget below never covers pre-dispatch motion
        if (clock_s_ - dt < spec.dispatch_s) return;
        emv_.active = true;
        Vehicle v;
        v.id = static_cast<int>(vehicles_.size());
        v.cls = VehicleClass::Emv;
        v.entry_time_s = clock_s_;
        v.in_network = true;
        emv_.vehicle_id = v.id;
        vehicles_.push_back(v);
        injected_ += 1;
        in_network_ += 1;
        if (spec.origin == spec.destination) {
            emv_.arrived = true;
            emv_.arrival_time_s = clock_s_;
            vehicles_[static_cast<size_t>(emv_.vehicle_id)].in_network = false;
            vehicles_[static_cast<size_t>(emv_.vehicle_id)].completed = true;
            vehicles_[static_cast<size_t>(emv_.vehicle_id)].exit_time_s = clock_s_;
            in_network_ -= 1;
            completed_ += 1;
            // zero-length trip contributes zero duration
            return;
        }
        int nn = emv_next_node ? emv_next_node(spec.origin) : -1;
        if (nn < 0) {
            emv_.failed = true;
            return;
        }
        int lid = -1;
        for (int cand : net_.out_link_ids(spec.origin))
            if (net_.link(cand).to_node == nn && (lid < 0 || cand < lid)) lid = cand;
        if (lid < 0) {
            emv_.failed = true;
            return;
        }
        emv_.link = lid;
        emv_.pos_m = 0.0;
        emv_.condition_held = true;
    }

    // Continuous motion with the leftover distance carried across stop-line
    // crossings, so free-flow per-link times come out exact.
    double budget = dt;
    while (budget > 1e-12) {
        const Link& l = net_.link(emv_.link);
        double n = link_occupancy(emv_.link);
        double k = static_cast<double>(l.capacity);
        double threshold = k + l.emergency_capacity - k / static_cast<double>(l.lane_count);
        if (n > threshold) emv_.condition_held = false;

        double speed = emv_speed(n, l);
        double remaining = l.length_m - emv_.pos_m;
        if (speed * budget < remaining - 1e-9) {
            emv_.pos_m += speed * budget;
            return;
        }
        budget -= remaining / speed;
        emv_.pos_m = l.length_m;

        int node = l.to_node;
        if (node == spec.destination) {
            emv_.arrived = true;
            emv_.arrival_time_s = clock_s_ - std::max(0.0, budget);
            if (emv_.condition_held) em_lanes_formed_ += 1;
            Vehicle& v = vehicles_[static_cast<size_t>(emv_.vehicle_id)];
            v.in_network = false;
            v.completed = true;
            v.exit_time_s = emv_.arrival_time_s;
            in_network_ -= 1;
            completed_ += 1;
            completed_duration_sum_ += v.exit_time_s - v.entry_time_s;
            return;
        }
        int nn = emv_next_node ? emv_next_node(node) : -1;
        if (nn < 0) {
            emv_.failed = true;
            return;
        }
        int next_link = -1;
        for (int cand : net_.out_link_ids(node))
            if (net_.link(cand).to_node == nn && (next_link < 0 || cand < next_link))
                next_link = cand;
        if (next_link < 0) {
            emv_.failed = true;
            return;
        }
        emv_.next_link = next_link;
        bool green = false;
        for (const net::Movement& m :
             net_.movements_of_phase(node, phases[static_cast<size_t>(node)])) {
            if (net_.lane(m.in_lane).link_id == emv_.link &&
                net_.lane(m.out_lane).link_id == next_link) {
                green = true;
                break;
            }
        }
        if (!green) return; // wait at the stop line for pre-emption
        if (emv_.condition_held) em_lanes_formed_ += 1;
        emv_.link = next_link;
        emv_.pos_m = 0.0;
        emv_.next_link = -1;
        emv_.condition_held = true;
    }
}

void SimState::inject(double /*dt*/) {
    // Retry earlier blocked entries first (FIFO), then admit newly due ones.
    size_t retries = blocked_entries_.size();
    for (size_t i = 0; i < retries; ++i) {
        size_t idx = blocked_entries_.front();
        blocked_entries_.pop_front();
        const Injection& inj = schedule_[idx];
        Vehicle v;
        v.id = static_cast<int>(vehicles_.size());
        v.route = inj.route;
        int lane = pick_entry_lane(inj.route.front());
        bool ok = false;
        if (lane >= 0) {
            v.entry_time_s = clock_s_;
            v.in_network = true;
            vehicles_.push_back(v);
            try {
                enter_link(vehicles_.back(), inj.route.front());
                ok = true;
            } catch (const ControlError&) {
                vehicles_.pop_back();
            }
        }
        if (ok) {
            injected_ += 1;
            in_network_ += 1;
        } else {
            blocked_entries_.push_back(idx);
        }
    }
    while (next_injection_ < schedule_.size() &&
           schedule_[next_injection_].time_s <= clock_s_ + 1e-9) {
        const Injection& inj = schedule_[next_injection_];
        Vehicle v;
        v.id = static_cast<int>(vehicles_.size());
        v.route = inj.route;
        bool ok = false;
        if (pick_entry_lane(inj.route.front()) >= 0) {
            v.entry_time_s = clock_s_;
            v.in_network = true;
            vehicles_.push_back(v);
            try {
                enter_link(vehicles_.back(), inj.route.front());
                ok = true;
            } catch (const ControlError&) {
                vehicles_.pop_back();
            }
        }
        if (ok) {
            injected_ += 1;
            in_network_ += 1;
        } else {
            blocked_entries_.push_back(next_injection_);
        }
        ++next_injection_;
    }
}

void SimState::step(const std::vector<int>& active_phases, double dt) {
    if (dt <= 0.0) throw ControlError("nonpositive dt");
    if (active_phases.size() != net_.nodes.size())
        throw ControlError("active_phases size does not match node count");
    for (size_t i = 0; i < active_phases.size(); ++i) {
        int p = active_phases[i];
        if (p < 0 || p >= static_cast<int>(net_.nodes[i].phases.size()))
            throw ControlError("invalid phase index for node " + std::to_string(i));
    }
    clock_s_ += dt;
    advance_transits(dt);
    discharge_queues(active_phases, dt);
    advance_emv(active_phases, dt);
    inject(dt);
}

EpisodeMetrics run_episode(const TrafficNetwork& net, const std::vector<FlowConfig>& flows,
                           std::optional<EmvSpec> emv, IController& controller,
                           IRouter* router, double horizon_s, std::uint64_t seed,
                           const EpisodeOptions& opts) {
    if (emv && !router) throw ControlError("an EMV episode needs a router");
    SimState state(net, flows, emv, horizon_s, seed, opts.sim);
    controller.reset(net, derive_seed(seed, 0x436f6e74ULL));
    if (emv) {
        router->on_episode_start(net, *emv, state);
        state.emv_next_node = [router](int at) { return router->next_node(at); };
    }
    std::ofstream log;
    if (!opts.step_log_path.empty()) {
        log.open(opts.step_log_path);
        if (!log) throw ControlError("cannot open step log " + opts.step_log_path);
        log << "t_s,node,phase,lane_id,occupancy,emv_link,emv_dist_m\n";
    }
    int ticks_per_control = static_cast<int>(std::llround(opts.control_step_s / opts.tick_s));
    if (ticks_per_control < 1 ||
        std::abs(ticks_per_control * opts.tick_s - opts.control_step_s) > 1e-9)
        throw ControlError("tick must divide the control step");
    for (double t = 0.0; t + 1e-9 < horizon_s; t += opts.control_step_s) {
        if (emv && router) router->on_control_step(net, state, t);
        std::vector<int> phases = controller.decide(net, state, t);
        if (log.is_open()) {
            const EmvStatus& e = state.emv();
            for (const net::Lane& lane : net.lanes) {
                int node = net.link(lane.link_id).to_node;
                log << t << ',' << node << ',' << phases[static_cast<size_t>(node)] << ','
                    << lane.id << ',' << state.lane_occupancy(lane.id) << ','
                    << (e.active && !e.arrived ? e.link : -1) << ','
                    << (e.active && !e.arrived ? state.emv_distance_to_stop_m() : -1.0)
                    << '\n';
            }
        }
        for (int k = 0; k < ticks_per_control; ++k) state.step(phases, opts.tick_s);
    }
    EpisodeMetrics m;
    if (emv) {
        m.emv_failed = state.emv().failed;
        if (state.emv().arrived)
            m.t_emv_s = state.emv().arrival_time_s - emv->dispatch_s;
    }
    m.n_completed = state.completed_trips();
    m.t_avg_s = m.n_completed > 0 ? state.completed_duration_sum() / m.n_completed : 0.0;
    m.em_lanes_formed = state.emergency_lanes_formed();
    return m;
}

} // namespace emv::dyn
