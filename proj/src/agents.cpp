#include "emvsim/agents.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace emv::agents {

using json = nlohmann::ordered_json;
using net::Link;
using net::TrafficNetwork;
using nn::Vec;

std::vector<AgentType> classify_agents(const TrafficNetwork& net, const dyn::SimState& state,
                                       const routing::RoutingTable& table) {
    std::vector<AgentType> types(net.nodes.size(), AgentType::Normal);
    const dyn::EmvStatus& e = state.emv();
    if (!e.active || e.arrived || e.failed || e.link < 0) return types;
    int primary = net.link(e.link).to_node;
    types[static_cast<size_t>(primary)] = AgentType::Primary;
    int secondary = table.next.empty() ? -1 : table.next[static_cast<size_t>(primary)];
    if (secondary >= 0) types[static_cast<size_t>(secondary)] = AgentType::Secondary;
    return types;
}

double reward(const TrafficNetwork& net, AgentType type, int node,
              const pressure::PressureSnapshot& snap, std::optional<int> emv_out_link,
              double beta, bool sum_pressure) {
    if (beta < 0.0 || beta > 1.0) throw AgentError("beta must lie in [0, 1]");
    auto pressure_term = [&](int i) {
        double p = pressure::intersection_pressure_emvlight(net, i, snap);
        if (sum_pressure) p *= static_cast<double>(net.incoming_lane_ids(i).size());
        return p;
    };
    switch (type) {
    case AgentType::Primary:
        return -1.0;
    case AgentType::Normal:
        return -pressure_term(node);
    case AgentType::Secondary: {
        if (!emv_out_link)
            throw AgentError("secondary reward needs the primary-to-secondary link");
        const Link& l = net.link(*emv_out_link);
        double mean_density = 0.0;
        for (int i = 0; i < l.lane_count; ++i)
            mean_density += snap.density(net, l.first_lane + i);
        mean_density /= static_cast<double>(l.lane_count);
        return -beta * pressure_term(node) - (1.0 - beta) * mean_density;
    }
    }
    throw AgentError("unknown agent type");
}

std::vector<std::vector<int>> hop_distances(const TrafficNetwork& net) {
    size_t n = net.nodes.size();
    std::vector<std::vector<int>> dist(n, std::vector<int>(n, -1));
    for (size_t src = 0; src < n; ++src) {
        std::deque<int> q{static_cast<int>(src)};
        dist[src][src] = 0;
        while (!q.empty()) {
            int u = q.front();
            q.pop_front();
            for (int v : net.node(u).neighbors)
                if (dist[src][static_cast<size_t>(v)] < 0) {
                    dist[src][static_cast<size_t>(v)] = dist[src][static_cast<size_t>(u)] + 1;
                    q.push_back(v);
                }
        }
    }
    return dist;
}

std::vector<double> adjusted_rewards(const std::vector<double>& rewards,
                                     const std::vector<std::vector<int>>& dist, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw AgentError("alpha must lie in [0, 1]");
    size_t n = rewards.size();
    std::vector<double> out(n, 0.0);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) {
            int d = dist[i][j];
            if (d < 0) continue;
            out[i] += (d == 0 ? 1.0 : std::pow(alpha, d)) * rewards[j];
        }
    return out;
}

double local_return(double r_tilde, double v_next, double gamma) {
    if (gamma < 0.0 || gamma >= 1.0) throw AgentError("gamma must lie in [0, 1)");
    return r_tilde + gamma * v_next;
}

double value_loss(const std::vector<double>& returns, const std::vector<double>& values) {
    if (returns.empty() || returns.size() != values.size())
        throw AgentError("value_loss needs a nonempty matched batch");
    double s = 0.0;
    for (size_t i = 0; i < returns.size(); ++i) {
        double d = returns[i] - values[i];
        s += d * d;
    }
    return s / (2.0 * static_cast<double>(returns.size()));
}

double policy_loss(const std::vector<Vec>& probs, const std::vector<int>& actions,
                   const std::vector<double>& advantages, double lambda) {
    if (probs.empty() || probs.size() != actions.size() || probs.size() != advantages.size())
        throw AgentError("policy_loss needs a nonempty matched batch");
    double s = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
        s += -std::log(probs[i](actions[i])) * advantages[i] - lambda * nn::entropy(probs[i]);
    }
    return s / static_cast<double>(probs.size());
}

// ---- observation assembly -------------------------------------------------

Vec node_feature_block(const ObsContext& ctx, int node) {
    const TrafficNetwork& g = ctx.net;
    const net::Intersection& n = g.node(node);
    Vec block = Vec::Zero(22);
    // 8 in-lane + 8 out-lane densities, arms N,E,S,W with lanes in index
    // order, zero padded for missing arms / lanes
    // two fixed slots per arm (4 arms x 2 lanes = 8); wider links truncate,
    // absent arms and single-lane links stay zero
    auto fill_lanes = [&](const std::array<int, 4>& by_arm, int base) {
        for (int a = 0; a < 4; ++a) {
            int lid = by_arm[static_cast<size_t>(a)];
            if (lid < 0) continue;
            const Link& l = g.link(lid);
            for (int i = 0; i < std::min(l.lane_count, 2); ++i)
                block(base + 2 * a + i) = ctx.state.lane_occupancy(l.first_lane + i) /
                                          static_cast<double>(g.lane(l.first_lane + i).x_max);
        }
    };
    fill_lanes(n.incoming_link, 0);
    fill_lanes(n.outgoing_link, 8);

    // d_EMV per incoming arm, -1 padded except the EMV's actual approach
    for (int a = 0; a < 4; ++a) block(16 + a) = -1.0;
    const dyn::EmvStatus& e = ctx.state.emv();
    if (e.active && !e.arrived && e.link >= 0 && g.link(e.link).to_node == node) {
        int arm = static_cast<int>(g.incoming_arm(node, e.link));
        block(16 + arm) = ctx.state.emv_distance_to_stop_m() / g.link(e.link).length_m;
    }

    double eta = -1.0, next_code = -1.0;
    if (ctx.view && ctx.view->valid()) {
        double v = ctx.view->eta(node);
        if (std::isfinite(v)) eta = v / ctx.horizon_s;
        int succ = ctx.view->next(node);
        if (succ >= 0) {
            for (int a = 0; a < 4; ++a) {
                int lid = n.outgoing_link[static_cast<size_t>(a)];
                if (lid >= 0 && g.link(lid).to_node == succ) next_code = a / 3.0;
            }
        }
    }
    block(20) = eta;
    block(21) = next_code;
    return block;
}

Vec build_observation(const ObsContext& ctx, int node) {
    Vec obs = Vec::Zero(110);
    obs.segment(0, 22) = node_feature_block(ctx, node);
    const auto& neigh = ctx.net.node(node).neighbors;
    for (size_t k = 0; k < neigh.size() && k < 4; ++k)
        obs.segment(22 * static_cast<Eigen::Index>(k + 1), 22) =
            node_feature_block(ctx, neigh[k]);
    return obs;
}

Vec build_fingerprint(const TrafficNetwork& net, int node,
                      const std::vector<Vec>& prev_policies) {
    Vec fp = Vec::Zero(32);
    const auto& neigh = net.node(node).neighbors;
    for (size_t k = 0; k < neigh.size() && k < 4; ++k) {
        const Vec& p = prev_policies.at(static_cast<size_t>(neigh[k]));
        if (p.size() == 8) fp.segment(8 * static_cast<Eigen::Index>(k), 8) = p;
    }
    return fp;
}

// ---- decentralized routing --------------------------------------------------

void DecentralizedRouter::on_episode_start(const TrafficNetwork& net, const dyn::EmvSpec& spec,
                                           const dyn::SimState&) {
    table_ = routing::prepopulate(net, routing::free_flow_times(net), spec.destination);
    view_.reset();
    view_.observe(table_, 0.0);
    last_emv_link_ = -1;
}

void DecentralizedRouter::on_control_step(const TrafficNetwork& net, const dyn::SimState& state,
                                          double) {
    table_ = routing::update_step(net, table_, state.emv_link_times());
    const dyn::EmvStatus& e = state.emv();
    if (e.active && !e.arrived && e.link >= 0) {
        if (e.link != last_emv_link_) {
            view_.on_new_link();
            last_emv_link_ = e.link;
        }
        view_.observe(table_, state.emv_progress_fraction());
    }
}

int DecentralizedRouter::next_node(int at) {
    try {
        return routing::emv_next_hop(table_, at);
    } catch (const routing::RoutingError&) {
        return -1;
    }
}

// ---- configuration ----------------------------------------------------------

TrainConfig parse_train_config(const std::string& text) {
    json j = json::parse(text);
    TrainConfig c;
    c.horizon_s = j.value("T", c.horizon_s);
    c.control_step_s = j.value("control_step_s", c.control_step_s);
    c.n_bs = j.value("n_bs", c.n_bs);
    c.lr_theta = j.value("lr_theta", c.lr_theta);
    c.lr_phi = j.value("lr_phi", c.lr_phi);
    c.alpha_spatial = j.value("alpha_spatial", c.alpha_spatial);
    c.gamma = j.value("gamma", c.gamma);
    c.lambda = j.value("lambda", c.lambda);
    c.beta = j.value("beta", c.beta);
    c.episodes = j.value("episodes", c.episodes);
    c.seed = j.value("seed", c.seed);
    if (j.contains("arch")) c.lstm = j["arch"].get<std::string>() != "dense";
    c.shared_params = j.value("shared_params", c.shared_params);
    c.sum_pressure = j.value("sum_pressure", c.sum_pressure);
    c.checkpoint_path = j.value("checkpoint_path", c.checkpoint_path);
    c.curve_path = j.value("curve_path", c.curve_path);
    if (c.n_bs < 1 || c.episodes < 1) throw AgentError("n_bs and episodes must be positive");
    return c;
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw AgentError("cannot read training config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_train_config(ss.str());
}

// ---- policy bundle ----------------------------------------------------------

const nn::ActorCritic& PolicyBundle::net_for(int node) const {
    auto it = nets.find(shared ? -1 : node);
    if (it == nets.end()) throw AgentError("no policy for node " + std::to_string(node));
    return it->second;
}

void PolicyBundle::save(const std::string& path) const {
    json j;
    j["version"] = 1;
    j["shared"] = shared;
    json jn = json::object();
    for (const auto& [id, n] : nets) jn[std::to_string(id)] = json::parse(n.serialize());
    j["nets"] = jn;
    std::ofstream out(path);
    if (!out) throw AgentError("cannot write policy bundle " + path);
    out << j.dump() << "\n";
}

PolicyBundle PolicyBundle::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw AgentError("cannot read policy bundle " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    json j = json::parse(ss.str());
    if (j.value("version", 0) != 1) throw AgentError("unsupported policy bundle version");
    PolicyBundle b;
    b.shared = j["shared"].get<bool>();
    for (auto& [key, jt] : j["nets"].items())
        b.nets.emplace(std::stoi(key), nn::ActorCritic::deserialize(jt.dump()));
    return b;
}

// ---- training ---------------------------------------------------------------

namespace {

struct AgentBatch {
    std::vector<nn::ActorCritic::StepCache> steps;
    std::vector<int> actions;
    std::vector<double> rewards; // spatially adjusted
    nn::RecurrentState start_state;
};

} // namespace

TrainResult train(const TrafficNetwork& net, const std::vector<dyn::FlowConfig>& flows,
                  std::optional<dyn::EmvSpec> emv, const TrainConfig& cfg) {
    size_t n_nodes = net.nodes.size();
    size_t n_agents = cfg.shared_params ? 1 : n_nodes;
    nn::ActorCritic::Dims dims;
    std::vector<nn::ActorCritic> nets;
    nets.reserve(n_agents);
    for (size_t a = 0; a < n_agents; ++a)
        nets.emplace_back(dims, cfg.lstm, derive_seed(cfg.seed, 0x6e6574ULL + a));
    auto net_index = [&](size_t node) { return cfg.shared_params ? size_t{0} : node; };
    std::vector<nn::Adam> opts(n_agents);

    auto dist = hop_distances(net);
    int steps_per_ep = static_cast<int>(std::llround(cfg.horizon_s / cfg.control_step_s));
    long total_updates =
        std::max<long>(1, static_cast<long>(cfg.episodes) *
                              ((steps_per_ep + cfg.n_bs - 1) / cfg.n_bs));
    long update_count = 0;
    auto lr_now = [&]() {
        double progress = static_cast<double>(update_count) / static_cast<double>(total_updates);
        return cfg.lr_theta * std::max(0.01, 1.0 - progress);
    };

    TrainResult result;
    result.policies.shared = cfg.shared_params;

    for (int ep = 0; ep < cfg.episodes; ++ep) {
        dyn::SimState state(net, flows, emv, cfg.horizon_s,
                            derive_seed(cfg.seed, 0x657000ULL + static_cast<std::uint64_t>(ep)));
        DecentralizedRouter router;
        if (emv) {
            router.on_episode_start(net, *emv, state);
            state.emv_next_node = [&router](int at) { return router.next_node(at); };
        }
        Rng act_rng(derive_seed(cfg.seed, 0x616374ULL + static_cast<std::uint64_t>(ep)));

        std::vector<nn::RecurrentState> rstates;
        for (size_t i = 0; i < n_nodes; ++i)
            rstates.push_back(nets[net_index(i)].initial_state());
        std::vector<Vec> prev_policies(n_nodes, Vec::Constant(8, 0.125));
        std::vector<AgentBatch> batches(n_nodes);
        std::vector<nn::ActorCritic> frozen = nets; // critic snapshot at batch start
        for (size_t i = 0; i < n_nodes; ++i) batches[i].start_state = rstates[i];

        double reward_sum = 0.0;
        long reward_n = 0;

        auto flush = [&](bool terminal) {
            if (batches[0].steps.empty()) return;
            std::vector<nn::ParamSet> shared_grad;
            double lr = lr_now();
            for (size_t i = 0; i < n_nodes; ++i) {
                AgentBatch& b = batches[i];
                const nn::ActorCritic& fnet = frozen[net_index(i)];
                nn::ActorCritic& anet = nets[net_index(i)];
                size_t T = b.steps.size();
                // frozen critic values along the window
                nn::RecurrentState fs = b.start_state;
                std::vector<double> vfrozen(T + 1, 0.0);
                for (size_t t = 0; t < T; ++t)
                    vfrozen[t] = fnet.forward(b.steps[t].obs, b.steps[t].fp, fs).value;
                if (!terminal) {
                    // bootstrap with the observation after the window
                    ObsContext ctx{net, state, emv ? &router.frozen_view() : nullptr,
                                   cfg.horizon_s};
                    Vec obs = build_observation(ctx, static_cast<int>(i));
                    Vec fp = build_fingerprint(net, static_cast<int>(i), prev_policies);
                    vfrozen[T] = fnet.forward(obs, fp, fs).value;
                }
                std::vector<Vec> dlogits(T);
                std::vector<double> dvalue(T);
                std::vector<double> returns(T), values(T), advantages(T);
                std::vector<Vec> probs(T);
                double inv_b = 1.0 / static_cast<double>(T);
                for (size_t t = 0; t < T; ++t) {
                    double ret = local_return(b.rewards[t], vfrozen[t + 1], cfg.gamma);
                    double adv = ret - vfrozen[t];
                    returns[t] = ret;
                    values[t] = b.steps[t].value;
                    advantages[t] = adv;
                    probs[t] = b.steps[t].probs;
                    dlogits[t] =
                        nn::policy_logit_grad(b.steps[t].probs, b.actions[t], adv, cfg.lambda) *
                        inv_b;
                    dvalue[t] = (b.steps[t].value - ret) * inv_b *
                                (cfg.lr_theta > 0.0 ? cfg.lr_phi / cfg.lr_theta : 1.0);
                }
                double vl = value_loss(returns, values);
                double pl = policy_loss(probs, b.actions, advantages, cfg.lambda);
                if (!std::isfinite(vl) || !std::isfinite(pl))
                    throw AgentError("non-finite loss at episode " + std::to_string(ep) +
                                     ", update " + std::to_string(update_count));
                if (cfg.lr_theta > 0.0) {
                    nn::ParamSet g = anet.backward(b.steps, dlogits, dvalue);
                    if (cfg.shared_params) {
                        if (shared_grad.empty()) {
                            shared_grad.push_back(std::move(g));
                        } else {
                            shared_grad[0].scale_add(g, 1.0);
                        }
                    } else {
                        opts[i].step(anet.params(), g, lr);
                    }
                }
                b.steps.clear();
                b.actions.clear();
                b.rewards.clear();
                b.start_state = rstates[i];
            }
            if (cfg.shared_params && !shared_grad.empty())
                opts[0].step(nets[0].params(), shared_grad[0], lr);
            ++update_count;
            frozen = nets;
            for (size_t i = 0; i < n_nodes; ++i) batches[i].start_state = rstates[i];
        };

        for (int step = 0; step < steps_per_ep; ++step) {
            double t = step * cfg.control_step_s;
            if (emv) router.on_control_step(net, state, t);
            ObsContext ctx{net, state, emv ? &router.frozen_view() : nullptr, cfg.horizon_s};
            std::vector<int> phases(n_nodes, 0);
            std::vector<Vec> new_policies(n_nodes);
            for (size_t i = 0; i < n_nodes; ++i) {
                Vec obs = build_observation(ctx, static_cast<int>(i));
                Vec fp = build_fingerprint(net, static_cast<int>(i), prev_policies);
                nn::ActorCritic::StepCache cache =
                    nets[net_index(i)].forward(obs, fp, rstates[i]);
                int action = nn::sample_categorical(cache.probs, act_rng);
                phases[i] = action;
                new_policies[i] = cache.probs;
                batches[i].steps.push_back(std::move(cache));
                batches[i].actions.push_back(action);
            }
            int ticks = static_cast<int>(std::llround(cfg.control_step_s));
            for (int k = 0; k < ticks; ++k) state.step(phases, 1.0);

            // rewards from the post-step state
            pressure::PressureSnapshot snap = state.snapshot();
            std::vector<AgentType> types = classify_agents(net, state, router.table());
            std::optional<int> emv_out;
            {
                int primary = -1, secondary = -1;
                for (size_t i = 0; i < n_nodes; ++i) {
                    if (types[i] == AgentType::Primary) primary = static_cast<int>(i);
                    if (types[i] == AgentType::Secondary) secondary = static_cast<int>(i);
                }
                if (primary >= 0 && secondary >= 0)
                    for (int lid : net.out_link_ids(primary))
                        if (net.link(lid).to_node == secondary) {
                            emv_out = lid;
                            break;
                        }
            }
            std::vector<double> raw(n_nodes, 0.0);
            for (size_t i = 0; i < n_nodes; ++i)
                raw[i] = reward(net, types[i], static_cast<int>(i), snap, emv_out, cfg.beta,
                                cfg.sum_pressure);
            std::vector<double> adj = adjusted_rewards(raw, dist, cfg.alpha_spatial);
            for (size_t i = 0; i < n_nodes; ++i) {
                batches[i].rewards.push_back(adj[i]);
                reward_sum += adj[i];
            }
            reward_n += static_cast<long>(n_nodes);
            prev_policies = std::move(new_policies);

            bool last = step + 1 == steps_per_ep;
            if (static_cast<int>(batches[0].steps.size()) >= cfg.n_bs || last) flush(last);
        }

        EpisodeRecord rec;
        rec.episode = ep;
        if (emv && state.emv().arrived)
            rec.t_emv_s = state.emv().arrival_time_s - emv->dispatch_s;
        rec.t_avg_s = state.completed_trips() > 0
                          ? state.completed_duration_sum() / state.completed_trips()
                          : 0.0;
        rec.mean_reward = reward_n > 0 ? reward_sum / static_cast<double>(reward_n) : 0.0;
        result.curve.push_back(rec);
    }

    if (cfg.shared_params) {
        result.policies.nets.emplace(-1, nets[0]);
    } else {
        for (size_t i = 0; i < n_nodes; ++i)
            result.policies.nets.emplace(static_cast<int>(i), nets[i]);
    }
    if (!cfg.curve_path.empty()) write_curve_csv(result.curve, cfg.curve_path);
    if (!cfg.checkpoint_path.empty()) result.policies.save(cfg.checkpoint_path);
    return result;
}

void write_curve_csv(const std::vector<EpisodeRecord>& curve, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw AgentError("cannot write learning curve " + path);
    out << "episode,t_emv_s,t_avg_s,mean_reward\n";
    char buf[160];
    for (const EpisodeRecord& r : curve) {
        if (r.t_emv_s)
            std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.9f\n", r.episode, *r.t_emv_s,
                          r.t_avg_s, r.mean_reward);
        else
            std::snprintf(buf, sizeof(buf), "%d,,%.6f,%.9f\n", r.episode, r.t_avg_s,
                          r.mean_reward);
        out << buf;
    }
}

// ---- evaluation controller ----------------------------------------------------

MA2CController::MA2CController(PolicyBundle bundle, const DecentralizedRouter* router,
                               double horizon_s, double beta)
    : bundle_(std::move(bundle)), router_(router), horizon_s_(horizon_s), beta_(beta) {}

void MA2CController::reset(const TrafficNetwork& net, std::uint64_t) {
    rstates_.clear();
    prev_policies_.assign(net.nodes.size(), Vec::Constant(8, 0.125));
    for (size_t i = 0; i < net.nodes.size(); ++i)
        rstates_.push_back(bundle_.net_for(static_cast<int>(i)).initial_state());
}

std::vector<int> MA2CController::decide(const TrafficNetwork& net, const dyn::SimState& state,
                                        double) {
    if (rstates_.size() != net.nodes.size()) reset(net, 0);
    ObsContext ctx{net, state, router_ ? &router_->frozen_view() : nullptr, horizon_s_};
    std::vector<int> phases(net.nodes.size(), 0);
    std::vector<Vec> new_policies(net.nodes.size());
    for (size_t i = 0; i < net.nodes.size(); ++i) {
        Vec obs = build_observation(ctx, static_cast<int>(i));
        Vec fp = build_fingerprint(net, static_cast<int>(i), prev_policies_);
        Vec probs = bundle_.net_for(static_cast<int>(i)).forward_policy(obs, fp, rstates_[i]);
        Eigen::Index best;
        probs.maxCoeff(&best);
        phases[i] = static_cast<int>(best);
        new_policies[i] = probs;
    }
    prev_policies_ = std::move(new_policies);
    return phases;
}

} // namespace emv::agents
