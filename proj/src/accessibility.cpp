#include "emvsim/accessibility.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <queue>
#include <sstream>

#include <json.hpp>

namespace emv::access {

using json = nlohmann::ordered_json;

void AccessGraph::validate() const {
    for (size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i].id != static_cast<int>(i))
            throw AccessError("node ids must be dense and ordered");
    for (const AccessEdge& e : edges) {
        if (e.u < 0 || e.v < 0 || e.u >= static_cast<int>(nodes.size()) ||
            e.v >= static_cast<int>(nodes.size()))
            throw AccessError("edge endpoint outside the node set");
        if (e.length_m <= 0.0 || e.speed_mps <= 0.0)
            throw AccessError("edge lengths and speeds must be positive");
    }
    for (const Facility& f : facilities)
        if (f.node < 0 || f.node >= static_cast<int>(nodes.size()))
            throw AccessError("facility node outside the node set");
}

double Tract::effective_area() const {
    if (area_m2) return *area_m2;
    return geom::area(polygon);
}

double intersection_density(const AccessGraph& g, int node, double r_m) {
    if (r_m <= 0.0) throw AccessError("radius must be positive");
    const AccessNode& v = g.nodes.at(static_cast<size_t>(node));
    int count = 0;
    for (const AccessNode& o : g.nodes) {
        if (o.id == v.id || !o.signalized) continue;
        double dx = o.x_m - v.x_m, dy = o.y_m - v.y_m;
        if (std::sqrt(dx * dx + dy * dy) <= r_m) ++count; // closed ball
    }
    return static_cast<double>(count) / (std::numbers::pi * r_m * r_m);
}

double edge_delay(double alpha, double density_u, double density_v) {
    if (alpha < 0.0) throw AccessError("alpha must be nonnegative");
    return alpha * (density_u + density_v) / 2.0;
}

std::vector<double> adjusted_times(const AccessGraph& g, double alpha, FacilityKind kind,
                                   double r_m) {
    g.validate();
    std::vector<int> sources;
    for (const Facility& f : g.facilities)
        if (f.kind == kind) sources.push_back(f.node);
    if (sources.empty()) throw AccessError("no facilities of the requested kind");

    std::vector<double> density(g.nodes.size());
    for (size_t i = 0; i < g.nodes.size(); ++i)
        density[i] = intersection_density(g, static_cast<int>(i), r_m);

    // undirected adjacency with adjusted edge times
    std::vector<std::vector<std::pair<int, double>>> adj(g.nodes.size());
    for (const AccessEdge& e : g.edges) {
        double w = e.length_m / e.speed_mps +
                   edge_delay(alpha, density[static_cast<size_t>(e.u)],
                              density[static_cast<size_t>(e.v)]);
        adj[static_cast<size_t>(e.u)].push_back({e.v, w});
        adj[static_cast<size_t>(e.v)].push_back({e.u, w});
    }

    std::vector<double> dist(g.nodes.size(), std::numeric_limits<double>::infinity());
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    for (int s : sources) {
        dist[static_cast<size_t>(s)] = 0.0;
        pq.push({0.0, s});
    }
    while (!pq.empty()) {
        auto [d, u] = pq.top();
        pq.pop();
        if (d > dist[static_cast<size_t>(u)]) continue;
        for (auto [v, w] : adj[static_cast<size_t>(u)])
            if (d + w < dist[static_cast<size_t>(v)] - 1e-15) {
                dist[static_cast<size_t>(v)] = d + w;
                pq.push({d + w, v});
            }
    }
    return dist;
}

std::vector<double> assign_population(const AccessGraph& g, const std::vector<Tract>& tracts) {
    if (g.nodes.empty()) throw AccessError("population assignment needs nodes");
    std::vector<geom::Point> sites;
    sites.reserve(g.nodes.size());
    for (const AccessNode& n : g.nodes) sites.push_back({n.x_m, n.y_m});
    for (size_t i = 0; i < sites.size(); ++i)
        for (size_t j = i + 1; j < sites.size(); ++j)
            if (sites[i].x == sites[j].x && sites[i].y == sites[j].y)
                throw AccessError("duplicate node coordinates: nodes " + std::to_string(i) +
                                  " and " + std::to_string(j));

    std::vector<geom::Point> all_vertices;
    for (const Tract& t : tracts)
        for (const geom::Point& p : t.polygon) all_vertices.push_back(p);
    geom::Polygon bounds;
    if (all_vertices.size() >= 3) {
        try {
            bounds = geom::convex_hull(all_vertices);
        } catch (const geom::GeometryError&) {
            bounds.clear();
        }
    }

    std::vector<double> pop(g.nodes.size(), 0.0);
    if (bounds.empty()) return pop;
    for (size_t i = 0; i < sites.size(); ++i) {
        geom::Polygon cell = geom::voronoi_cell(sites, i, bounds);
        if (cell.size() < 3) continue;
        for (const Tract& t : tracts) {
            double overlap = geom::intersection_area(t.polygon, cell);
            if (overlap > 0.0 && t.effective_area() > 0.0)
                pop[i] += overlap * t.population / t.effective_area();
        }
    }
    return pop;
}

std::vector<double> coverage_curve(const std::vector<double>& t_prime,
                                   const std::vector<double>& population,
                                   const std::vector<double>& taus) {
    if (t_prime.size() != population.size()) throw AccessError("size mismatch");
    if (!std::is_sorted(taus.begin(), taus.end())) throw AccessError("taus must be sorted");
    double total = 0.0;
    for (double p : population) total += p;
    if (total <= 0.0) throw AccessError("zero total population");
    std::vector<double> out;
    out.reserve(taus.size());
    for (double tau : taus) {
        double covered = 0.0;
        for (size_t i = 0; i < t_prime.size(); ++i)
            if (t_prime[i] <= tau) covered += population[i];
        out.push_back(covered / total);
    }
    return out;
}

VulnerabilityReport vulnerability_report(const AccessGraph& g,
                                         const std::vector<double>& t_prime,
                                         const std::vector<double>& population, double tau_s) {
    VulnerabilityReport r;
    for (size_t i = 0; i < t_prime.size(); ++i) {
        if (t_prime[i] > tau_s) {
            r.rows.push_back({g.nodes[i].id, t_prime[i], population[i]});
            r.underserved_population += population[i];
        }
    }
    return r;
}

// ---- EMVLight alpha-halving experiment --------------------------------------

std::vector<int> inner_nodes(const net::TrafficNetwork& net) {
    std::vector<int> out;
    for (const net::Intersection& n : net.nodes) {
        bool full = true;
        for (int a = 0; a < 4; ++a)
            if (n.incoming_link[static_cast<size_t>(a)] < 0 ||
                n.outgoing_link[static_cast<size_t>(a)] < 0)
                full = false;
        if (full) out.push_back(n.id);
    }
    return out;
}

std::vector<double> emv_window_transits(const net::TrafficNetwork& net,
                                        const std::vector<dyn::FlowConfig>& flows,
                                        const dyn::EmvSpec& emv, dyn::IController& controller,
                                        dyn::IRouter* router, double horizon_s,
                                        std::uint64_t seed, const std::vector<int>& nodes,
                                        double window_m) {
    if (!router) throw AccessError("the window experiment needs a router");
    dyn::SimState state(net, flows, emv, horizon_s, seed);
    controller.reset(net, derive_seed(seed, 0x77696eULL));
    router->on_episode_start(net, emv, state);
    state.emv_next_node = [router](int at) { return router->next_node(at); };

    std::vector<double> transits;
    auto watched = [&](int node) {
        return std::find(nodes.begin(), nodes.end(), node) != nodes.end();
    };
    // classify an EMV position against the +-window: returns the node whose
    // window contains it, or -1
    auto window_node = [&](int link, double pos) {
        if (link < 0) return -1;
        const net::Link& l = net.link(link);
        if (l.length_m - pos <= window_m) return l.to_node; // approaching
        if (pos <= window_m) return l.from_node;            // just crossed
        return -1;
    };

    // ongoing traversal: which watched node, interpolated entry time
    int active_node = -1;
    double entry_time = 0.0;

    int steps = static_cast<int>(std::llround(horizon_s / 5.0));
    for (int step = 0; step < steps; ++step) {
        double t = step * 5.0;
        router->on_control_step(net, state, t);
        std::vector<int> phases = controller.decide(net, state, t);
        for (int k = 0; k < 5; ++k) {
            const dyn::EmvStatus before = state.emv();
            double t0 = state.clock();
            state.step(phases, 1.0);
            const dyn::EmvStatus& e = state.emv();

            // route distance travelled this tick (at most one link crossing
            // at these link lengths and speeds)
            double moved = 0.0;
            if (before.active && e.active && before.link >= 0 && e.link >= 0) {
                moved = (e.link == before.link)
                            ? e.pos_m - before.pos_m
                            : (net.link(before.link).length_m - before.pos_m) + e.pos_m;
            }
            // time at which the EMV reached route distance `d` past its
            // start-of-tick position, assuming steady speed within the tick
            auto crossing = [&](double d) {
                return moved > 1e-12 ? t0 + std::clamp(d / moved, 0.0, 1.0) : t0;
            };

            int node_now = (e.active && !e.arrived) ? window_node(e.link, e.pos_m) : -1;
            if (node_now >= 0 && !watched(node_now)) node_now = -1;

            if (active_node >= 0 && node_now != active_node) {
                // exit boundary: window_m past the stop line on the outbound
                // link; interpolate where that lies in this tick
                double exit_t;
                if (e.arrived) {
                    exit_t = e.arrival_time_s;
                } else if (before.link >= 0 && e.link >= 0 &&
                           net.link(e.link).from_node == active_node) {
                    double d = (e.link == before.link)
                                   ? window_m - before.pos_m
                                   : (net.link(before.link).length_m - before.pos_m) + window_m;
                    exit_t = crossing(d);
                } else {
                    exit_t = t0;
                }
                transits.push_back(exit_t - entry_time);
                active_node = -1;
            }
            if (node_now >= 0 && active_node < 0) {
                active_node = node_now;
                if (before.link >= 0) {
                    // entry boundary: window_m before the stop line of the
                    // approach link into node_now
                    int approach = (net.link(e.link).to_node == node_now) ? e.link : before.link;
                    const net::Link& al = net.link(approach);
                    double d = (approach == before.link)
                                   ? (al.length_m - window_m) - before.pos_m
                                   : (net.link(before.link).length_m - before.pos_m) +
                                         (al.length_m - window_m);
                    entry_time = crossing(std::max(0.0, d));
                } else {
                    entry_time = t0; // activated inside the window
                }
            }
        }
    }
    if (active_node >= 0) transits.push_back(state.clock() - entry_time);
    return transits;
}

double TransitStats::mean() const {
    if (transits_s.empty()) return 0.0;
    double s = 0.0;
    for (double v : transits_s) s += v;
    return s / static_cast<double>(transits_s.size());
}

double alpha_scaling(const TransitStats& treatment, const TransitStats& baseline) {
    double b = baseline.mean();
    if (b <= 0.0) throw AccessError("baseline mean transit must be positive");
    return treatment.mean() / b;
}

// ---- file interfaces --------------------------------------------------------

namespace {

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw AccessError("cannot read " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    if (rows.empty()) throw AccessError(path + " is empty");
    return rows;
}

} // namespace

AccessGraph load_access_graph(const std::string& dir) {
    AccessGraph g;
    for (auto& row : read_csv(dir + "/nodes.csv")) {
        if (row[0] == "id") continue;
        if (row.size() < 4) throw AccessError("nodes.csv needs id,x_m,y_m,signalized");
        g.nodes.push_back({std::stoi(row[0]), std::stod(row[1]), std::stod(row[2]),
                           std::stoi(row[3]) != 0});
    }
    for (auto& row : read_csv(dir + "/edges.csv")) {
        if (row[0] == "u") continue;
        if (row.size() < 4) throw AccessError("edges.csv needs u,v,length_m,speed_mps");
        g.edges.push_back({std::stoi(row[0]), std::stoi(row[1]), std::stod(row[2]),
                           std::stod(row[3])});
    }
    for (auto& row : read_csv(dir + "/facilities.csv")) {
        if (row[0] == "node_id") continue;
        if (row.size() < 2) throw AccessError("facilities.csv needs node_id,kind");
        FacilityKind kind;
        if (row[1] == "ems") kind = FacilityKind::Ems;
        else if (row[1] == "hospital") kind = FacilityKind::Hospital;
        else throw AccessError("unknown facility kind " + row[1]);
        g.facilities.push_back({std::stoi(row[0]), kind});
    }
    g.validate();
    return g;
}

std::vector<Tract> load_tracts(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw AccessError("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    json j = json::parse(ss.str());
    std::vector<Tract> tracts;
    for (const json& feat : j.at("features")) {
        const json& geo = feat.at("geometry");
        if (geo.at("type") != "Polygon") throw AccessError("tracts must be Polygon features");
        Tract t;
        const json& ring = geo.at("coordinates").at(0); // outer ring
        for (const json& pt : ring) t.polygon.push_back({pt.at(0), pt.at(1)});
        // GeoJSON repeats the first vertex at the end
        if (t.polygon.size() > 1 && t.polygon.front().x == t.polygon.back().x &&
            t.polygon.front().y == t.polygon.back().y)
            t.polygon.pop_back();
        const json& props = feat.at("properties");
        t.population = props.at("population");
        if (props.contains("area_m2")) t.area_m2 = props["area_m2"].get<double>();
        if (t.polygon.size() < 3) throw AccessError("degenerate tract polygon");
        tracts.push_back(std::move(t));
    }
    return tracts;
}

void write_node_times_csv(const std::string& path, const AccessGraph& g,
                          const std::vector<double>& t_prime,
                          const std::vector<double>& population) {
    std::ofstream out(path);
    if (!out) throw AccessError("cannot write " + path);
    out << "node,t_prime_s,population\n";
    char buf[96];
    for (size_t i = 0; i < g.nodes.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f\n", g.nodes[i].id, t_prime[i],
                      population[i]);
        out << buf;
    }
}

void write_coverage_csv(const std::string& path, const std::vector<double>& taus,
                        const std::vector<double>& fractions) {
    std::ofstream out(path);
    if (!out) throw AccessError("cannot write " + path);
    out << "tau_s,fraction\n";
    char buf[64];
    for (size_t i = 0; i < taus.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.3f,%.9f\n", taus[i], fractions[i]);
        out << buf;
    }
}

void write_vulnerable_csv(const std::string& path, const VulnerabilityReport& report) {
    std::ofstream out(path);
    if (!out) throw AccessError("cannot write " + path);
    out << "node,t_prime_s,population\n";
    char buf[96];
    for (const VulnerableRow& r : report.rows) {
        std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f\n", r.node, r.t_prime_s, r.population);
        out << buf;
    }
}

} // namespace emv::access
