#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "emvsim/accessibility.hpp"
#include "emvsim/routing.hpp"

using namespace emv;
using namespace emv::access;
using namespace emv::geom;

namespace {

AccessGraph star(int neighbors, double radius) {
    AccessGraph g;
    g.nodes.push_back({0, 0.0, 0.0, true});
    for (int i = 0; i < neighbors; ++i) {
        double a = 2.0 * std::numbers::pi * i / neighbors + 0.37;
        g.nodes.push_back({i + 1, radius * std::cos(a), radius * std::sin(a), true});
    }
    return g;
}

// even-odd point-in-polygon for the rasterized oracle
bool contains(const Polygon& poly, double x, double y) {
    bool in = false;
    size_t n = poly.size();
    for (size_t i = 0, j = n - 1; i < n; j = i++) {
        const Point& a = poly[i];
        const Point& b = poly[j];
        if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x)
            in = !in;
    }
    return in;
}

Polygon square(double x0, double y0, double side) {
    return {{x0, y0}, {x0 + side, y0}, {x0 + side, y0 + side}, {x0, y0 + side}};
}

} // namespace

TEST_CASE("intersection density counts other signalized nodes in a closed ball") {
    AccessGraph lone;
    lone.nodes.push_back({0, 0.0, 0.0, true});
    CHECK(intersection_density(lone, 0) == 0.0);

    AccessGraph g = star(5, 600.0);
    CHECK(intersection_density(g, 0) ==
          doctest::Approx(5.0 / (std::numbers::pi * 800.0 * 800.0)));

    // a node sitting exactly at radius r is inside
    AccessGraph edge;
    edge.nodes = {{0, 0.0, 0.0, true}, {1, 800.0, 0.0, true}};
    CHECK(intersection_density(edge, 0) ==
          doctest::Approx(1.0 / (std::numbers::pi * 800.0 * 800.0)));

    // unsignalized nodes never count
    AccessGraph mixed = star(3, 100.0);
    mixed.nodes[2].signalized = false;
    CHECK(intersection_density(mixed, 0) ==
          doctest::Approx(2.0 / (std::numbers::pi * 800.0 * 800.0)));

    CHECK_THROWS_AS(intersection_density(lone, 0, 0.0), AccessError);
}

TEST_CASE("edge delay is the alpha-scaled endpoint-density mean") {
    CHECK(edge_delay(0.0, 1.0, 2.0) == 0.0);
    double dens = 5.0 / (std::numbers::pi * 800.0 * 800.0);
    CHECK(edge_delay(15.0, dens, dens) == doctest::Approx(15.0 * dens));
    // linear in alpha
    CHECK(edge_delay(30.0, 0.3, 0.7) == doctest::Approx(2.0 * edge_delay(15.0, 0.3, 0.7)));
    CHECK_THROWS_AS(edge_delay(-1.0, 0.0, 0.0), AccessError);
}

TEST_CASE("two-edge line at 11.176 m/s: 500 m per hop, 89.5 s end to end") {
    AccessGraph g;
    g.nodes = {{0, 0.0, 0.0, true}, {1, 500.0, 0.0, true}, {2, 1000.0, 0.0, true}};
    g.edges = {{0, 1, 500.0, 11.176}, {1, 2, 500.0, 11.176}};
    g.facilities = {{2, FacilityKind::Ems}};
    std::vector<double> t = adjusted_times(g, 0.0, FacilityKind::Ems);
    CHECK(t[2] == 0.0);
    CHECK(t[1] == doctest::Approx(500.0 / 11.176));
    CHECK(t[0] == doctest::Approx(1000.0 / 11.176));
    CHECK(t[0] == doctest::Approx(89.5).epsilon(1e-3));

    CHECK_THROWS_AS(adjusted_times(g, 0.0, FacilityKind::Hospital), AccessError);
}

TEST_CASE("adjusted times are pointwise nondecreasing in alpha") {
    AccessGraph g;
    // 3x3 block with an EMS in one corner; everything within the density ball
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            g.nodes.push_back({r * 3 + c, c * 400.0, r * 400.0, true});
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            if (c + 1 < 3) g.edges.push_back({r * 3 + c, r * 3 + c + 1, 400.0, 11.176});
            if (r + 1 < 3) g.edges.push_back({r * 3 + c, (r + 1) * 3 + c, 400.0, 11.176});
        }
    g.facilities = {{0, FacilityKind::Ems}};
    std::vector<double> base = adjusted_times(g, 0.0, FacilityKind::Ems);
    std::vector<double> slow = adjusted_times(g, 15.0, FacilityKind::Ems);
    for (size_t i = 0; i < base.size(); ++i) {
        CHECK(slow[i] >= base[i] - 1e-12);
        if (i != 0) CHECK(slow[i] > base[i]); // positive densities everywhere
    }
}

TEST_CASE("multi-source time equals the minimum over per-facility runs") {
    Rng rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        AccessGraph g;
        int n = 5 + static_cast<int>(rng.next_below(6));
        for (int i = 0; i < n; ++i)
            g.nodes.push_back({i, rng.uniform(0.0, 2000.0), rng.uniform(0.0, 2000.0), true});
        for (int i = 0; i + 1 < n; ++i) // spanning chain keeps it connected
            g.edges.push_back({i, i + 1, rng.uniform(100.0, 900.0), rng.uniform(5.0, 15.0)});
        for (int e = 0; e < n; ++e) {
            int u = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n)));
            int v = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n)));
            if (u != v) g.edges.push_back({u, v, rng.uniform(100.0, 900.0),
                                           rng.uniform(5.0, 15.0)});
        }
        int f1 = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n)));
        int f2 = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n)));
        g.facilities = {{f1, FacilityKind::Ems}, {f2, FacilityKind::Ems}};
        std::vector<double> multi = adjusted_times(g, 10.0, FacilityKind::Ems);

        AccessGraph a = g, b = g;
        a.facilities = {{f1, FacilityKind::Ems}};
        b.facilities = {{f2, FacilityKind::Ems}};
        std::vector<double> ta = adjusted_times(a, 10.0, FacilityKind::Ems);
        std::vector<double> tb = adjusted_times(b, 10.0, FacilityKind::Ems);
        for (int i = 0; i < n; ++i)
            CHECK(multi[i] == doctest::Approx(std::min(ta[i], tb[i])));
    }
}

TEST_CASE("a single node absorbs the whole tract") {
    AccessGraph g;
    g.nodes.push_back({0, 500.0, 500.0, true});
    std::vector<Tract> tracts;
    tracts.push_back({square(0.0, 0.0, 1000.0), 100.0, std::nullopt});
    std::vector<double> p = assign_population(g, tracts);
    CHECK(p[0] == doctest::Approx(100.0));
}

TEST_CASE("two symmetric nodes split a square tract evenly") {
    AccessGraph g;
    g.nodes.push_back({0, 250.0, 500.0, true});
    g.nodes.push_back({1, 750.0, 500.0, true});
    std::vector<Tract> tracts;
    tracts.push_back({square(0.0, 0.0, 1000.0), 80.0, std::nullopt});
    std::vector<double> p = assign_population(g, tracts);
    CHECK(p[0] == doctest::Approx(40.0));
    CHECK(p[1] == doctest::Approx(40.0));
}

TEST_CASE("population is conserved and matches a rasterized oracle") {
    AccessGraph g;
    g.nodes.push_back({0, 200.0, 300.0, true});
    g.nodes.push_back({1, 800.0, 250.0, true});
    g.nodes.push_back({2, 550.0, 820.0, true});
    std::vector<Tract> tracts;
    tracts.push_back({square(0.0, 0.0, 600.0), 120.0, std::nullopt});
    tracts.push_back({{{600.0, 0.0}, {1000.0, 0.0}, {1000.0, 1000.0}, {300.0, 1000.0},
                       {300.0, 600.0}, {600.0, 600.0}},
                      200.0,
                      std::nullopt});
    std::vector<double> p = assign_population(g, tracts);

    double total = p[0] + p[1] + p[2];
    CHECK(total == doctest::Approx(320.0).epsilon(1e-3));

    // independent rasterized integration: nearest site per raster sample
    std::vector<double> oracle(3, 0.0);
    const int cells = 500;
    double step = 1000.0 / cells;
    for (const Tract& t : tracts) {
        double dens = t.population / t.effective_area();
        for (int i = 0; i < cells; ++i)
            for (int j = 0; j < cells; ++j) {
                double x = (i + 0.5) * step, y = (j + 0.5) * step;
                if (!contains(t.polygon, x, y)) continue;
                int best = 0;
                double bd = 1e30;
                for (int s = 0; s < 3; ++s) {
                    double dx = g.nodes[s].x_m - x, dy = g.nodes[s].y_m - y;
                    double d = dx * dx + dy * dy;
                    if (d < bd) { bd = d; best = s; }
                }
                oracle[best] += dens * step * step;
            }
    }
    for (int s = 0; s < 3; ++s)
        CHECK(p[s] == doctest::Approx(oracle[s]).epsilon(2e-3));
}

TEST_CASE("voronoi cells tile their bounding hull") {
    std::vector<Point> sites = {{100.0, 120.0}, {640.0, 200.0}, {420.0, 700.0},
                                {900.0, 860.0}, {150.0, 900.0}};
    Polygon bounds = square(0.0, 0.0, 1000.0);
    double sum = 0.0;
    for (size_t i = 0; i < sites.size(); ++i) sum += area(voronoi_cell(sites, i, bounds));
    CHECK(sum == doctest::Approx(1000.0 * 1000.0).epsilon(1e-3));
}

TEST_CASE("duplicate node coordinates are rejected by name") {
    AccessGraph g;
    g.nodes.push_back({0, 10.0, 10.0, true});
    g.nodes.push_back({1, 10.0, 10.0, true});
    std::vector<Tract> tracts;
    tracts.push_back({square(0.0, 0.0, 100.0), 5.0, std::nullopt});
    CHECK_THROWS_WITH_AS(assign_population(g, tracts),
                         "duplicate node coordinates: nodes 0 and 1", AccessError);
}

TEST_CASE("coverage curve is monotone, bounded, and saturates") {
    std::vector<double> t = {0.0, 100.0, 260.0, 500.0};
    std::vector<double> p = {10.0, 20.0, 30.0, 40.0};
    std::vector<double> taus = {50.0, 150.0, 300.0, 1e18};
    std::vector<double> cov = coverage_curve(t, p, taus);
    CHECK(cov[0] == doctest::Approx(0.1));
    CHECK(cov[1] == doctest::Approx(0.3));
    CHECK(cov[2] == doctest::Approx(0.6));
    CHECK(cov[3] == doctest::Approx(1.0));
    for (size_t i = 1; i < cov.size(); ++i) CHECK(cov[i] >= cov[i - 1]);
    for (double c : cov) {
        CHECK(c >= 0.0);
        CHECK(c <= 1.0);
    }
    CHECK_THROWS_AS(coverage_curve(t, {0.0, 0.0, 0.0, 0.0}, taus), AccessError);
    CHECK_THROWS_AS(coverage_curve(t, p, {300.0, 150.0}), AccessError);
}

TEST_CASE("vulnerability report lists only nodes beyond the threshold") {
    AccessGraph g;
    for (int i = 0; i < 3; ++i) g.nodes.push_back({i, i * 100.0, 0.0, true});
    VulnerabilityReport ok = vulnerability_report(g, {10.0, 200.0, 240.0}, {1, 2, 3}, 240.0);
    CHECK(ok.rows.empty());
    CHECK(ok.underserved_population == 0.0);

    VulnerabilityReport bad = vulnerability_report(g, {10.0, 900.0, 100.0}, {1, 10.0, 3}, 240.0);
    REQUIRE(bad.rows.size() == 1);
    CHECK(bad.rows[0].node == 1);
    CHECK(bad.rows[0].t_prime_s == doctest::Approx(900.0));
    CHECK(bad.underserved_population == doctest::Approx(10.0));
}

TEST_CASE("corner facility on a toy grid flags the far corner") {
    AccessGraph g;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            g.nodes.push_back({r * 3 + c, c * 600.0, r * 600.0, true});
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            if (c + 1 < 3) g.edges.push_back({r * 3 + c, r * 3 + c + 1, 600.0, 11.176});
            if (r + 1 < 3) g.edges.push_back({r * 3 + c, (r + 1) * 3 + c, 600.0, 11.176});
        }
    g.facilities = {{0, FacilityKind::Ems}};
    std::vector<double> t = adjusted_times(g, 0.0, FacilityKind::Ems);
    // hand Dijkstra: node (r, c) is (r + c) hops of 600/11.176 s each
    double hop = 600.0 / 11.176;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            CHECK(t[r * 3 + c] == doctest::Approx((r + c) * hop));
    std::vector<double> pop(9, 1.0);
    VulnerabilityReport rep = vulnerability_report(g, t, pop, 3.5 * hop);
    REQUIRE(rep.rows.size() == 1);
    CHECK(rep.rows[0].node == 8);
}

TEST_CASE("free-flowing EMV spends 50/12 seconds inside each 25 m window") {
    std::string nodes = "[", links = "[";
    for (int i = 0; i < 4; ++i) {
        nodes += (i ? "," : "");
        nodes += "{\"id\":" + std::to_string(i) + ",\"x_m\":" + std::to_string(i * 200.0) +
                 ",\"y_m\":0}";
    }
    int lid = 0;
    auto add = [&](int f, int to) {
        links += (lid ? "," : "");
        links += "{\"id\":" + std::to_string(lid++) + ",\"from\":" + std::to_string(f) +
                 ",\"to\":" + std::to_string(to) + ",\"length_m\":200,\"lanes\":1}";
    };
    for (int i = 0; i + 1 < 4; ++i) add(i, i + 1);
    for (int i = 3; i > 0; --i) add(i, i - 1);
    net::TrafficNetwork g =
        net::parse_network("{\"nodes\":" + nodes + "],\"links\":" + links + "]}");
    struct Straight : dyn::IController {
        void reset(const net::TrafficNetwork&, std::uint64_t) override {}
        std::vector<int> decide(const net::TrafficNetwork& net, const dyn::SimState&,
                                double) override {
            return std::vector<int>(net.nodes.size(), 1); // E-W through green
        }
    } ctrl;
    routing::RoutingTable table =
        routing::prepopulate(g, routing::free_flow_times(g), 3);
    struct Fixed : dyn::IRouter {
        routing::RoutingTable* table;
        void on_episode_start(const net::TrafficNetwork&, const dyn::EmvSpec&,
                              const dyn::SimState&) override {}
        void on_control_step(const net::TrafficNetwork&, const dyn::SimState&,
                             double) override {}
        int next_node(int at) override { return routing::emv_next_hop(*table, at); }
    } router;
    router.table = &table;
    dyn::EmvSpec spec{0, 3, 0.0};
    std::vector<double> transits =
        emv_window_transits(g, {}, spec, ctrl, &router, 120.0, 9, {1, 2});
    REQUIRE(transits.size() == 2);
    double v = g.link(0).v_emv_mps;
    for (double s : transits) CHECK(s == doctest::Approx(50.0 / v).epsilon(1e-9));
}

TEST_CASE("transit stats and the alpha scaling ratio") {
    TransitStats empty;
    CHECK(empty.mean() == 0.0);
    TransitStats fast{"a", {2.0, 4.0}, true};
    TransitStats slow{"b", {6.0, 6.0}, true};
    CHECK(fast.mean() == doctest::Approx(3.0));
    CHECK(alpha_scaling(fast, slow) == doctest::Approx(0.5));
    CHECK_THROWS_AS(alpha_scaling(fast, empty), AccessError);
}

TEST_CASE("inner nodes of a 5x5 grid are the middle nine") {
    net::TrafficNetwork g = net::generate_grid(5, 5, 400.0, 2, 0.2);
    std::vector<int> inner = inner_nodes(g);
    REQUIRE(inner.size() == 9);
    std::vector<int> expect = {6, 7, 8, 11, 12, 13, 16, 17, 18};
    CHECK(inner == expect);
}

TEST_CASE("csv and geojson round trips") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "emv_access_io";
    fs::create_directories(dir);
    {
        std::ofstream n(dir / "nodes.csv");
        n << "id,x_m,y_m,signalized\n0,0,0,1\n1,500,0,1\n2,1000,0,0\n";
        std::ofstream e(dir / "edges.csv");
        e << "u,v,length_m,speed_mps\n0,1,500,11.176\n1,2,500,11.176\n";
        std::ofstream f(dir / "facilities.csv");
        f << "node_id,kind\n2,ems\n0,hospital\n";
        std::ofstream t(dir / "tracts.geojson");
        t << R"({"type":"FeatureCollection","features":[
              {"type":"Feature","geometry":{"type":"Polygon","coordinates":
               [[[0,0],[1000,0],[1000,400],[0,400],[0,0]]]},
               "properties":{"population":64,"area_m2":400000}}]})";
    }
    AccessGraph g = load_access_graph(dir.string());
    REQUIRE(g.nodes.size() == 3);
    CHECK(g.nodes[2].signalized == false);
    REQUIRE(g.edges.size() == 2);
    CHECK(g.edges[1].speed_mps == doctest::Approx(11.176));
    REQUIRE(g.facilities.size() == 2);
    CHECK(g.facilities[0].kind == FacilityKind::Ems);
    CHECK(g.facilities[1].kind == FacilityKind::Hospital);

    std::vector<Tract> tracts = load_tracts((dir / "tracts.geojson").string());
    REQUIRE(tracts.size() == 1);
    CHECK(tracts[0].polygon.size() == 4); // closing vertex dropped
    CHECK(tracts[0].population == doctest::Approx(64.0));
    CHECK(tracts[0].effective_area() == doctest::Approx(400000.0));

    std::vector<double> t = adjusted_times(g, 0.0, FacilityKind::Ems);
    std::vector<double> pop = {10.0, 20.0, 30.0};
    write_node_times_csv((dir / "node_times.csv").string(), g, t, pop);
    write_coverage_csv((dir / "coverage.csv").string(), {60.0, 120.0},
                       coverage_curve(t, pop, {60.0, 120.0}));
    write_vulnerable_csv((dir / "vulnerable.csv").string(),
                         vulnerability_report(g, t, pop, 60.0));
    std::ifstream check(dir / "node_times.csv");
    std::string header;
    std::getline(check, header);
    CHECK(header == "node,t_prime_s,population");
    fs::remove_all(dir);
}
