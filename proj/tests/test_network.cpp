#include <doctest.h>

#include <set>

#include "emvsim/network.hpp"

using namespace emv::net;

TEST_CASE("grid 5x5 has 25 nodes and 80 directed links") {
    TrafficNetwork g = generate_grid(5, 5, 200.0, 2, 0.0);
    CHECK(g.nodes.size() == 25);
    CHECK(g.links.size() == 80);
    for (const Link& l : g.links) {
        CHECK(l.lane_count == 2);
        CHECK(l.lane_capacity() == 26); // floor(200 / 7.5)
        CHECK(l.emergency_capacity == 0.0);
    }
}

TEST_CASE("smallest 2x2 grid") {
    TrafficNetwork g = generate_grid(2, 2, 100.0, 1, 0.0);
    CHECK(g.nodes.size() == 4);
    CHECK(g.links.size() == 8);
}

TEST_CASE("ec ratio applies to every link") {
    TrafficNetwork g = generate_grid(5, 5, 200.0, 2, 0.2);
    for (const Link& l : g.links)
        CHECK(l.emergency_capacity == doctest::Approx(0.2 * l.capacity));
}

TEST_CASE("invalid grid dimensions rejected") {
    CHECK_THROWS_AS(generate_grid(1, 5, 200.0, 2, 0.0), ConfigError);
    CHECK_THROWS_AS(generate_grid(5, 5, 200.0, 0, 0.0), ConfigError);
    CHECK_THROWS_AS(generate_grid(5, 5, 200.0, 2, 1.5), ConfigError);
}

TEST_CASE("grid generation is deterministic byte-for-byte") {
    std::string a = serialize_network(generate_grid(4, 3, 150.0, 2, 0.1));
    std::string b = serialize_network(generate_grid(4, 3, 150.0, 2, 0.1));
    CHECK(a == b);
}

TEST_CASE("union of phase movements equals M_i and every in-lane is served") {
    TrafficNetwork g = generate_grid(3, 3, 200.0, 2, 0.0);
    for (const Intersection& n : g.nodes) {
        std::set<std::pair<int, int>> in_phases, in_m;
        for (int p = 0; p < 8; ++p)
            for (const Movement& m : g.movements_of_phase(n.id, p))
                in_phases.insert({m.in_lane, m.out_lane});
        for (const Movement& m : n.movements) in_m.insert({m.in_lane, m.out_lane});
        CHECK(in_phases == in_m);
        for (int lane : g.incoming_lane_ids(n.id))
            CHECK(!g.out_links_of_in_lane(n.id, lane).empty());
        // every out-link reachable from >= 1 in-lane
        std::set<int> reached;
        for (const Movement& m : n.movements) reached.insert(g.lane(m.out_lane).link_id);
        for (int a = 0; a < 4; ++a)
            if (n.outgoing_link[a] >= 0) CHECK(reached.count(n.outgoing_link[a]) == 1);
    }
}

TEST_CASE("interior intersection of a 2-lane grid has the paper's movement count") {
    TrafficNetwork g = generate_grid(3, 3, 200.0, 2, 0.0);
    const Intersection& center = g.node(4);
    CHECK(center.neighbors.size() == 4);
    // per approach: left lane -> 2 lanes left-link, through lane -> 2+2 lanes
    CHECK(center.movements.size() == 24);
}

TEST_CASE("phase index out of range") {
    TrafficNetwork g = generate_grid(2, 2, 100.0, 1, 0.0);
    CHECK_THROWS_AS(g.movements_of_phase(0, 8), ConfigError);
    CHECK_THROWS_AS(g.movements_of_phase(0, -1), ConfigError);
}

TEST_CASE("serialize / parse round trip preserves structure") {
    TrafficNetwork g = generate_grid(3, 4, 180.0, 2, 0.15);
    TrafficNetwork h = parse_network(serialize_network(g));
    CHECK(serialize_network(h) == serialize_network(g));
}

TEST_CASE("load error names the offending link") {
    std::string bad = R"({"nodes":[{"id":0,"x_m":0,"y_m":0},{"id":1,"x_m":100,"y_m":0}],
        "links":[{"id":7,"from":0,"to":9,"length_m":100}]})";
    try {
        parse_network(bad);
        FAIL("expected LoadError");
    } catch (const LoadError& e) {
        CHECK(std::string(e.what()).find("7") != std::string::npos);
    }
}

TEST_CASE("minimal 2-node file loads") {
    std::string txt = R"({"nodes":[{"id":10,"x_m":0,"y_m":0},{"id":11,"x_m":100,"y_m":0}],
        "links":[{"id":0,"from":10,"to":11,"length_m":100,"lanes":1}]})";
    TrafficNetwork g = parse_network(txt);
    CHECK(g.nodes.size() == 2);
    CHECK(g.links.size() == 1);
    CHECK(g.links[0].capacity == 13);
}

TEST_CASE("nonpositive length rejected") {
    std::string txt = R"({"nodes":[{"id":0,"x_m":0,"y_m":0},{"id":1,"x_m":100,"y_m":0}],
        "links":[{"id":0,"from":0,"to":1,"length_m":0}]})";
    CHECK_THROWS_AS(parse_network(txt), LoadError);
}

TEST_CASE("one-way 16x3 style network preserves one-way streets") {
    // build a small one-way 4x3 grid file: streets eastbound on even rows,
    // westbound on odd rows, avenues northbound only
    std::string nodes = "[", links = "[";
    int lid = 0;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 3; ++c) {
            int id = r * 3 + c;
            nodes += (id ? "," : "");
            nodes += "{\"id\":" + std::to_string(id) + ",\"x_m\":" + std::to_string(c * 100) +
                     ",\"y_m\":" + std::to_string(r * 100) + "}";
        }
    auto add = [&](int f, int t) {
        links += (lid ? "," : "");
        links += "{\"id\":" + std::to_string(lid++) + ",\"from\":" + std::to_string(f) +
                 ",\"to\":" + std::to_string(t) + ",\"length_m\":100,\"lanes\":2}";
    };
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c + 1 < 3; ++c) {
            int id = r * 3 + c;
            if (r % 2 == 0) add(id, id + 1); else add(id + 1, id);
        }
    for (int r = 0; r + 1 < 4; ++r)
        for (int c = 0; c < 3; ++c) add(r * 3 + c, (r + 1) * 3 + c);
    std::string txt = "{\"nodes\":" + nodes + "],\"links\":" + links + "]}";
    emv::net::TrafficNetwork g = parse_network(txt);
    CHECK(g.nodes.size() == 12);
    CHECK(g.links.size() == 4 * 2 + 3 * 3);
    // one-way: no reverse counterparts
    for (const Link& l : g.links) {
        for (const Link& m : g.links)
            if (m.from_node == l.to_node && m.to_node == l.from_node) FAIL("reverse link found");
    }
}
