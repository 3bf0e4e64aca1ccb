#include <doctest.h>

#include <cmath>

#include "emvsim/network.hpp"
#include "emvsim/pressure.hpp"
#include "emvsim/rng.hpp"

using namespace emv;
using namespace emv::net;
using namespace emv::pressure;

namespace {

// Vehicle-count transcription of the worked four-way two-lane example.
// Capacity is 5 per lane. Counts were chosen once so that all four published
// values hold simultaneously: w(lane 2) = 2/5, w*(2,4) = -1/5, EMVLight
// intersection pressure 25/80, PressLight intersection pressure 6.
// Approach arms S,W,N,E; per approach [left lane, through lane]:
//   in  S:[4,1]  W:[1,5]  N:[0,0]  E:[0,1]
// Out-link lane counts (lane index 0, 1):
//   out S:[0,1]  W:[0,0]  N:[1,2]  E:[3,0]
struct Fixture {
    TrafficNetwork g = generate_grid(3, 3, 40.0, 2, 0.0); // x_max = 5 per lane
    int center = 4;
    PressureSnapshot snap;
    int lane2 = -1, lane4 = -1; // paper numbering: S through lane, N out lane idx 1

    Fixture() {
        snap.count.assign(g.lanes.size(), 0.0);
        const Intersection& n = g.node(center);
        REQUIRE(g.lane(0).x_max == 5);
        auto set_in = [&](Arm a, double left, double through) {
            const Link& l = g.link(n.incoming_link[static_cast<int>(a)]);
            snap.count[static_cast<size_t>(l.first_lane)] = left;
            snap.count[static_cast<size_t>(l.first_lane + 1)] = through;
        };
        auto set_out = [&](Arm a, double c0, double c1) {
            const Link& l = g.link(n.outgoing_link[static_cast<int>(a)]);
            snap.count[static_cast<size_t>(l.first_lane)] = c0;
            snap.count[static_cast<size_t>(l.first_lane + 1)] = c1;
        };
        set_in(Arm::South, 4, 1);
        set_in(Arm::West, 1, 5);
        set_in(Arm::North, 0, 0);
        set_in(Arm::East, 0, 1);
        set_out(Arm::South, 0, 1);
        set_out(Arm::West, 0, 0);
        set_out(Arm::North, 1, 2);
        set_out(Arm::East, 3, 0);
        lane2 = g.link(n.incoming_link[static_cast<int>(Arm::South)]).first_lane + 1;
        lane4 = g.link(n.outgoing_link[static_cast<int>(Arm::North)]).first_lane + 1;
    }
};

} // namespace

TEST_CASE("worked lane pressure: w(lane 2) = 2/5") {
    Fixture f;
    CHECK(lane_pressure(f.g, f.center, f.lane2, f.snap) == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("worked movement pressure: w*(2,4) = -1/5") {
    Fixture f;
    CHECK(presslight_movement_pressure(f.g, f.lane2, f.lane4, f.snap) ==
          doctest::Approx(-0.2).epsilon(1e-12));
}

TEST_CASE("worked intersection pressures: 25/80 and 6") {
    Fixture f;
    CHECK(std::abs(intersection_pressure_emvlight(f.g, f.center, f.snap) - 25.0 / 80.0) < 1e-12);
    CHECK(std::abs(presslight_intersection_pressure(f.g, f.center, f.snap) - 6.0) < 1e-12);
}

TEST_CASE("single movement, equal densities gives zero lane pressure") {
    TrafficNetwork g = generate_grid(2, 2, 40.0, 1, 0.0);
    // corner node: single-lane approaches
    PressureSnapshot snap;
    snap.count.assign(g.lanes.size(), 2.0); // all equal density
    for (int lane : g.incoming_lane_ids(0)) {
        if (g.out_links_of_in_lane(0, lane).size() == 1)
            CHECK(lane_pressure(g, 0, lane, snap) == doctest::Approx(0.0));
    }
}

TEST_CASE("direct evaluation: one out-link h=2 with densities 0.5, 0.1") {
    Fixture f;
    PressureSnapshot snap;
    snap.count.assign(f.g.lanes.size(), 0.0);
    const Intersection& n = f.g.node(f.center);
    const Link& in = f.g.link(n.incoming_link[static_cast<int>(Arm::South)]);
    const Link& left_out = f.g.link(n.outgoing_link[static_cast<int>(Arm::West)]);
    snap.count[static_cast<size_t>(in.first_lane)] = 0.4 * 5;       // density 0.4
    snap.count[static_cast<size_t>(left_out.first_lane)] = 0.5 * 5;
    snap.count[static_cast<size_t>(left_out.first_lane + 1)] = 0.1 * 5;
    // left lane has exactly one out-link (the West left-turn target)
    CHECK(lane_pressure(f.g, f.center, in.first_lane, snap) ==
          doctest::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("presslight movement pressure bounds and trivia") {
    Fixture f;
    PressureSnapshot snap;
    snap.count.assign(f.g.lanes.size(), 0.0);
    snap.count[static_cast<size_t>(f.lane2)] = 5;
    CHECK(presslight_movement_pressure(f.g, f.lane2, f.lane4, snap) == doctest::Approx(1.0));
    snap.count[static_cast<size_t>(f.lane2)] = 0;
    CHECK(presslight_movement_pressure(f.g, f.lane2, f.lane4, snap) == doctest::Approx(0.0));
}

TEST_CASE("all-empty intersection has zero pressures") {
    Fixture f;
    PressureSnapshot snap;
    snap.count.assign(f.g.lanes.size(), 0.0);
    CHECK(intersection_pressure_emvlight(f.g, f.center, snap) == doctest::Approx(0.0));
    CHECK(presslight_intersection_pressure(f.g, f.center, snap) == doctest::Approx(0.0));
    for (int p = 0; p < 8; ++p)
        CHECK(phase_pressure(f.g, f.center, p, snap) == doctest::Approx(0.0));
}

TEST_CASE("phase pressure equals brute-force sum over permitted movements") {
    Fixture f;
    for (int p = 0; p < 8; ++p) {
        double expect = 0.0;
        for (const Movement& m : f.g.movements_of_phase(f.center, p))
            expect += f.snap.density(f.g, m.in_lane) - f.snap.density(f.g, m.out_lane);
        CHECK(phase_pressure(f.g, f.center, p, f.snap) == doctest::Approx(expect));
    }
}

TEST_CASE("homogeneity: scaling all counts scales every pressure") {
    Fixture f;
    double c = 0.4;
    PressureSnapshot scaled;
    scaled.count.reserve(f.snap.count.size());
    for (double v : f.snap.count) scaled.count.push_back(c * v);
    CHECK(intersection_pressure_emvlight(f.g, f.center, scaled) ==
          doctest::Approx(c * intersection_pressure_emvlight(f.g, f.center, f.snap)));
    CHECK(lane_pressure(f.g, f.center, f.lane2, scaled) ==
          doctest::Approx(c * lane_pressure(f.g, f.center, f.lane2, f.snap)));
}

TEST_CASE("intersection pressure equals brute force on random snapshots") {
    TrafficNetwork g = generate_grid(3, 3, 40.0, 2, 0.0);
    Rng rng(1234);
    for (int trial = 0; trial < 20; ++trial) {
        PressureSnapshot snap;
        for (const Lane& l : g.lanes)
            snap.count.push_back(static_cast<double>(rng.next_below(
                static_cast<std::uint64_t>(l.x_max) + 1)));
        for (int node = 0; node < 9; ++node) {
            auto in_lanes = g.incoming_lane_ids(node);
            double sum = 0.0;
            for (int l : in_lanes) {
                double w = snap.density(g, l);
                for (int lid : g.out_links_of_in_lane(node, l)) {
                    const Link& ol = g.link(lid);
                    for (int i = 0; i < ol.lane_count; ++i)
                        w -= snap.density(g, ol.first_lane + i) / ol.lane_count;
                }
                sum += std::abs(w);
            }
            CHECK(intersection_pressure_emvlight(g, node, snap) ==
                  doctest::Approx(sum / in_lanes.size()));
        }
    }
}
