#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "emvsim/harness.hpp"

using namespace emv;
using namespace emv::harness;

namespace {

Scenario tiny() {
    Scenario s;
    s.name = "tiny";
    s.grid = GridSpec{2, 2, 200.0, 1, 0.2};
    s.flows = {{{0, 1}, {2, 3}, 300.0, 0.0, 60.0}};
    s.emv = dyn::EmvSpec{0, 3, 10.0};
    s.horizon_s = 120.0;
    return s;
}

} // namespace

TEST_CASE("scenario json round trip preserves every field") {
    Scenario s = tiny();
    s.seed = 7;
    s.repetitions = 3;
    std::string text = serialize_scenario(s);
    Scenario back = parse_scenario(text);
    CHECK(back.name == "tiny");
    REQUIRE(back.grid.has_value());
    CHECK(back.grid->rows == 2);
    CHECK(back.grid->link_length_m == doctest::Approx(200.0));
    REQUIRE(back.flows.size() == 1);
    CHECK(back.flows[0].origins == std::vector<int>{0, 1});
    CHECK(back.flows[0].rate_veh_per_lane_hr == doctest::Approx(300.0));
    REQUIRE(back.emv.has_value());
    CHECK(back.emv->destination == 3);
    CHECK(back.emv->dispatch_s == doctest::Approx(10.0));
    CHECK(back.seed == 7);
    CHECK(back.repetitions == 3);
    CHECK(serialize_scenario(back) == text);
}

TEST_CASE("scenario validation rejects inconsistent configs") {
    Scenario s = tiny();
    s.emv->dispatch_s = 120.0; // at the horizon
    CHECK_THROWS_AS(s.validate(), HarnessError);

    Scenario both = tiny();
    both.network_path = "net.json";
    CHECK_THROWS_AS(both.validate(), HarnessError);

    Scenario neither = tiny();
    neither.grid.reset();
    CHECK_THROWS_AS(neither.validate(), HarnessError);

    Scenario reps = tiny();
    reps.repetitions = 0;
    CHECK_THROWS_AS(reps.validate(), HarnessError);

    CHECK_THROWS_AS(parse_scenario("{not json"), HarnessError);
}

TEST_CASE("5x5 config 1: 200/240 rates, north+south feeding east+west") {
    Scenario s = config_grid5x5(1);
    REQUIRE(s.flows.size() == 3);
    CHECK(s.flows[0].rate_veh_per_lane_hr == doctest::Approx(200.0));
    CHECK(s.flows[1].rate_veh_per_lane_hr == doctest::Approx(240.0));
    CHECK(s.flows[2].rate_veh_per_lane_hr == doctest::Approx(200.0));
    CHECK(s.flows[1].start_s == doctest::Approx(400.0));
    CHECK(s.flows[1].end_s == doctest::Approx(800.0));
    CHECK(s.horizon_s == doctest::Approx(1200.0));
    REQUIRE(s.emv.has_value());
    CHECK(s.emv->dispatch_s == doctest::Approx(600.0));

    std::vector<int> ns = {0, 1, 2, 3, 4, 20, 21, 22, 23, 24};
    std::vector<int> ew = {0, 5, 10, 15, 20, 4, 9, 14, 19, 24};
    CHECK(s.flows[0].origins == ns);
    CHECK(s.flows[0].destinations == ew);
}

TEST_CASE("5x5 config 2 swaps in the 160/320 rates") {
    Scenario s = config_grid5x5(2);
    CHECK(s.flows[0].rate_veh_per_lane_hr == doctest::Approx(160.0));
    CHECK(s.flows[1].rate_veh_per_lane_hr == doctest::Approx(320.0));
    CHECK(s.flows[0].origins == config_grid5x5(1).flows[0].origins);
}

TEST_CASE("5x5 configs 3 and 4 draw a reproducible random boundary OD") {
    Scenario a = config_grid5x5(3, 11);
    Scenario b = config_grid5x5(3, 11);
    CHECK(a.flows[0].origins == b.flows[0].origins);
    CHECK(a.flows[0].destinations == b.flows[0].destinations);
    CHECK(config_grid5x5(3, 12).flows[0].origins != a.flows[0].origins);

    // OD covers the 16 boundary nodes, split in half, no interior nodes
    std::set<int> all(a.flows[0].origins.begin(), a.flows[0].origins.end());
    all.insert(a.flows[0].destinations.begin(), a.flows[0].destinations.end());
    CHECK(all.size() == 16);
    CHECK(a.flows[0].origins.size() == 8);
    std::vector<int> inner = {6, 7, 8, 11, 12, 13, 16, 17, 18};
    for (int n : inner) CHECK(all.count(n) == 0);

    CHECK(config_grid5x5(4).flows[1].rate_veh_per_lane_hr == doctest::Approx(320.0));
    CHECK_THROWS_AS(config_grid5x5(0), HarnessError);
    CHECK_THROWS_AS(config_grid5x5(5), HarnessError);
}

TEST_CASE("a 1x1x1 matrix yields a single row with the episode metrics") {
    MatrixSpec spec;
    spec.scenarios = {tiny()};
    spec.controllers = {"fixed"};
    spec.routers = {"static"};
    spec.repetitions = 1;
    ResultTable t = run_matrix(spec);
    REQUIRE(t.rows.size() == 1);
    CHECK(t.rows[0].scenario == "tiny");
    CHECK(t.rows[0].controller == "fixed");
    CHECK(t.rows[0].reps == 1);
    CHECK(t.rows[0].t_emv_mean_s.has_value());
    CHECK(t.rows[0].t_emv_std_s.value() == 0.0); // single rep: no spread
    CHECK(t.rows[0].t_avg_mean_s > 0.0);
    CHECK(t.rows[0].note.empty());
}

TEST_CASE("the no-EMV row reports the average travel time only") {
    MatrixSpec spec;
    spec.scenarios = {tiny()};
    spec.controllers = {"fixed"};
    spec.routers = {"none"};
    spec.repetitions = 2;
    ResultTable t = run_matrix(spec);
    REQUIRE(t.rows.size() == 1);
    CHECK_FALSE(t.rows[0].t_emv_mean_s.has_value());
    CHECK(t.rows[0].t_avg_mean_s > 0.0);
    CHECK(t.to_text().find("N/A") != std::string::npos);
    // the CSV leaves the EMV columns empty
    std::string csv = t.to_csv();
    CHECK(csv.find("tiny,fixed,none,2,,,") != std::string::npos);
}

TEST_CASE("matrix reruns are byte identical, also across worker counts") {
    MatrixSpec spec;
    spec.scenarios = {tiny()};
    spec.controllers = {"fixed", "maxpressure"};
    spec.routers = {"static", "dynamic"};
    spec.repetitions = 2;
    spec.seed = 5;
    std::string first = run_matrix(spec).to_csv();
    CHECK(run_matrix(spec).to_csv() == first);

    setenv("EMVSIM_WORKERS", "3", 1);
    std::string parallel = run_matrix(spec).to_csv();
    unsetenv("EMVSIM_WORKERS");
    CHECK(parallel == first);

    // four cells, distinct seeds: repetitions see different injections, so
    // at least one metric differs between controller rows
    ResultTable t = run_matrix(spec);
    REQUIRE(t.rows.size() == 4);
}

TEST_CASE("sample standard deviation uses the n-1 denominator") {
    CHECK(sample_std({2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0}, 5.0) ==
          doctest::Approx(std::sqrt(32.0 / 7.0)));
    CHECK(sample_std({3.0}, 3.0) == 0.0);
    CHECK(sample_std({}, 0.0) == 0.0);
}

TEST_CASE("unknown controller or router names annotate the row") {
    net::TrafficNetwork net = net::generate_grid(2, 2, 200.0, 1, 0.0);
    CHECK_THROWS_AS(make_setup(net, "nope", "static", 0, "", 0.5, 100.0), HarnessError);
    CHECK_THROWS_AS(make_setup(net, "fixed", "nope", 0, "", 0.5, 100.0), HarnessError);
    CHECK_THROWS_AS(make_setup(net, "emvlight", "static", 0, "", 0.5, 100.0), HarnessError);
    CHECK_THROWS_AS(make_setup(net, "greenwave", "none", 0, "", 0.5, 100.0), HarnessError);

    MatrixSpec spec;
    spec.scenarios = {tiny()};
    spec.controllers = {"emvlight"}; // incompatible with the static router
    spec.routers = {"static"};
    ResultTable t = run_matrix(spec);
    REQUIRE(t.rows.size() == 1);
    CHECK(t.rows[0].reps == 0);
    CHECK_FALSE(t.rows[0].note.empty());
}

TEST_CASE("matrix json declares configs, components, and seeds") {
    MatrixSpec m = parse_matrix(R"({
        "configs": [1, 2],
        "controllers": ["fixed", "maxpressure"],
        "routers": ["static"],
        "repetitions": 5,
        "seed": 9,
        "beta": 0.25
    })");
    REQUIRE(m.scenarios.size() == 2);
    CHECK(m.scenarios[0].name == "grid5x5-config1");
    CHECK(m.controllers.size() == 2);
    CHECK(m.repetitions == 5);
    CHECK(m.seed == 9);
    CHECK(m.beta == doctest::Approx(0.25));
    CHECK_THROWS_AS(parse_matrix(R"({"controllers": ["fixed"]})"), HarnessError);
}

TEST_CASE("learning plot renders axes, polylines, and a legend") {
    std::vector<Curve> one = {{"reward", {1.5, 1.5, 1.5}}};
    std::string svg = render_learning_plot(one);
    CHECK(svg.find("<svg") == 0);
    CHECK(svg.find("<polyline") != std::string::npos);
    CHECK(svg.find(">reward<") != std::string::npos);
    // constant data draws a horizontal line: one distinct y among the points
    size_t p = svg.find("points=\"");
    REQUIRE(p != std::string::npos);
    std::string pts = svg.substr(p + 8, svg.find('"', p + 8) - p - 8);
    std::set<std::string> ys;
    size_t pos = 0;
    while (pos < pts.size()) {
        size_t comma = pts.find(',', pos);
        size_t space = pts.find(' ', comma);
        if (space == std::string::npos) space = pts.size();
        ys.insert(pts.substr(comma + 1, space - comma - 1));
        pos = space + 1;
    }
    CHECK(ys.size() == 1);

    std::vector<Curve> two = {{"a", {0.0, 1.0}}, {"b", {1.0, 0.0}}};
    std::string both = render_learning_plot(two);
    CHECK(both.find(">a<") != std::string::npos);
    CHECK(both.find(">b<") != std::string::npos);

    CHECK(render_learning_plot(two) == both); // deterministic bytes
    CHECK_THROWS_AS(render_learning_plot({}), HarnessError);
    CHECK_THROWS_AS(render_learning_plot({{"empty", {}}}), HarnessError);
}

TEST_CASE("curve csv ingestion skips blank cells and empty columns") {
    namespace fs = std::filesystem;
    fs::path p = fs::temp_directory_path() / "emv_curve.csv";
    {
        std::ofstream out(p);
        out << "episode,t_emv_s,t_avg_s\n0,,10\n1,42.5,9\n2,41,8\n";
    }
    std::vector<Curve> curves = curves_from_csv(p.string());
    REQUIRE(curves.size() == 2);
    CHECK(curves[0].name == "t_emv_s");
    CHECK(curves[0].values == std::vector<double>{42.5, 41.0});
    CHECK(curves[1].values == std::vector<double>{10.0, 9.0, 8.0});
    fs::remove(p);
}
