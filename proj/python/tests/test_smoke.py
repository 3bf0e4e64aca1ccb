import json

import pytest

import emvsim


def test_generate_grid_shape():
    net = json.loads(emvsim.generate_grid(3, 3, 200.0, 1, 0.2))
    assert len(net["nodes"]) == 9
    assert len(net["links"]) == 24  # bi-directional edges of a 3x3 grid


def test_config_scenarios():
    sc = json.loads(emvsim.config_grid5x5(1))
    assert sc["flows"][1]["rate_veh_per_lane_hr"] == 240.0
    assert sc["emv"]["dispatch_s"] == 600.0
    with pytest.raises(Exception):
        emvsim.config_grid5x5(7)


SCENARIO = {
    "name": "smoke",
    "grid": {"rows": 3, "cols": 3, "link_length_m": 200.0, "lanes": 1, "ec_ratio": 0.2},
    "flows": [
        {
            "origins": [0, 2],
            "destinations": [6, 8],
            "rate_veh_per_lane_hr": 200.0,
            "start_s": 0.0,
            "end_s": 100.0,
        }
    ],
    "emv": {"origin": 0, "destination": 8, "dispatch_s": 30.0},
    "sim": {"horizon_s": 200.0, "seed": 3, "repetitions": 2},
}


def test_run_scenario_metrics_and_determinism():
    runs = emvsim.run_scenario(json.dumps(SCENARIO), "fixed", "static")
    assert len(runs) == 2
    for m in runs:
        assert m["t_avg_s"] > 0.0
        assert m["n_completed"] > 0
        assert m["t_emv_s"] is None or m["t_emv_s"] > 0.0
    again = emvsim.run_scenario(json.dumps(SCENARIO), "fixed", "static")
    assert runs == again


def test_run_matrix_csv():
    matrix = {
        "scenarios": [SCENARIO],
        "controllers": ["fixed", "greenwave"],
        "routers": ["static"],
        "repetitions": 1,
        "seed": 5,
    }
    csv = emvsim.run_matrix(json.dumps(matrix))
    lines = csv.strip().splitlines()
    assert lines[0].startswith("scenario,controller,router")
    assert len(lines) == 3
    assert csv == emvsim.run_matrix(json.dumps(matrix))


def test_train_returns_curve():
    config = {
        "scenario": {
            "name": "t",
            "grid": {"rows": 2, "cols": 2, "link_length_m": 200.0, "lanes": 1, "ec_ratio": 0.2},
            "flows": [
                {
                    "origins": [0],
                    "destinations": [3],
                    "rate_veh_per_lane_hr": 150.0,
                    "start_s": 0.0,
                    "end_s": 60.0,
                }
            ],
            "emv": {"origin": 0, "destination": 3, "dispatch_s": 20.0},
            "sim": {"horizon_s": 100.0},
        },
        "train": {"episodes": 2, "T": 100.0},
    }
    curve = emvsim.train(json.dumps(config))
    assert len(curve) == 2
    assert curve[0]["episode"] == 0
    assert "mean_reward" in curve[0]


def test_render_plot_is_svg():
    svg = emvsim.render_learning_plot([("reward", [0.0, 1.0, 0.5])])
    assert svg.startswith("<svg")
    assert "polyline" in svg
