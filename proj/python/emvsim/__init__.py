"""Traffic-simulation and signal-control laboratory."""

try:
    from ._emvsim import (
        __version__,
        adjusted_times,
        config_grid5x5,
        generate_grid,
        render_learning_plot,
        run_matrix,
        run_scenario,
        train,
    )
except ImportError:  # build-tree layout: extension module next to the package
    from _emvsim import (
        __version__,
        adjusted_times,
        config_grid5x5,
        generate_grid,
        render_learning_plot,
        run_matrix,
        run_scenario,
        train,
    )

__all__ = [
    "__version__",
    "adjusted_times",
    "config_grid5x5",
    "generate_grid",
    "render_learning_plot",
    "run_matrix",
    "run_scenario",
    "train",
]
