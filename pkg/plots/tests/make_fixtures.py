"""Regenerate the committed test fixtures (tables and golden images).

Run from the plots/ directory with both packages installed:

    python tests/make_fixtures.py

The tables are tiny engine runs; the goldens are re-rendered from the specs.
Goldens are environment-pinned (matplotlib + freetype versions), so refresh
them together with any environment bump.
"""

import os
import sys

from subohmic.cli import RunConfig, compare_initial_conditions, run

HERE = os.path.dirname(os.path.abspath(__file__))
DATA = os.path.join(HERE, "data")
GOLDEN = os.path.join(HERE, "golden")

BASE = RunConfig(
    s=0.25,
    delta=0.4,
    n_modes=128,
    t_max=10.0,
    dt=0.01,
    record_every=20,
    compute_sigma=True,
)


def tables():
    os.makedirs(DATA, exist_ok=True)
    from dataclasses import replace

    for alpha in (0.05, 0.2):
        run(replace(BASE, alpha=alpha), os.path.join(DATA, f"alpha_{alpha:g}.csv"), force=True)
    compare_initial_conditions(
        replace(BASE, alpha=0.05, compute_sigma=False),
        replace(BASE, alpha=0.05, compute_sigma=False, initial_condition="polarized"),
        os.path.join(DATA, "compare_0.05.csv"),
        force=True,
    )


def goldens():
    from subohmic_plots import FigureSpec, render_family

    os.makedirs(GOLDEN, exist_ok=True)
    for name in ("fig_family", "fig_two_panel", "fig_compare"):
        spec = FigureSpec.from_file(os.path.join(DATA, f"{name}.json"))
        render_family(spec, os.path.join(GOLDEN, f"{name}.png"), force=True)


if __name__ == "__main__":
    tables()
    goldens()
    print("fixtures regenerated", file=sys.stderr)
