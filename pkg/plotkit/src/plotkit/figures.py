"""Two-panel convergence figure from benchmark records.

Input is the records CSV written by the benchmark harness (header
``epsilon,seed,horizon,total_samples,final_error,spectral_radius,
stabilizing,wall_time_ms``). The left panel shows per-accuracy final
errors against the y = epsilon diagonal; the right panel shows median
total samples per accuracy on log-log axes with a fitted slope and a
reference power law.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

REQUIRED_COLUMNS = ("epsilon", "total_samples", "final_error")
PANELS = ("errors", "samples", "both")


class SchemaError(ValueError):
    """The input CSV does not conform to the records schema."""


@dataclass(frozen=True)
class FigureSpec:
    input_csv: Path
    output_image: Path
    panels: str = "both"
    reference_slope: float = -2.0

    def __post_init__(self):
        object.__setattr__(self, "input_csv", Path(self.input_csv))
        object.__setattr__(self, "output_image", Path(self.output_image))
        if self.panels not in PANELS:
            raise ValueError(f"panels must be one of {PANELS}, got {self.panels!r}")


def _load_records(path: Path) -> pd.DataFrame:
    if not Path(path).exists():
        raise SchemaError(f"input CSV not found: {path}")
    frame = pd.read_csv(path)
    missing = [col for col in REQUIRED_COLUMNS if col not in frame.columns]
    if missing:
        raise SchemaError(f"records CSV is missing columns: {', '.join(missing)}")
    if frame.empty:
        raise SchemaError(f"records CSV has no rows: {path}")
    return frame


def extract_panel_data(input_csv) -> dict:
    """Pure extraction of everything the figure plots.

    Returns scatter points for the error panel, per-accuracy sample
    medians, and the fitted log-log slope (None with fewer than two
    distinct accuracies).
    """
    frame = _load_records(Path(input_csv))
    frame = frame.sort_values("epsilon", ascending=False)
    epsilons = np.sort(frame["epsilon"].unique())[::-1]
    medians = (
        frame.groupby("epsilon")["total_samples"].median().reindex(epsilons).to_numpy(float)
    )
    slope = None
    if len(epsilons) >= 2 and np.all(medians > 0):
        coeffs = np.polyfit(np.log(epsilons), np.log(medians), 1)
        slope = float(coeffs[0])
    return {
        "epsilons": epsilons,
        "error_points": (
            frame["epsilon"].to_numpy(float),
            frame["final_error"].to_numpy(float),
        ),
        "sample_medians": medians,
        "fitted_slope": slope,
    }


def _draw_errors(ax, data):
    eps, errs = data["error_points"]
    ax.scatter(eps, errs, s=18, color="tab:blue", alpha=0.7, label="final error")
    grid = np.sort(data["epsilons"])
    ax.plot(grid, grid, "k--", linewidth=1.0, label="y = accuracy target")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("accuracy target")
    ax.set_ylabel("final policy error")
    ax.set_title("Final errors vs target")
    ax.legend(fontsize=8)


def _draw_samples(ax, data, reference_slope):
    eps = data["epsilons"]
    medians = data["sample_medians"]
    ax.plot(eps, medians, "o-", color="tab:orange", label="median samples")
    slope = data["fitted_slope"]
    if slope is not None:
        ax.text(
            0.05,
            0.08,
            f"fitted slope = {slope:.2f}",
            transform=ax.transAxes,
            fontsize=9,
        )
        anchor = medians[0] * (eps / eps[0]) ** reference_slope
        ax.plot(eps, anchor, ":", color="gray",
                label=f"reference slope {reference_slope:g}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("accuracy target")
    ax.set_ylabel("oracle samples")
    ax.set_title("Sample complexity")
    ax.legend(fontsize=8)


def render_convergence_figure(spec: FigureSpec) -> Path:
    """Render the requested panels to a vector-format image; returns the path."""
    data = extract_panel_data(spec.input_csv)
    n_panels = 2 if spec.panels == "both" else 1
    fig, axes = plt.subplots(1, n_panels, figsize=(5.2 * n_panels, 4.0))
    axes = np.atleast_1d(axes)
    idx = 0
    if spec.panels in ("errors", "both"):
        _draw_errors(axes[idx], data)
        idx += 1
    if spec.panels in ("samples", "both"):
        _draw_samples(axes[idx], data, spec.reference_slope)
    fig.tight_layout()
    out = Path(spec.output_image)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out)
    plt.close(fig)
    return out
