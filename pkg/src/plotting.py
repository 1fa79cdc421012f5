"""
MitLindblad Plots
Optional SVG line plots next to the scenario CSV files
"""

from pathlib import Path
from typing import List, Union

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .scenarios import FloquetResult, HeisenbergResult, QuenchResult


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", bbox_inches="tight")
    plt.close(fig)
    return path


def _heisenberg(result: HeisenbergResult, out_dir: Path) -> List[Path]:
    fig, ax = plt.subplots()
    ax.plot(result.times, result.ideal, "k-", label="ideal")
    ax.plot(result.times, result.noisy, "r--", label="noisy")
    ax.errorbar(result.times, result.mitigated, yerr=result.stderr, fmt="b.", label="mitigated")
    ax.plot(result.times, result.partial, "g:", label="system noise only")
    ax.set_xlabel("t")
    ax.set_ylabel("total magnetization")
    ax.legend()
    return [_save(fig, out_dir / "heisenberg.svg")]


def _quench(result: QuenchResult, out_dir: Path) -> List[Path]:
    fig, ax = plt.subplots()
    ax.plot(result.times, result.r_ideal, "k-", label="ideal")
    ax.plot(result.times, result.r_noisy, "r--", label="noisy")
    # NaN entries are the masked echo points
    ax.errorbar(result.times, result.r_mitigated, yerr=np.nan_to_num(result.stderr), fmt="b.",
                label="mitigated")
    ax.set_xlabel("t")
    ax.set_ylabel("rate function r(t)")
    ax.legend()
    return [_save(fig, out_dir / "quench.svg")]


def _floquet(result: FloquetResult, out_dir: Path) -> List[Path]:
    fig, ax = plt.subplots()
    ax.plot(result.cycles, result.ideal, "k-o", label="ideal")
    ax.plot(result.cycles, result.noisy, "r--", label="noisy")
    ax.errorbar(result.cycles, result.mitigated, yerr=result.stderr, fmt="b.", label="mitigated")
    ax.set_xlabel("cycle")
    ax.set_ylabel("total magnetization")
    ax.legend()
    series = _save(fig, out_dir / "floquet_series.svg")

    fig, ax = plt.subplots()
    ax.plot(result.frequencies, result.spectrum_ideal, "k-", label="ideal")
    ax.plot(result.frequencies, result.spectrum_noisy, "r--", label="noisy")
    ax.plot(result.frequencies, result.spectrum_mitigated, "b:", label="mitigated")
    ax.set_xlabel("f [1/T]")
    ax.set_ylabel("normalized power")
    ax.legend()
    return [series, _save(fig, out_dir / "floquet_spectrum.svg")]


def plot_result(result, out_dir: Union[str, Path]) -> List[Path]:
    """
    SVG plots for a scenario result.

    Returns:
        Paths written
    """
    out_dir = Path(out_dir)
    if isinstance(result, HeisenbergResult):
        return _heisenberg(result, out_dir)
    if isinstance(result, QuenchResult):
        return _quench(result, out_dir)
    if isinstance(result, FloquetResult):
        return _floquet(result, out_dir)
    raise TypeError(f"No plot for {type(result).__name__}")
