"""Spike, latency, and energy accounting."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class EnergyParams:
    """Per-spike (dynamic) and per-time-step (static) energy coefficients,
    normalized so that e_dyn + e_sta = 1 for the built-in presets."""

    e_dyn: float
    e_sta: float


TRUENORTH = EnergyParams(e_dyn=0.4, e_sta=0.6)
SPINNAKER = EnergyParams(e_dyn=0.64, e_sta=0.36)


def estimate_energy(spikes: int, latency: int, p: EnergyParams) -> float:
    """spikes * e_dyn + latency * e_sta, in normalized units."""
    if spikes < 0 or latency < 0:
        raise ValueError("spikes and latency must be nonnegative")
    return spikes * p.e_dyn + latency * p.e_sta


@dataclass
class Report:
    n_runs: int
    accuracy: float
    total_spikes: int
    mean_spikes: float
    mean_latency: float
    energy_tn: float
    energy_sn: float
    normalized_energy_tn: float | None = None
    normalized_energy_sn: float | None = None

    def as_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


def summarize(runs, correct=None, baseline: Report | None = None) -> Report:
    """Aggregate a list of RunStats into a report.

    ``correct`` is an optional boolean sequence aligned with runs;
    without it accuracy is reported as NaN.  Mean energies are computed
    from mean spikes and mean latency (the energy model is linear, so
    this equals the mean per-run energy).  If a baseline report is given,
    normalized energies are mean energy divided by the baseline's.
    """
    if not runs:
        raise ValueError("empty run list")
    n = len(runs)
    total_spikes = sum(r.total_spikes for r in runs)
    mean_spikes = total_spikes / n
    mean_latency = sum(r.latency for r in runs) / n
    energy_tn = estimate_energy(mean_spikes, mean_latency, TRUENORTH)
    energy_sn = estimate_energy(mean_spikes, mean_latency, SPINNAKER)
    accuracy = float("nan") if correct is None else sum(map(bool, correct)) / n
    report = Report(
        n_runs=n,
        accuracy=accuracy,
        total_spikes=total_spikes,
        mean_spikes=mean_spikes,
        mean_latency=mean_latency,
        energy_tn=energy_tn,
        energy_sn=energy_sn,
    )
    if baseline is not None:
        report.normalized_energy_tn = energy_tn / baseline.energy_tn
        report.normalized_energy_sn = energy_sn / baseline.energy_sn
    return report


def format_report(report: Report, title: str = "run") -> str:
    lines = [
        f"== {title} ==",
        f"inferences        {report.n_runs}",
        f"accuracy          {report.accuracy:.4f}",
        f"mean spikes       {report.mean_spikes:.1f}",
        f"mean latency      {report.mean_latency:.1f}",
        f"energy TrueNorth  {report.energy_tn:.2f}",
        f"energy SpiNNaker  {report.energy_sn:.2f}",
    ]
    if report.normalized_energy_tn is not None:
        lines.append(f"norm energy TN    {report.normalized_energy_tn:.3f}")
        lines.append(f"norm energy SN    {report.normalized_energy_sn:.3f}")
    return "\n".join(lines)
