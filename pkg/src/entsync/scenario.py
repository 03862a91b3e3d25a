"""Scenario configs and end-to-end runners for timing and tomography studies.

A timing scenario simulates two pair sources, the (possibly rescheduled)
channel, four detectors and two clocks, then runs the block-wise offset
analysis. A tomography scenario forward-models the 36-setting measurement for
a chosen attack model and pushes counting noise through the reconstruction.
"""
from __future__ import annotations

import dataclasses
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .channel import ChannelConfig, Direction, predicted_offset_error_ps
from .correlation import (
    SyncAnalysisParams,
    SyncEstimate,
    analyze_block,
    complete_blocks,
    write_estimates_json,
    write_histogram_csv,
)
from .errors import ConfigError
from .polarization import (
    FaradayParams,
    TwoQubitState,
    apply_attack_full,
    apply_attack_naive_geometric,
    bell_psi_minus,
)
from .timetags import (
    CH_ALICE_LOCAL,
    CH_ALICE_REMOTE,
    CH_BOB_LOCAL,
    CH_BOB_REMOTE,
    PS_PER_S,
    ClockModel,
    DetectorModel,
    PairSourceModel,
    TimeTagStream,
    apply_clock,
    apply_detector,
    generate_pairs,
    merge_streams,
    read_tags,
    write_tags_binary,
    write_tags_csv,
)
from .tomography import (
    DensityMatrix,
    density_to_json,
    depolarize,
    expected_counts,
    fidelity,
    mle_reconstruct,
    monte_carlo_fidelity,
    sample_counts,
    write_counts_csv,
)

DETECTOR_KEYS = ("alice_local", "alice_remote", "bob_local", "bob_remote")
_DETECTOR_CHANNELS = {
    "alice_local": CH_ALICE_LOCAL,
    "alice_remote": CH_ALICE_REMOTE,
    "bob_local": CH_BOB_LOCAL,
    "bob_remote": CH_BOB_REMOTE,
}
_DETECTOR_SEEDS = {
    "alice_local": rngmod.DET_ALICE_LOCAL,
    "alice_remote": rngmod.DET_ALICE_REMOTE,
    "bob_local": rngmod.DET_BOB_LOCAL,
    "bob_remote": rngmod.DET_BOB_REMOTE,
}


@dataclass(frozen=True)
class ScheduleEntry:
    time_s: float
    channel: ChannelConfig


@dataclass(frozen=True)
class TimingScenario:
    duration_s: float
    seed: int
    alice_source: PairSourceModel
    bob_source: PairSourceModel
    alice_clock: ClockModel = ClockModel()
    bob_clock: ClockModel = ClockModel()
    channel: ChannelConfig = ChannelConfig()
    schedule: tuple[ScheduleEntry, ...] = ()
    detectors: dict = field(default_factory=dict)
    block_s: float = 40.0
    analysis: SyncAnalysisParams = SyncAnalysisParams()

    def validate(self):
        if not math.isfinite(self.duration_s) or self.duration_s <= 0:
            raise ConfigError("duration_s must be finite and > 0")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        if self.block_s <= 0:
            raise ConfigError("block_s must be > 0")
        self.alice_source.validate("alice_source")
        self.bob_source.validate("bob_source")
        self.alice_clock.validate("alice_clock")
        self.bob_clock.validate("bob_clock")
        self.channel.validate("channel")
        self.analysis.validate("analysis")
        previous = 0.0
        for i, entry in enumerate(self.schedule):
            if not 0.0 < entry.time_s < self.duration_s:
                raise ConfigError(f"schedule[{i}].time_s must lie inside (0, duration_s)")
            if entry.time_s <= previous:
                raise ConfigError(f"schedule[{i}].time_s must be strictly increasing")
            entry.channel.validate(f"schedule[{i}].channel")
            previous = entry.time_s
        for key, det in self.detectors.items():
            if key not in DETECTOR_KEYS:
                raise ConfigError(f"detectors.{key} is not one of {DETECTOR_KEYS}")
            det.validate(f"detectors.{key}")

    def detector(self, key: str) -> DetectorModel:
        return self.detectors.get(key, DetectorModel())

    def n_blocks(self) -> int:
        """Complete analysis blocks inside the configured duration."""
        return int(math.floor(self.duration_s / self.block_s + 1e-9))

    def channel_segments(self) -> list[tuple[float, float, ChannelConfig]]:
        """(start_s, end_s, config) pieces covering [0, duration_s)."""
        starts = [0.0] + [e.time_s for e in self.schedule]
        configs = [self.channel] + [e.channel for e in self.schedule]
        ends = starts[1:] + [self.duration_s]
        return list(zip(starts, ends, configs))


# --- config (de)serialization ----------------------------------------------


def _get(d: dict, key: str, path: str):
    if key not in d:
        raise ConfigError(f"missing field {path}{key}")
    return d[key]


def _num(d: dict, key: str, path: str, default=None) -> float:
    if key not in d:
        if default is None:
            raise ConfigError(f"missing field {path}{key}")
        return default
    value = d[key]
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"field {path}{key} must be a number")
    return float(value)


def _int(d: dict, key: str, path: str, default=None) -> int:
    if key not in d:
        if default is None:
            raise ConfigError(f"missing field {path}{key}")
        return default
    value = d[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"field {path}{key} must be an integer")
    if isinstance(value, float) and not value.is_integer():
        raise ConfigError(f"field {path}{key} must be an integer")
    return int(value)


def _source_from_dict(d: dict, path: str) -> PairSourceModel:
    return PairSourceModel(
        pair_rate_hz=_num(d, "pair_rate_hz", path),
        emission_jitter_sigma_ps=_num(d, "emission_jitter_sigma_ps", path, 0.0),
        heralding_efficiency=_num(d, "heralding_efficiency", path, 1.0),
    )


def _clock_from_dict(d: dict, path: str) -> ClockModel:
    return ClockModel(
        offset_ps=_int(d, "offset_ps", path, 0),
        drift_ppb=_num(d, "drift_ppb", path, 0.0),
    )


def _channel_from_dict(d: dict, path: str) -> ChannelConfig:
    return ChannelConfig(
        base_length_m=_num(d, "base_length_m", path, 0.0),
        eve_length_ab_m=_num(d, "eve_length_ab_m", path, 0.0),
        eve_length_ba_m=_num(d, "eve_length_ba_m", path, 0.0),
        group_index=_num(d, "group_index", path, ChannelConfig().group_index),
    )


def _detector_from_dict(d: dict, path: str) -> DetectorModel:
    return DetectorModel(
        jitter_sigma_ps=_num(d, "jitter_sigma_ps", path, 0.0),
        efficiency=_num(d, "efficiency", path, 1.0),
        dark_rate_hz=_num(d, "dark_rate_hz", path, 0.0),
        dead_time_ps=_int(d, "dead_time_ps", path, 0),
    )


def _analysis_from_dict(d: dict, path: str) -> SyncAnalysisParams:
    defaults = SyncAnalysisParams()
    return SyncAnalysisParams(
        tau_min_ps=_int(d, "tau_min_ps", path, defaults.tau_min_ps),
        tau_max_ps=_int(d, "tau_max_ps", path, defaults.tau_max_ps),
        bin_width_ps=_int(d, "bin_width_ps", path, defaults.bin_width_ps),
        min_separation_ps=_int(d, "min_separation_ps", path, defaults.min_separation_ps),
        threshold_sigma=_num(d, "threshold_sigma", path, defaults.threshold_sigma),
        centroid_halfwidth_bins=_int(
            d, "centroid_halfwidth_bins", path, defaults.centroid_halfwidth_bins
        ),
    )


def timing_scenario_from_dict(d: dict) -> TimingScenario:
    if not isinstance(d, dict):
        raise ConfigError("scenario config must be a JSON object")
    detectors = {}
    for key, sub in d.get("detectors", {}).items():
        if key not in DETECTOR_KEYS:
            raise ConfigError(f"detectors.{key} is not one of {DETECTOR_KEYS}")
        detectors[key] = _detector_from_dict(sub, f"detectors.{key}.")
    schedule = []
    for i, entry in enumerate(d.get("schedule", [])):
        schedule.append(
            ScheduleEntry(
                time_s=_num(entry, "time_s", f"schedule[{i}]."),
                channel=_channel_from_dict(
                    _get(entry, "channel", f"schedule[{i}]."), f"schedule[{i}].channel."
                ),
            )
        )
    sc = TimingScenario(
        duration_s=_num(d, "duration_s", ""),
        seed=_int(d, "seed", ""),
        alice_source=_source_from_dict(_get(d, "alice_source", ""), "alice_source."),
        bob_source=_source_from_dict(_get(d, "bob_source", ""), "bob_source."),
        alice_clock=_clock_from_dict(d.get("alice_clock", {}), "alice_clock."),
        bob_clock=_clock_from_dict(d.get("bob_clock", {}), "bob_clock."),
        channel=_channel_from_dict(_get(d, "channel", ""), "channel."),
        schedule=tuple(schedule),
        detectors=detectors,
        block_s=_num(d, "block_s", "", 40.0),
        analysis=_analysis_from_dict(d.get("analysis", {}), "analysis."),
    )
    sc.validate()
    return sc


def timing_scenario_to_dict(sc: TimingScenario) -> dict:
    return {
        "duration_s": sc.duration_s,
        "seed": sc.seed,
        "alice_source": dataclasses.asdict(sc.alice_source),
        "bob_source": dataclasses.asdict(sc.bob_source),
        "alice_clock": dataclasses.asdict(sc.alice_clock),
        "bob_clock": dataclasses.asdict(sc.bob_clock),
        "channel": dataclasses.asdict(sc.channel),
        "schedule": [
            {"time_s": e.time_s, "channel": dataclasses.asdict(e.channel)} for e in sc.schedule
        ],
        "detectors": {k: dataclasses.asdict(v) for k, v in sorted(sc.detectors.items())},
        "block_s": sc.block_s,
        "analysis": dataclasses.asdict(sc.analysis),
    }


def load_timing_scenario(path) -> TimingScenario:
    with open(path, "r", encoding="utf-8") as fh:
        return timing_scenario_from_dict(json.load(fh))


# --- timing simulation ------------------------------------------------------


def _apply_channel_schedule(
    stream: TimeTagStream, direction: Direction, sc: TimingScenario
) -> TimeTagStream:
    """Delay each photon by the channel configuration active when it was emitted."""
    segments = sc.channel_segments()
    delays = np.array(
        [cfg.delay_rounded_ps(direction) for _, _, cfg in segments], dtype=np.int64
    )
    if len(segments) == 1:
        return TimeTagStream.from_timestamps(stream.timestamps_ps + delays[0])
    boundaries = np.array(
        [int(round(start * PS_PER_S)) for start, _, _ in segments[1:]], dtype=np.int64
    )
    idx = np.searchsorted(boundaries, stream.timestamps_ps, side="right")
    return TimeTagStream.from_timestamps(stream.timestamps_ps + delays[idx])


def simulate_timing(sc: TimingScenario) -> tuple[TimeTagStream, TimeTagStream]:
    """Produce the two parties' detection records for a timing scenario."""
    sc.validate()
    a_local, a_remote = generate_pairs(
        sc.alice_source, sc.duration_s, rngmod.child_seed(sc.seed, rngmod.ALICE_SOURCE)
    )
    b_local, b_remote = generate_pairs(
        sc.bob_source, sc.duration_s, rngmod.child_seed(sc.seed, rngmod.BOB_SOURCE)
    )
    arrivals = {
        "alice_local": a_local,
        "bob_remote": _apply_channel_schedule(a_remote, Direction.A_TO_B, sc),
        "bob_local": b_local,
        "alice_remote": _apply_channel_schedule(b_remote, Direction.B_TO_A, sc),
    }
    detected = {}
    for key, stream in arrivals.items():
        detected[key] = apply_detector(
            stream.with_channel(_DETECTOR_CHANNELS[key]),
            sc.detector(key),
            sc.duration_s,
            rngmod.child_seed(sc.seed, _DETECTOR_SEEDS[key]),
        )
    alice = apply_clock(
        merge_streams(detected["alice_local"], detected["alice_remote"]), sc.alice_clock
    )
    bob = apply_clock(
        merge_streams(detected["bob_local"], detected["bob_remote"]), sc.bob_clock
    )
    return alice, bob


def _analyze_stream_blocks(
    alice: TimeTagStream,
    bob: TimeTagStream,
    block_s: float,
    params: SyncAnalysisParams,
    n_blocks: int,
    out_dir: Path | None,
    threads: int = 1,
) -> list[SyncEstimate]:
    block_ps = int(round(block_s * PS_PER_S))

    def run(k: int):
        return analyze_block(alice, bob, k, block_ps, params)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(n_blocks)))
    else:
        results = [run(k) for k in range(n_blocks)]

    estimates = []
    for k, (hist, est) in enumerate(results):
        if out_dir is not None:
            write_histogram_csv(hist, out_dir / f"g2_block_{k:03d}.csv")
        if est is not None:
            estimates.append(est)
    return estimates


def _group_stats(values: list[float], sigmas: list[float]) -> tuple[float, float]:
    """Mean and a conservative standard error combining both error views."""
    n = len(values)
    mean = float(np.mean(values))
    propagated = math.sqrt(sum(s * s for s in sigmas)) / n
    empirical = float(np.std(values, ddof=1)) / math.sqrt(n) if n >= 2 else 0.0
    return mean, max(propagated, empirical)


def build_timing_summary(sc: TimingScenario, estimates: list[SyncEstimate]) -> dict:
    by_index = {e.block_index: e for e in estimates}
    segments_out = []
    for start_s, end_s, cfg in sc.channel_segments():
        members = [
            e
            for k, e in sorted(by_index.items())
            if k * sc.block_s >= start_s - 1e-9 and (k + 1) * sc.block_s <= end_s + 1e-9
        ]
        seg = {
            "start_s": start_s,
            "end_s": end_s,
            "channel": dataclasses.asdict(cfg),
            "predicted_offset_error_ps": predicted_offset_error_ps(cfg),
            "n_blocks_used": len(members),
        }
        if members:
            deltas = [e.delta_ps for e in members]
            sigmas = [e.delta_sigma_ps for e in members]
            rts = [e.round_trip_ps for e in members]
            rt_sigmas = [2.0 * e.delta_sigma_ps for e in members]
            seg["mean_delta_ps"], seg["sem_delta_ps"] = _group_stats(deltas, sigmas)
            seg["mean_round_trip_ps"], seg["sem_round_trip_ps"] = _group_stats(rts, rt_sigmas)
        segments_out.append(seg)

    initial = sc.channel
    final = sc.schedule[-1].channel if sc.schedule else sc.channel
    predicted_initial = predicted_offset_error_ps(initial)
    predicted_final = predicted_offset_error_ps(final)

    # Compare blocks before the first change of the predicted offset error
    # with blocks after the last such change.
    change_times = []
    prev = predicted_initial
    for entry in sc.schedule:
        cur = predicted_offset_error_ps(entry.channel)
        if cur != prev:
            change_times.append(entry.time_s)
        prev = cur
    measured_shift = None
    shift_sigma = None
    if change_times:
        first_change, last_change = change_times[0], change_times[-1]
        before = [
            e for k, e in sorted(by_index.items()) if (k + 1) * sc.block_s <= first_change + 1e-9
        ]
        after = [e for k, e in sorted(by_index.items()) if k * sc.block_s >= last_change - 1e-9]
        if before and after:
            mean_b, sem_b = _group_stats(
                [e.delta_ps for e in before], [e.delta_sigma_ps for e in before]
            )
            mean_a, sem_a = _group_stats(
                [e.delta_ps for e in after], [e.delta_sigma_ps for e in after]
            )
            measured_shift = mean_a - mean_b
            shift_sigma = math.hypot(sem_b, sem_a)

    return {
        "duration_s": sc.duration_s,
        "seed": sc.seed,
        "block_s": sc.block_s,
        "n_blocks": sc.n_blocks(),
        "n_estimates": len(estimates),
        "initial_channel": dataclasses.asdict(initial),
        "final_channel": dataclasses.asdict(final),
        "predicted_offset_error_initial_ps": predicted_initial,
        "predicted_offset_error_final_ps": predicted_final,
        "predicted_shift_ps": predicted_final - predicted_initial,
        "measured_shift_ps": measured_shift,
        "shift_sigma_ps": shift_sigma,
        "segments": segments_out,
    }


def _write_json(payload: dict, path):
    tmp = str(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def run_scenario(
    config_path,
    out_dir,
    seed: int | None = None,
    threads: int = 1,
    tag_format: str = "binary",
) -> dict:
    """Simulate a timing scenario and write tags, histograms, and estimates."""
    if tag_format not in ("binary", "csv"):
        raise ConfigError("tag_format must be 'binary' or 'csv'")
    sc = load_timing_scenario(config_path)
    if seed is not None:
        sc = dataclasses.replace(sc, seed=seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    alice, bob = simulate_timing(sc)
    if tag_format == "csv":
        write_tags_csv(alice, out / "alice.csv")
        write_tags_csv(bob, out / "bob.csv")
    else:
        write_tags_binary(alice, out / "alice.tt")
        write_tags_binary(bob, out / "bob.tt")

    estimates = _analyze_stream_blocks(
        alice, bob, sc.block_s, sc.analysis, sc.n_blocks(), out, threads
    )
    write_estimates_json(estimates, out / "estimates.json")
    summary = build_timing_summary(sc, estimates)
    _write_json(summary, out / "summary.json")
    return summary


def analyze_files(
    alice_path,
    bob_path,
    out_dir,
    params: SyncAnalysisParams,
    block_s: float,
    n_blocks: int | None = None,
    threads: int = 1,
) -> list[SyncEstimate]:
    """Run the offline analysis half on previously recorded tag files."""
    params.validate()
    if block_s <= 0:
        raise ConfigError("block_s must be > 0")
    alice = read_tags(alice_path)
    bob = read_tags(bob_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if n_blocks is None:
        n_blocks = complete_blocks(alice, bob, int(round(block_s * PS_PER_S)))
    estimates = _analyze_stream_blocks(alice, bob, block_s, params, n_blocks, out, threads)
    write_estimates_json(estimates, out / "estimates.json")
    return estimates


# --- tomography scenario ----------------------------------------------------


@dataclass(frozen=True)
class TomoScenario:
    seed: int
    attack: str = "none"
    theta_rad: float = 0.0
    faraday: FaradayParams = FaradayParams()
    counts_per_setting: float = 100_000.0
    accidentals_per_setting: float = 0.0
    depolarization: float = 0.0
    reps: int = 100

    def validate(self):
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        if self.attack not in ("none", "full", "naive"):
            raise ConfigError("attack must be one of 'none', 'full', 'naive'")
        if self.attack == "naive" and not 0.0 <= self.theta_rad <= math.pi:
            raise ConfigError("theta_rad must be in [0, pi] for the naive attack")
        self.faraday.validate("faraday")
        if self.counts_per_setting <= 0:
            raise ConfigError("counts_per_setting must be > 0")
        if self.accidentals_per_setting < 0:
            raise ConfigError("accidentals_per_setting must be >= 0")
        if not 0.0 <= self.depolarization <= 1.0:
            raise ConfigError("depolarization must be in [0, 1]")
        if self.reps < 2:
            raise ConfigError("reps must be >= 2")


def tomo_scenario_from_dict(d: dict) -> TomoScenario:
    if not isinstance(d, dict):
        raise ConfigError("tomography config must be a JSON object")
    fdict = d.get("faraday", {})
    defaults = FaradayParams()
    faraday = FaradayParams(
        wavelength_nm=_num(fdict, "wavelength_nm", "faraday.", defaults.wavelength_nm),
        n0=_num(fdict, "n0", "faraday.", defaults.n0),
        length_d_m=_num(fdict, "length_d_m", "faraday.", defaults.length_d_m),
        rotation_VBd_rad=_num(fdict, "rotation_VBd_rad", "faraday.", defaults.rotation_VBd_rad),
    )
    state = d.get("state", "psi_minus")
    if state != "psi_minus":
        raise ConfigError("state must be 'psi_minus'")
    sc = TomoScenario(
        seed=_int(d, "seed", ""),
        attack=d.get("attack", "none"),
        theta_rad=_num(d, "theta_rad", "", 0.0),
        faraday=faraday,
        counts_per_setting=_num(d, "counts_per_setting", "", 100_000.0),
        accidentals_per_setting=_num(d, "accidentals_per_setting", "", 0.0),
        depolarization=_num(d, "depolarization", "", 0.0),
        reps=_int(d, "reps", "", 100),
    )
    sc.validate()
    return sc


def tomo_scenario_to_dict(sc: TomoScenario) -> dict:
    return {
        "seed": sc.seed,
        "state": "psi_minus",
        "attack": sc.attack,
        "theta_rad": sc.theta_rad,
        "faraday": dataclasses.asdict(sc.faraday),
        "counts_per_setting": sc.counts_per_setting,
        "accidentals_per_setting": sc.accidentals_per_setting,
        "depolarization": sc.depolarization,
        "reps": sc.reps,
    }


def load_tomo_scenario(path) -> TomoScenario:
    with open(path, "r", encoding="utf-8") as fh:
        return tomo_scenario_from_dict(json.load(fh))


def attacked_state(sc: TomoScenario) -> TwoQubitState:
    base = bell_psi_minus()
    if sc.attack == "none":
        return base
    if sc.attack == "full":
        return apply_attack_full(base, sc.faraday)
    return apply_attack_naive_geometric(base, sc.theta_rad)


def run_tomo_scenario(config_path, out_dir, seed: int | None = None, threads: int = 1) -> dict:
    """Forward-model, sample, reconstruct, and error-propagate one comparison."""
    sc = load_tomo_scenario(config_path)
    if seed is not None:
        sc = dataclasses.replace(sc, seed=seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    target = DensityMatrix.from_pure(bell_psi_minus().amplitudes)
    rho_before = depolarize(target, sc.depolarization)
    rho_after = depolarize(
        DensityMatrix.from_pure(attacked_state(sc).amplitudes), sc.depolarization
    )

    counts_before = sample_counts(
        expected_counts(rho_before, sc.counts_per_setting, sc.accidentals_per_setting),
        rngmod.child_seed(sc.seed, rngmod.TOMO_BEFORE),
        sc.accidentals_per_setting,
    )
    counts_after = sample_counts(
        expected_counts(rho_after, sc.counts_per_setting, sc.accidentals_per_setting),
        rngmod.child_seed(sc.seed, rngmod.TOMO_AFTER),
        sc.accidentals_per_setting,
    )
    write_counts_csv(counts_before, out / "counts_before.csv")
    write_counts_csv(counts_after, out / "counts_after.csv")

    rho_hat_before = mle_reconstruct(counts_before)
    rho_hat_after = mle_reconstruct(counts_after)
    _write_json(density_to_json(rho_hat_before), out / "rho_before.json")
    _write_json(density_to_json(rho_hat_after), out / "rho_after.json")

    distribution = monte_carlo_fidelity(counts_before, counts_after, sc.reps, sc.seed, threads)
    _write_json(distribution.to_json(), out / "fidelity_distribution.json")

    summary = {
        "config": tomo_scenario_to_dict(sc),
        "fidelity_before_vs_target": fidelity(rho_hat_before, target),
        "fidelity_after_vs_target": fidelity(rho_hat_after, target),
        "fidelity_before_vs_after": fidelity(rho_hat_before, rho_hat_after),
        "fidelity_mc_mean": distribution.mean,
        "fidelity_mc_ci95_low": distribution.ci95_low,
        "fidelity_mc_ci95_high": distribution.ci95_high,
        "n_mc_samples": int(distribution.samples.size),
    }
    _write_json(summary, out / "summary.json")
    return summary
