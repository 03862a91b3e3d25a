"""Command-line front end: simulate scenarios, analyze tag files, predict.

Exit codes: 0 success, 1 configuration error, 2 analysis failure, 3 I/O error.
"""
from __future__ import annotations

import argparse
import json
import sys

from .channel import Direction, predicted_offset_error_ps
from .correlation import SyncAnalysisParams
from .errors import ConfigError, PeaksNotFoundError, ReconstructionError, StreamFormatError
from .scenario import _channel_from_dict, analyze_files, run_scenario, run_tomo_scenario


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entsync",
        description="Entanglement-based clock synchronization simulator and analyzer.",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    sim = sub.add_parser("simulate", help="Run a timing scenario and write all artifacts.")
    sim.add_argument("--config", required=True, help="Scenario JSON path.")
    sim.add_argument("--out", required=True, help="Output directory.")
    sim.add_argument("--seed", type=int, default=None, help="Override the config seed.")
    sim.add_argument("--threads", type=int, default=1)
    sim.add_argument(
        "--tag-format", choices=["binary", "csv"], default="binary",
        help="Time-tag file format to write.",
    )

    ana = sub.add_parser("analyze", help="Analyze recorded time-tag files.")
    ana.add_argument("--alice", required=True, help="First party's tag file (.tt or .csv).")
    ana.add_argument("--bob", required=True, help="Second party's tag file (.tt or .csv).")
    ana.add_argument("--out", required=True)
    defaults = SyncAnalysisParams()
    ana.add_argument("--block-s", type=float, default=40.0)
    ana.add_argument("--n-blocks", type=int, default=None)
    ana.add_argument("--tau-min-ps", type=int, default=defaults.tau_min_ps)
    ana.add_argument("--tau-max-ps", type=int, default=defaults.tau_max_ps)
    ana.add_argument("--bin-width-ps", type=int, default=defaults.bin_width_ps)
    ana.add_argument("--min-separation-ps", type=int, default=defaults.min_separation_ps)
    ana.add_argument("--threshold-sigma", type=float, default=defaults.threshold_sigma)
    ana.add_argument(
        "--centroid-halfwidth-bins", type=int, default=defaults.centroid_halfwidth_bins
    )
    ana.add_argument("--threads", type=int, default=1)

    tomo = sub.add_parser("tomo", help="Run a tomography comparison scenario.")
    tomo.add_argument("--config", required=True)
    tomo.add_argument("--out", required=True)
    tomo.add_argument("--seed", type=int, default=None)
    tomo.add_argument("--threads", type=int, default=1)

    pred = sub.add_parser(
        "predict", help="Print the analytic offset error for a channel config."
    )
    pred.add_argument("--config", required=True, help="Channel JSON or scenario JSON.")
    return parser


def _cmd_simulate(args) -> int:
    summary = run_scenario(
        args.config, args.out, seed=args.seed, threads=args.threads,
        tag_format=args.tag_format,
    )
    print(f"wrote {summary['n_estimates']}/{summary['n_blocks']} block estimates to {args.out}")
    if summary["measured_shift_ps"] is not None:
        print(
            f"measured offset shift {summary['measured_shift_ps']:.1f} ps "
            f"(predicted {summary['predicted_shift_ps']:.1f} ps, "
            f"sigma {summary['shift_sigma_ps']:.2f} ps)"
        )
    return 0


def _cmd_analyze(args) -> int:
    params = SyncAnalysisParams(
        tau_min_ps=args.tau_min_ps,
        tau_max_ps=args.tau_max_ps,
        bin_width_ps=args.bin_width_ps,
        min_separation_ps=args.min_separation_ps,
        threshold_sigma=args.threshold_sigma,
        centroid_halfwidth_bins=args.centroid_halfwidth_bins,
    )
    estimates = analyze_files(
        args.alice,
        args.bob,
        args.out,
        params,
        block_s=args.block_s,
        n_blocks=args.n_blocks,
        threads=args.threads,
    )
    print(f"wrote {len(estimates)} block estimates to {args.out}")
    return 0


def _cmd_tomo(args) -> int:
    summary = run_tomo_scenario(args.config, args.out, seed=args.seed, threads=args.threads)
    print(
        f"fidelity before/after: {summary['fidelity_before_vs_after']:.4f}, "
        f"Monte Carlo mean {summary['fidelity_mc_mean']:.4f} "
        f"[{summary['fidelity_mc_ci95_low']:.4f}, {summary['fidelity_mc_ci95_high']:.4f}]"
    )
    return 0


def _cmd_predict(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if not isinstance(payload, dict):
        raise ConfigError("config must be a JSON object")
    channel_dict = payload.get("channel", payload)
    cfg = _channel_from_dict(channel_dict, "channel.")
    cfg.validate()
    print(
        json.dumps(
            {
                "predicted_offset_error_ps": predicted_offset_error_ps(cfg),
                "delay_ab_ps": cfg.delay_ps(Direction.A_TO_B),
                "delay_ba_ps": cfg.delay_ps(Direction.B_TO_A),
            },
            indent=2,
            sort_keys=True,
        )
    )
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "simulate": _cmd_simulate,
        "analyze": _cmd_analyze,
        "tomo": _cmd_tomo,
        "predict": _cmd_predict,
    }
    try:
        return handlers[args.cmd](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except json.JSONDecodeError as exc:
        print(f"config error: invalid JSON: {exc}", file=sys.stderr)
        return 1
    except StreamFormatError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except (PeaksNotFoundError, ReconstructionError) as exc:
        print(f"analysis failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
