"""Command line entry point.

Subcommands:
    run <config>            full experiment from a flat key=value config
    demo-fig1               six-sample toy evaluation with known scores
    analyze <run_dir>       rebuild report files from persisted scores
    generate-data <spec> <out>  write a synthetic dataset as canonical CSV

Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .attacks import AttackSpec
from .config import parse_config_file
from .data import Dataset, generate_synthetic, save_dataset_csv
from .errors import FedTrustError
from .experiment import analyze_run_dir, run_experiment
from .metrics import FairnessSpec, demographic_parity_gap, fair, perf, res
from .seeding import derive_seed


class _TableModel:
    """Fixed-prediction stub keyed on the (single) feature value."""

    def __init__(self, table: dict[int, int]) -> None:
        self.table = table

    def predict(self, x) -> int:
        return self.table[int(round(float(x[0]) * 10))]


def _fig1_toy():
    """The six-sample toy test set with its stub model and stub attack.

    Samples 1..6 carry labels [G, R, G, R, R, G] with G=0, R=1; samples
    1, 2, 4 are protected and R is the target class. The stub model predicts
    [G, R, R, G, R, G]; the stub attack flips exactly sample 1 of the four
    correctly classified ones.
    """
    features = np.array([[i / 10] for i in range(1, 7)])
    labels = np.array([0, 1, 0, 1, 1, 0])
    protected = np.array([True, True, False, True, False, False])
    test = Dataset(features, labels, protected, class_count=2)
    model = _TableModel({1: 0, 2: 1, 3: 1, 4: 0, 5: 1, 6: 0, 7: 1})

    def attack_fn(_model, x, _y):
        if int(round(float(x[0]) * 10)) == 1:
            return np.array([0.7])
        return np.asarray(x)

    return test, model, attack_fn


def cmd_demo_fig1() -> int:
    test, model, attack_fn = _fig1_toy()
    spec = FairnessSpec(target_class=1)
    perf_v = perf(model, test)
    gap_v = demographic_parity_gap(model, test, spec)
    fair_v = fair(model, test, spec)
    res_v = res(model, test, AttackSpec(epsilon=0.3), attack_fn=attack_fn)
    success = 1.0 - res_v
    print(f"perf = {perf_v:.4g}")
    print(f"demographic parity gap = {gap_v:.4g}")
    print(f"fair = {fair_v:.4g}")
    print(f"attack success = {success:.4g}")
    print(f"res = {res_v:.4g}")
    expected = [
        (perf_v, 2 / 3),
        (gap_v, 1 / 3),
        (fair_v, 2 / 3),
        (success, 1 / 4),
        (res_v, 3 / 4),
    ]
    if all(abs(got - want) <= 1e-9 for got, want in expected):
        return 0
    print("demo values deviate from the expected toy scores", file=sys.stderr)
    return 1


def cmd_run(config_path: str) -> int:
    cfg = parse_config_file(config_path)
    report = run_experiment(cfg)
    print(f"run complete: {cfg.folds} fold(s), report written to {cfg.output_dir}")
    for scheme in report.schemes:
        for metric, stats in report.vs_perf[scheme].items():
            print(
                f"  {scheme:14s} {metric:4s} vs perf: "
                f"phi = {stats.phi_mean:+.3f} +- {stats.phi_std:.3f}, "
                f"l2 = {stats.l2_mean:.4f}"
            )
    return 0


def cmd_analyze(run_dir: str) -> int:
    analyze_run_dir(run_dir)
    print(f"report rebuilt in {run_dir}")
    return 0


def cmd_generate_data(spec_path: str, out_path: str) -> int:
    cfg = parse_config_file(spec_path)
    data = generate_synthetic(
        cfg.synthetic_n,
        cfg.synthetic_d,
        cfg.group_imbalance,
        derive_seed(cfg.master_seed, "fold", 0, "data"),
    )
    save_dataset_csv(data, out_path)
    print(f"wrote {len(data)} samples ({data.feature_dim} features) to {out_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedtrust",
        description="Federated training with multi-metric client contribution scores",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a full experiment")
    p_run.add_argument("config", help="path to a flat key=value config file")
    sub.add_parser("demo-fig1", help="evaluate the six-sample toy example")
    p_an = sub.add_parser("analyze", help="rebuild report files from saved scores")
    p_an.add_argument("run_dir", help="experiment output directory")
    p_gen = sub.add_parser("generate-data", help="write a synthetic dataset CSV")
    p_gen.add_argument("spec", help="config file providing the data.* keys")
    p_gen.add_argument("out", help="output CSV path")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args.config)
        if args.command == "demo-fig1":
            return cmd_demo_fig1()
        if args.command == "analyze":
            return cmd_analyze(args.run_dir)
        return cmd_generate_data(args.spec, args.out)
    except FedTrustError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
