"""Command-line entry point wiring the modules into reproducible experiments.

    dpd-lab gen-data   --config desk.cfg          # dataset cache
    dpd-lab train      --config desk.cfg --kind HN-R2TDNN
    dpd-lab evaluate   --config desk.cfg [model files...]
    dpd-lab reproduce  --config desk.cfg          # the full pipeline

Exit codes: 0 success, 2 configuration error, 3 runtime failure.  Every
artifact name carries the config tag (seed, schema version, config digest),
so re-running the same config reproduces the same files byte for byte.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, build_chain, build_grid, load_config
from .metrics import evaluate_models
from .predistorters import build_model
from .signals import derive_seed, rms
from .storage import (load_dataset, load_model, save_dataset, save_model,
                      write_loss_csv, write_metrics_csv, write_psd_csv)
from .training import build_dataset, train_ila

__all__ = ["main", "cmd_gen_data", "cmd_train", "cmd_evaluate", "cmd_reproduce"]


def _out_dir(cfg: ExperimentConfig) -> Path:
    path = Path(cfg.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _dataset_path(cfg) -> Path:
    return _out_dir(cfg) / f"dataset_{cfg.tag()}.bin"


def _model_path(cfg, kind: str) -> Path:
    return _out_dir(cfg) / f"model_{kind}_{cfg.tag()}.json"


def _loss_path(cfg, kind: str) -> Path:
    return _out_dir(cfg) / f"loss_{kind}_{cfg.tag()}.csv"


def _metrics_path(cfg) -> Path:
    return _out_dir(cfg) / f"metrics_{cfg.tag()}.csv"


def _summary_path(cfg) -> Path:
    return _out_dir(cfg) / f"summary_{cfg.tag()}.json"


def cmd_gen_data(cfg: ExperimentConfig) -> Path:
    """Build the per-state dataset cache and print a gain/RMS summary."""
    chain = build_chain(cfg)
    grid = build_grid(cfg)
    wf = cfg.waveform
    dataset = build_dataset(
        chain, grid, wf.samples_per_state, cfg.master_seed,
        sample_rate_hz=wf.sample_rate_hz, modulation_order=wf.modulation_order,
        ref_power_dbm=wf.ref_power_dbm, ref_rms=wf.ref_rms,
        train_fraction=wf.train_fraction, fft_size=wf.fft_size,
        occupancy=wf.occupancy, transition_len=wf.transition_len,
    )
    path = _dataset_path(cfg)
    save_dataset(path, dataset)
    print(f"dataset cache: {path}")
    for i in dataset.state_indices:
        st = dataset.states[i]
        bw, p = grid.state(i)
        print(f"  state {i} ({bw/1e6:g} MHz, {p:g} dBm): "
              f"G = {st.gain.real:+.6f}{st.gain.imag:+.6f}j  "
              f"target RMS = {rms(st.targets):.6f}  "
              f"train/test = {st.split}/{len(st.inputs) - st.split}")
    return path


def cmd_train(cfg: ExperimentConfig, kind: str) -> Path:
    """Train one model kind on its configured states; persist model + history."""
    cache = _dataset_path(cfg)
    if not cache.exists():
        raise FileNotFoundError(f"dataset cache missing: {cache} (run gen-data first)")
    dataset = load_dataset(cache)
    grid = dataset.grid
    states = cfg.models.states_for(kind, grid)
    kind_index = list(cfg.models.kinds).index(kind) if kind in cfg.models.kinds else 99
    model = build_model(
        kind, cfg.models.memory_length, cfg.models.hidden_dims,
        cfg.models.hyper_hidden_dims if kind == "HN-R2TDNN" else None,
        seed=derive_seed(cfg.master_seed, 3, kind_index),
    )
    train_cfg = cfg.training.for_kind(kind, seed=derive_seed(cfg.master_seed, 4, kind_index))
    chain = build_chain(cfg) if train_cfg.ila_iterations > 1 else None
    model, history = train_ila(model, dataset.subset(states), train_cfg, chain=chain)
    model_path = _model_path(cfg, kind)
    save_model(model_path, model)
    write_loss_csv(_loss_path(cfg, kind), history, states)
    final = history[-1]["total"]
    print(f"trained {kind} on states {states}: {model.param_count} params, "
          f"final loss {final:.6g} -> {model_path}")
    return model_path


def cmd_evaluate(cfg: ExperimentConfig, model_files=None) -> Path:
    """Emit the per-state comparison table (baseline + models) and PSD traces."""
    cache = _dataset_path(cfg)
    if not cache.exists():
        raise FileNotFoundError(f"dataset cache missing: {cache} (run gen-data first)")
    if model_files:
        paths = [Path(p) for p in model_files]
    else:
        paths = [_model_path(cfg, kind) for kind in cfg.models.kinds]
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        raise FileNotFoundError(f"model files missing: {missing} (run train first)")
    models = []
    for p in paths:
        model = load_model(p)
        models.append((model.kind, model))

    chain = build_chain(cfg)
    grid = build_grid(cfg)
    wf, mt = cfg.waveform, cfg.metrics
    report, psds = evaluate_models(
        chain, models, grid, test_seed=cfg.master_seed,
        num_samples=wf.eval_samples, sample_rate_hz=wf.sample_rate_hz,
        modulation_order=wf.modulation_order, ref_power_dbm=wf.ref_power_dbm,
        ref_rms=wf.ref_rms, fft_size=wf.fft_size, occupancy=wf.occupancy,
        transition_len=wf.transition_len, segment_length=mt.psd_segment_length,
        overlap_fraction=mt.psd_overlap, acpr_offset_factor=mt.acpr_offset_factor,
        acpr_integration_factor=mt.acpr_integration_factor, nmse_skip=mt.nmse_skip,
        collect_psd=True,
    )
    metrics_path = _metrics_path(cfg)
    write_metrics_csv(metrics_path, report)
    for (state, label), psd in sorted(psds.items()):
        write_psd_csv(_out_dir(cfg) / f"psd_state{state}_{label}_{cfg.tag()}.csv", psd)
    print(f"metrics: {metrics_path} ({len(report.rows)} rows)")
    for name in report.models():
        print(f"  {name:>10}: mean NMSE {report.mean_nmse_db(name):7.2f} dB, "
              f"mean ACPR {report.mean_acpr_db(name):7.2f} dB")
    return metrics_path


def cmd_reproduce(cfg: ExperimentConfig) -> Path:
    """gen-data, train every configured kind, evaluate, and summarize."""
    created = []
    try:
        created.append(cmd_gen_data(cfg))
        for kind in cfg.models.kinds:
            created.append(cmd_train(cfg, kind))
            created.append(_loss_path(cfg, kind))
        created.append(cmd_evaluate(cfg))
        from .storage import read_metrics_csv

        report = read_metrics_csv(_metrics_path(cfg))
        summary = {"config_tag": cfg.tag(), "models": {}}
        for name in report.models():
            summary["models"][name] = {
                "mean_nmse_db": report.mean_nmse_db(name),
                "mean_acpr_db": report.mean_acpr_db(name),
            }
        baseline = "SVDEN" if "SVDEN" in summary["models"] else None
        if baseline:
            ref = summary["models"][baseline]
            for name, vals in summary["models"].items():
                if name in ("no-dpd", baseline):
                    continue
                vals["nmse_gain_vs_svden_db"] = ref["mean_nmse_db"] - vals["mean_nmse_db"]
                vals["acpr_gain_vs_svden_db"] = ref["mean_acpr_db"] - vals["mean_acpr_db"]
        path = _summary_path(cfg)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"summary: {path}")
        return path
    except Exception:
        for path in created:
            Path(path).unlink(missing_ok=True)
        raise


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpd-lab",
        description="Joint DPD laboratory: simulated IQ-PA transmitter, NN "
                    "predistorters, ILA training, NMSE/ACPR/PSD evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("gen-data", "generate and cache the per-state training dataset"),
        ("train", "train one predistorter kind"),
        ("evaluate", "evaluate trained models across the state grid"),
        ("reproduce", "run the full experiment pipeline"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="experiment config file (JSON)")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--seed", type=int, help="override the master seed")
        if name == "train":
            p.add_argument("--kind", required=True, help="model kind to train")
        if name == "evaluate":
            p.add_argument("models", nargs="*", help="model files (default: configured kinds)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        cfg = cfg.with_overrides(master_seed=args.seed, output_dir=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "gen-data":
            cmd_gen_data(cfg)
        elif args.command == "train":
            if args.kind not in ("R2TDNN", "SVDEN", "HG-R2TDNN", "HN-R2TDNN"):
                print(f"config error: unknown model kind {args.kind!r}", file=sys.stderr)
                return 2
            cmd_train(cfg, args.kind)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, args.models or None)
        elif args.command == "reproduce":
            cmd_reproduce(cfg)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
