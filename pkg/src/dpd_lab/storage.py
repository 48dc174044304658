"""File formats: model files, the dataset cache, and CSV emission.

Model files are versioned JSON with every parameter stored as a hex float,
so a load/save round trip is bit-exact.  The dataset cache is a small binary
container: a magic line, a little-endian uint64 header length, a JSON header
describing the grid/seeds/per-state blocks, then raw float64 little-endian
interleaved re/im arrays in header order.  All CSVs are RFC-4180 style with
header rows and deterministic float formatting (repr round-trip).
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .metrics import MetricsReport, MetricsRow, PsdEstimate
from .nets import LayerSpec
from .predistorters import DpdModel
from .training import Dataset, StateData, StateGrid

__all__ = [
    "save_model",
    "load_model",
    "save_dataset",
    "load_dataset",
    "write_metrics_csv",
    "read_metrics_csv",
    "write_loss_csv",
    "write_psd_csv",
]

MODEL_FORMAT = "dpd-lab-model"
MODEL_VERSION = 1
DATASET_MAGIC = b"DPDLAB-DATASET-1\n"


def _floats_to_hex(arr: np.ndarray) -> list:
    return [float(v).hex() for v in np.asarray(arr, dtype=float).reshape(-1)]


def _hex_to_floats(values, shape=None) -> np.ndarray:
    arr = np.array([float.fromhex(v) for v in values])
    return arr.reshape(shape) if shape is not None else arr


def _layers_to_json(layers) -> list:
    return [{"in_dim": l.in_dim, "out_dim": l.out_dim, "activation": l.activation}
            for l in layers]


def _layers_from_json(data) -> tuple:
    return tuple(LayerSpec(d["in_dim"], d["out_dim"], d["activation"]) for d in data)


def _layout_to_json(layout) -> list:
    return [
        {"layer": r, "w_offset": w.start, "w_shape": [spec.out_dim, spec.in_dim],
         "b_offset": b.start}
        for r, (spec, (w, b)) in enumerate(zip(layout.layers, layout.slices))
    ]


def save_model(path, model: DpdModel) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": model.kind,
        "memory_length": model.memory_length,
        "bw_max_hz": model.bw_max_hz,
        "p_max_dbm": model.p_max_dbm,
        "main_layers": _layers_to_json(model.main_layers),
        "main_layout": _layout_to_json(model.main_layout),
        "main_params": _floats_to_hex(model.main_params),
    }
    if model.kind == "HN-R2TDNN":
        doc["hyper_layers"] = _layers_to_json(model.hyper_layers)
        doc["hyper_layout"] = _layout_to_json(model.hyper_layout)
        doc["hyper_params"] = _floats_to_hex(model.hyper_params)
    if model.kind == "SVDEN":
        doc["shortcut"] = _floats_to_hex(model.shortcut)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path) -> DpdModel:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT or doc.get("version") != MODEL_VERSION:
        raise ValueError(f"{path}: not a version-{MODEL_VERSION} {MODEL_FORMAT} file")
    kind = doc["kind"]
    model = DpdModel(
        kind=kind,
        memory_length=doc["memory_length"],
        main_layers=_layers_from_json(doc["main_layers"]),
        main_params=_hex_to_floats(doc["main_params"]),
        hyper_layers=_layers_from_json(doc["hyper_layers"]) if kind == "HN-R2TDNN" else None,
        hyper_params=_hex_to_floats(doc["hyper_params"]) if kind == "HN-R2TDNN" else None,
        shortcut=_hex_to_floats(doc["shortcut"], (2, 2)) if kind == "SVDEN" else None,
        bw_max_hz=doc.get("bw_max_hz"),
        p_max_dbm=doc.get("p_max_dbm"),
    )
    if len(model.main_params) != model.main_layout.total:
        raise ValueError(f"{path}: parameter array does not match the layer specs")
    return model


def save_dataset(path, dataset: Dataset) -> None:
    header = {
        "grid": list(dataset.grid.states),
        "sample_rate_hz": dataset.sample_rate_hz,
        "seed": dataset.seed,
        "states": [],
    }
    blocks = []
    for i in dataset.state_indices:
        st = dataset.states[i]
        header["states"].append({
            "index": i,
            "q": len(st.inputs),
            "split": st.split,
            "gain": [float(st.gain.real).hex(), float(st.gain.imag).hex()],
            "c": [float(v).hex() for v in st.c],
        })
        for arr in (st.inputs, st.targets):
            inter = np.empty(2 * len(arr))
            inter[0::2] = arr.real
            inter[1::2] = arr.imag
            blocks.append(inter.astype("<f8").tobytes())
    header_bytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(np.uint64(len(header_bytes)).tobytes())
        fh.write(header_bytes)
        for block in blocks:
            fh.write(block)


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        magic = fh.read(len(DATASET_MAGIC))
        if magic != DATASET_MAGIC:
            raise ValueError(f"{path}: not a dpd-lab dataset cache")
        header_len = int(np.frombuffer(fh.read(8), dtype="<u8")[0])
        header = json.loads(fh.read(header_len).decode())
        states = {}
        for meta in header["states"]:
            q = meta["q"]
            arrays = []
            for _ in range(2):
                raw = np.frombuffer(fh.read(16 * q), dtype="<f8")
                arrays.append(raw[0::2] + 1j * raw[1::2])
            gain = complex(float.fromhex(meta["gain"][0]), float.fromhex(meta["gain"][1]))
            c = np.array([float.fromhex(v) for v in meta["c"]])
            states[meta["index"]] = StateData(arrays[0], arrays[1], gain, c, meta["split"])
    grid = StateGrid(tuple(tuple(s) for s in header["grid"]))
    return Dataset(grid, states, header["sample_rate_hz"], header["seed"])


def _fmt(value) -> str:
    return repr(float(value))


def write_metrics_csv(path, report: MetricsReport) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["state_index", "bw_mhz", "power_dbm", "model",
                         "nmse_db", "acpr_lo", "acpr_hi", "acpr_mean"])
        for r in report.rows:
            writer.writerow([r.state_index, _fmt(r.bandwidth_hz / 1e6), _fmt(r.power_dbm),
                             r.model, _fmt(r.nmse_db), _fmt(r.acpr_lower_db),
                             _fmt(r.acpr_upper_db), _fmt(r.acpr_mean_db)])


def read_metrics_csv(path) -> MetricsReport:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(MetricsRow(
                int(rec["state_index"]), float(rec["bw_mhz"]) * 1e6, float(rec["power_dbm"]),
                rec["model"], float(rec["nmse_db"]), float(rec["acpr_lo"]),
                float(rec["acpr_hi"]), float(rec["acpr_mean"]),
            ))
    return MetricsReport(tuple(rows))


def write_loss_csv(path, history, state_indices) -> None:
    """Per-epoch training loss: epoch, total, then one J column per state."""
    state_indices = sorted(state_indices)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "total_loss"] + [f"J_{i}" for i in state_indices])
        for row in history:
            writer.writerow([row["epoch"], _fmt(row["total"])]
                            + [_fmt(row["per_state"][i]) for i in state_indices])


def write_psd_csv(path, psd: PsdEstimate) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["freq_hz", "psd_db"])
        for f, p in zip(psd.freq_hz, psd.psd_db):
            writer.writerow([_fmt(f), _fmt(p)])
