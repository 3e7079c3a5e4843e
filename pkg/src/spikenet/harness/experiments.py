"""Experiment orchestration: one function per experiment tag."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import ann, convert, sampler, srm
from ..topology import load_topology, sample_boltzmann_params, save_topology
from .idx import load_idx
from .reports import ACCURACY_HEADER, HISTOGRAM_HEADER, KL_HEADER, write_csv, write_manifest

log = logging.getLogger(__name__)


class ExperimentError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class ExperimentResult:
    out_dir: Path
    outputs: list[Path]
    manifest: Path
    ok: bool = True
    summary: dict = field(default_factory=dict)


class _Stage:
    """Context manager re-raising any failure as :class:`ExperimentError`."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, ExperimentError):
            raise ExperimentError(self.name, f"{type(exc).__name__}: {exc}") from exc
        return False


# data / model helpers

def load_data(cfg: dict):
    d = cfg["data"]
    train = load_idx(d["train_images"], d["train_labels"])
    ntr, nte = d["train_size"], d["test_size"]
    if ntr > len(train):
        raise ValueError(f"train_size {ntr} exceeds the {len(train)} available images")
    X, y = train.normalized(), train.labels
    tr = ann.LabeledBatch(X[:ntr], y[:ntr])
    if "test_images" in d:
        test = load_idx(d["test_images"], d["test_labels"])
        if nte > len(test):
            raise ValueError(f"test_size {nte} exceeds the {len(test)} available images")
        te = ann.LabeledBatch(test.normalized()[:nte], test.labels[:nte])
    else:
        if ntr + nte > len(train):
            raise ValueError("train_size + test_size exceed the training file and no test file was given")
        te = ann.LabeledBatch(X[-nte:], y[-nte:])
    return tr, te


def train_model(cfg: dict, tr, te, history=None) -> ann.AnnModel:
    a = cfg["ann"]
    if a["sizes"][0] != tr.inputs.shape[1]:
        raise ValueError(f"ann.sizes[0]={a['sizes'][0]} but images have {tr.inputs.shape[1]} pixels")
    model = ann.init_model(a["sizes"], seed=cfg["seed"])
    return ann.train_sgd(
        model, tr, a["epochs"], a["learning_rate"], seed=cfg["seed"],
        batch_size=a["batch_size"], test=te, history=history,
    )


def obtain_model(cfg, tr, te):
    if "weights" in cfg["ann"]:
        return ann.load_weights(cfg["ann"]["weights"])
    return train_model(cfg, tr, te)


# experiments

def _train_ann(cfg, out):
    with _Stage("load-data"):
        tr, te = load_data(cfg)
    history = []
    with _Stage("train"):
        model = train_model(cfg, tr, te, history)
    with _Stage("report"):
        wpath = out / "weights.json"
        ann.save_weights(model, wpath)
        hpath = write_csv(
            out / "training_history.csv",
            ("epoch", "loss", "train_accuracy", "test_accuracy"),
            [(h["epoch"], h["loss"], h["train_accuracy"], h["test_accuracy"]) for h in history],
        )
    return [wpath, hpath], {"seeds": {"init_and_shuffle": cfg["seed"]}, "summary": history[-1] if history else {}}


def _convert_rate(cfg, out):
    conv = cfg["conversion"]
    with _Stage("load-data"):
        tr, te = load_data(cfg)
    with _Stage("train"):
        model = obtain_model(cfg, tr, te)
    ann_pred = ann.predict(model, te.inputs)
    ann_acc = float(np.mean(ann_pred == te.labels))
    outputs, summary_rows, curves = [], [], {}
    ts = sorted(set(conv["timesteps"]))
    for enc in conv["encodings"]:
        with _Stage(f"simulate-{enc}"):
            snn = convert.convert_rate(model, conv["threshold"], enc)
            snaps = convert.run_rate_network(snn, te.inputs, max(ts), record=ts, seed=cfg["seed"])
        rows = []
        for t in ts:
            pred = np.argmax(snaps[t], axis=1)
            correct = (pred == te.labels).astype(float)
            rows.append((t, correct.mean(), correct.std()))
            summary_rows.append((enc, t, correct.mean(), ann_acc, float(np.mean(pred == ann_pred))))
        curves[enc] = {t: acc for t, acc, _ in rows}
        outputs.append(write_csv(out / f"accuracy_{enc}.csv", ACCURACY_HEADER, rows))
    outputs.append(write_csv(
        out / "conversion_summary.csv",
        ("encoding", "t", "snn_accuracy", "ann_accuracy", "agreement"),
        summary_rows,
    ))
    wpath = out / "weights.json"
    ann.save_weights(model, wpath)
    outputs.append(wpath)
    soft = []
    if "analog" in curves and "poisson" in curves:
        for t in ts:
            ok = curves["analog"][t] >= curves["poisson"][t]
            soft.append({"check": "analog >= poisson", "t": t, "ok": bool(ok)})
            if not ok:
                log.warning("soft check: analog accuracy below poisson at t=%d", t)
    extra = {
        "seeds": {"init_and_shuffle": cfg["seed"], "poisson": cfg["seed"]},
        "soft_checks": soft,
        "summary": {"ann_accuracy": ann_acc},
    }
    return outputs, extra


def _convert_ttfs(cfg, out):
    conv = cfg["conversion"]
    with _Stage("load-data"):
        tr, te = load_data(cfg)
    with _Stage("train"):
        model = obtain_model(cfg, tr, te)
    with _Stage("simulate-ttfs"):
        snn = convert.convert_ttfs(model, conv["threshold"])
        times = convert.ttfs_network_times(snn, te.inputs, conv["t_max"])
    rows = []
    for t in sorted(set(conv["timesteps"])):
        correct = np.array([convert.readout_first_spike(r, t).prediction == y for r, y in zip(times, te.labels)], float)
        rows.append((t, correct.mean(), correct.std()))
    outputs = [write_csv(out / "accuracy_ttfs.csv", ACCURACY_HEADER, rows)]
    ann_acc = float(np.mean(ann.predict(model, te.inputs) == te.labels))
    return outputs, {"seeds": {"init_and_shuffle": cfg["seed"]}, "summary": {"ann_accuracy": ann_acc}}


def _simulate(cfg, out):
    s = cfg["simulation"]
    with _Stage("load-topology"):
        topo = load_topology(s["topology"])
    with _Stage("simulate"):
        syn = srm.alpha_kernel(s["synaptic_kernel"]["tau_mem"], s["synaptic_kernel"]["tau_syn"],
                               s["synaptic_kernel"].get("window"))
        fbk = s.get("feedback_kernel")
        fb = srm.exp_feedback_kernel(fbk["tau_ref"], fbk.get("window")) if fbk else srm.zero_kernel()
        config = srm.SrmConfig(s["threshold"], syn, fb, s["bias_scale"])
        current = np.asarray(s.get("input_current", [0.0] * topo.neuron_count), dtype=float)
        if current.shape != (topo.neuron_count,):
            raise ValueError(f"input_current needs {topo.neuron_count} entries")
        ext = np.tile(current, (s["horizon"], 1))
        res = srm.simulate(topo, config, ext, s["horizon"], method=s["method"])
    with _Stage("report"):
        rpath = out / "raster.csv"
        srm.write_raster_csv(res.raster, rpath)
        bpath = out / "raster.bin"
        srm.write_raster_dense(res.raster, bpath)
        ppath = write_csv(
            out / "potentials.csv",
            ("t", *[f"u{i}" for i in range(topo.neuron_count)]),
            [(t, *row) for t, row in enumerate(res.potentials)],
        )
    extra = {"seeds": {}, "summary": {"horizon": s["horizon"], "neurons": topo.neuron_count,
                                      "spikes": int(res.raster.data.sum())}}
    return [rpath, bpath, ppath], extra


def _sample(cfg, out):
    s = cfg["sampler"]
    outputs, summary = [], []
    for ps in s["param_seeds"]:
        with _Stage("draw-params"):
            params = sample_boltzmann_params(s["n"], s["weight_std"], s["bias_mean"], s["bias_std"], ps)
        with _Stage("sample"):
            total = s["burn_in"] + s["samples"] * s["thinning"]
            trace = sampler.run_sampling(
                params, s["tau_ref"], total, s["thinning"], s["burn_in"], cfg["seed"], s["schedule"]
            )
        with _Stage("report"):
            tag = f"p{ps}"
            save_topology(params, out / f"params_{tag}.json")
            outputs.append(out / f"params_{tag}.json")
            outputs.append(write_csv(out / f"kl_curve_{tag}.csv", KL_HEADER, trace.checkpoints))
            emp = trace.counts / trace.samples
            with np.errstate(divide="ignore"):
                emp_log = np.log(emp)
            rows = [
                (sampler.configuration_bits(c, s["n"]), int(trace.counts[c]), float(emp_log[c]),
                 float(np.log(trace.exact.probabilities[c])))
                for c in range(trace.counts.size)
            ]
            outputs.append(write_csv(out / f"histogram_{tag}.csv", HISTOGRAM_HEADER, rows))
            early = trace.kl_at(trace.samples // 100) if trace.samples >= 100 else float("nan")
            summary.append((ps, cfg["seed"], trace.samples, early, trace.final_kl))
    outputs.append(write_csv(
        out / "sampling_summary.csv",
        ("param_seed", "chain_seed", "samples", "kl_at_1pct", "final_kl"),
        summary,
    ))
    extra = {"seeds": {"chain": cfg["seed"], "params": list(s["param_seeds"])}}
    return outputs, extra


def _oracle(cfg, out):
    o = cfg["oracle"]
    rows, ok = [], True
    for draw in range(o["draws"]):
        pseed = cfg["seed"] + draw
        params = sample_boltzmann_params(o["n"], o["weight_std"], o["bias_mean"], o["bias_std"], pseed)
        exact = sampler.exact_distribution(params).probabilities
        joint = sampler.refractory_joint(params, o["tau_ref"])
        for sched in o["schedules"]:
            with _Stage("oracle"):
                res = sampler.build_transition_matrix(params, o["tau_ref"], sched)
            tv = sampler.total_variation(res.marginal, exact)
            passed = tv < o["tolerance"]
            ok &= passed
            rows.append((draw, pseed, sched, tv, float(np.abs(res.stationary - joint).max()),
                         res.residual, res.iterations, int(passed)))
    outputs = [write_csv(
        out / "oracle_tv.csv",
        ("draw", "param_seed", "schedule", "total_variation", "joint_max_abs_error", "residual", "iterations", "pass"),
        rows,
    )]
    return outputs, {"seeds": {"params": [cfg["seed"] + d for d in range(o["draws"])]}, "ok": ok}


RUNNERS = {
    "train-ann": _train_ann,
    "convert-rate": _convert_rate,
    "convert-ttfs": _convert_ttfs,
    "simulate": _simulate,
    "sample": _sample,
    "oracle-check": _oracle,
}


def run_experiment(config: dict, out_dir=None) -> ExperimentResult:
    """Run a resolved config, writing CSV reports and ``manifest.json``."""
    out = Path(out_dir or config.get("output_dir") or f"runs/{config['experiment']}")
    out.mkdir(parents=True, exist_ok=True)
    outputs, extra = RUNNERS[config["experiment"]](config, out)
    ok = extra.pop("ok", True)
    seeds = extra.pop("seeds", {})
    manifest = write_manifest(out, config, seeds, outputs, {**extra, "ok": ok})
    return ExperimentResult(out, outputs, manifest, ok, extra.get("summary", {}))
