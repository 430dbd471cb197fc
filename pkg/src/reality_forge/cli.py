"""Command-line entry point: ``reality-forge <subcommand> ...``.

Exit codes: 0 success, 1 domain error (diagnostic on stderr), 2 usage
error.  Artifacts go to the files named by ``--out`` (written to a
temporary file and renamed on success); the JSON report goes to
``--report`` and, with ``--stdout``, to standard output.  A one-line
summary is always printed on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from contextlib import nullcontext
from dataclasses import asdict, fields

import numpy as np

from . import automaton, clicklog, embedding, geodesic, melucci, prespace, probcheck, rota
from .errors import ConfigError, DecodeError, RealityForgeError

SCHEMA_VERSION = 1
THREADS_ENV = "REALITY_FORGE_THREADS"


class UsageError(Exception):
    """Bad invocation detected after argument parsing (exit code 2)."""


# --------------------------------------------------------------------------
# plumbing


def _atomic_write(path: str, data) -> None:
    if isinstance(data, str):
        data = data.encode("utf-8")
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        # mkstemp creates 0600; give the file the mode a plain open() would
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_text(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _load_json(path: str):
    try:
        return json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise DecodeError(f"{path}: not valid JSON: {exc}") from None


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (frozenset, set)):
        return sorted(_jsonable(v) for v in obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def _dump(doc) -> str:
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def _floats(text: str, name: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"{name} must be a comma-separated list of numbers, got {text!r}") from None


def _thread_limit():
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be a nonnegative integer, got {raw!r}") from None
    if n < 0:
        raise UsageError(f"{THREADS_ENV} must be a nonnegative integer, got {n}")
    if n == 0:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


class Run:
    """Collects one subcommand's report and outputs."""

    def __init__(self, args):
        self.args = args
        self.inputs: dict = {}
        self.outputs: dict = {}
        self.checks: dict = {}
        self.summary = ""
        self.t0 = time.perf_counter()
        self.stages: dict[str, float] = {}

    def stage(self, name: str, since: float) -> float:
        now = time.perf_counter()
        self.stages[name] = now - since
        return now

    def write(self, path: str | None, data) -> None:
        if path:
            _atomic_write(path, data)

    def report(self) -> dict:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "command": self.args.command + (f" {self.args.action}" if getattr(self.args, "action", None) else ""),
            "inputs": self.inputs,
            "outputs": self.outputs,
            "checks": self.checks,
        }
        doc["timing"] = {"total_s": time.perf_counter() - self.t0, "stages_s": self.stages}
        return doc


# --------------------------------------------------------------------------
# subcommands


def _log_format(path, explicit):
    if explicit:
        return explicit
    return "tsv" if str(path).endswith(".tsv") else "jsonl"


def cmd_ingest(run: Run, a) -> None:
    fmt = _log_format(a.input, a.format)
    coll = clicklog.read_log(a.input, fmt)
    run.inputs = {"path": a.input, "format": fmt}
    run.outputs = {
        "streams": len(coll),
        "clicks": coll.n_clicks,
        "vocabulary": len(coll.vocabulary),
        "max_length": max((len(s) for s in coll), default=0),
    }
    if a.out:
        out_fmt = a.out_format or _log_format(a.out, None)
        run.write(a.out, clicklog.serialize_log(coll, out_fmt))
        run.outputs["log"] = a.out
    run.summary = f"ingested {len(coll)} streams, {coll.n_clicks} clicks"


def _synthetic_config(a) -> clicklog.SyntheticConfig:
    return clicklog.SyntheticConfig(
        num_streams=a.streams,
        stream_len=a.length,
        n=a.n,
        mode=a.mode,
        step=a.step,
        spread=a.spread,
        heading_spread=a.heading_spread,
        bins_per_window=a.bins,
    ).validate()


def cmd_synth(run: Run, a) -> None:
    cfg = _synthetic_config(a)
    coll = clicklog.generate_synthetic(cfg, a.seed)
    fmt = a.format or _log_format(a.out, None)
    run.write(a.out, clicklog.serialize_log(coll, fmt))
    run.inputs = {"config": asdict(cfg), "seed": a.seed}
    run.outputs = {"log": a.out, "streams": len(coll), "clicks": coll.n_clicks}
    run.summary = f"generated {len(coll)} streams ({cfg.mode})"


def cmd_prespace(run: Run, a) -> None:
    fmt = _log_format(a.input, a.format)
    coll = clicklog.read_log(a.input, fmt)
    sk = prespace.build_skeleton(coll, a.scheme, a.K)
    run.write(a.out, prespace.skeleton_to_json(sk))
    n_thread = int(sk.is_thread.sum())
    run.inputs = {"log": a.input, "scheme": a.scheme, "K": a.K}
    run.outputs = {
        "skeleton": a.out,
        "points": sk.n_points,
        "layers": len(sk.layers),
        "thread_edges": n_thread,
        "neighbor_edges": len(sk.edges) - n_thread,
    }
    run.summary = f"skeleton with {sk.n_points} points and {len(sk.edges)} edges"


def _embed_params(d: dict) -> embedding.EmbedParams:
    known = {f.name for f in fields(embedding.EmbedParams)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown embedding parameters: {sorted(unknown)}")
    return embedding.EmbedParams(**d).validate()


def cmd_embed(run: Run, a) -> None:
    sk = prespace.skeleton_from_json(_read_text(a.skeleton))
    params = _embed_params(
        {
            "n": a.n,
            "max_iters": a.max_iters,
            "tol": a.tol,
            "time_scale": a.time_scale,
            "temporal_stiffness": a.temporal_stiffness,
            "seed": a.seed,
            "n_init": a.n_init,
            "init": a.init,
        }
    )
    emb = embedding.embed(sk, params)
    run.write(a.out, embedding.embedding_to_csv(emb))
    sidecar = a.sidecar or (a.out + ".json" if a.out else None)
    run.write(sidecar, embedding.embedding_sidecar(emb))
    run.inputs = {"skeleton": a.skeleton, "params": asdict(params)}
    run.outputs = {
        "embedding": a.out,
        "sidecar": sidecar,
        "final_stress": emb.final_stress,
        "iterations": len(emb.stress_history) - 1,
    }
    run.checks["stress_nonincreasing"] = bool(np.all(np.diff(emb.stress_history) <= 0))
    run.summary = f"final stress {emb.final_stress:.6g}"


def _load_embedding(path, sidecar=None):
    side = sidecar or (path + ".json")
    text = _read_text(side) if os.path.exists(side) else None
    return embedding.embedding_from_csv(_read_text(path), text)


def _grid(a) -> geodesic.GridSpec:
    spacing = _floats(a.spacing, "--spacing") if a.spacing else None
    if spacing is not None and len(spacing) == 1:
        spacing = spacing[0]
    return geodesic.GridSpec(spacing=tuple(spacing) if isinstance(spacing, list) else spacing, cells=a.cells, margin=a.margin)


def cmd_geodesic(run: Run, a) -> None:
    emb = _load_embedding(a.embedding)
    sk = prespace.skeleton_from_json(_read_text(a.skeleton))
    field = geodesic.fit_metric_field(emb, sk, _grid(a), a.epsilon)
    if a.x0 is not None:
        if a.v0 is None:
            raise UsageError("--x0 needs --v0")
        x0, v0 = _floats(a.x0, "--x0"), _floats(a.v0, "--v0")
    elif a.stream is not None:
        if a.seq is None or a.seq < 1:
            raise UsageError("--stream needs --seq >= 1 (the velocity is the step from seq-1)")
        here = emb[prespace.PointRef(a.stream, a.seq)]
        before = emb[prespace.PointRef(a.stream, a.seq - 1)]
        x0, v0 = here.tolist(), (here - before).tolist()
    else:
        raise UsageError("give a start either as --x0/--v0 or as --stream/--seq")
    path = geodesic.integrate_geodesic(field, x0, v0, a.steps, a.dt)
    run.write(a.out, path.to_csv())
    run.write(a.metric_out, field.to_json())
    run.inputs = {"embedding": a.embedding, "skeleton": a.skeleton, "x0": x0, "v0": v0, "steps": a.steps, "dt": a.dt}
    run.outputs = {
        "path": a.out,
        "metric": a.metric_out,
        "samples": len(path),
        "truncated": path.truncated,
        "end": path.positions[-1],
        "grid_shape": list(field.shape),
        "fallback_nodes": field.n_fallback,
        "epsilon": field.epsilon,
    }
    run.summary = f"geodesic with {len(path)} samples" + (" (left the grid)" if path.truncated else "")


def cmd_predict(run: Run, a) -> None:
    emb = _load_embedding(a.embedding)
    sk = prespace.skeleton_from_json(_read_text(a.skeleton))
    res = geodesic.holdout_prediction(emb, sk, a.holdout, _grid(a), a.epsilon, a.dt)
    if a.out:
        D = emb.coords.shape[1]
        lines = ["stream,seq," + ",".join(["t"] + [f"x{k}" for k in range(1, D)])]
        for (i, k), x in sorted(res.predictions.items()):
            lines.append(f"{i},{k}," + ",".join(repr(float(v)) for v in x))
        run.write(a.out, "\n".join(lines) + "\n")
    run.inputs = {"embedding": a.embedding, "skeleton": a.skeleton, "holdout": a.holdout, "dt": a.dt}
    run.outputs = {
        "predictions": a.out,
        "streams": len(res.streams),
        "mean_error": res.mean_error,
        "mean_step": res.mean_step,
        "relative_error": res.relative_error,
    }
    run.summary = f"mean prediction error {res.mean_error:.4g} ({res.relative_error:.3g} x mean step)"


def cmd_probcheck(run: Run, a) -> None:
    if a.action == "bell":
        res = probcheck.bell_sum(a.p_ab, a.p_bc, a.p_ac)
        verdict = "consistent" if res.classical_consistent else "violated"
        doc = probcheck.verdict_report("bell", {"p_ab": a.p_ab, "p_bc": a.p_bc, "p_ac": a.p_ac}, res.sum, verdict)
    elif a.action == "accardi":
        t = probcheck.DichotomicTriple(a.p, a.q, a.r)
        ok = probcheck.accardi_fedullo_classical(t)
        doc = probcheck.verdict_report(
            "accardi_fedullo", asdict(t), {"lower": abs(t.p + t.q - 1), "upper": 1 - abs(t.p - t.q)},
            probcheck.CLASSICAL if ok else probcheck.NONCLASSICAL,
        )
    elif a.action == "lp":
        fam = probcheck.ObservableFamily.from_json(_read_text(a.family))
        res = probcheck.kolmogorov_feasible(fam)
        doc = probcheck.verdict_report(
            "kolmogorov_lp", fam.to_dict(),
            None if res.witness is None else res.witness.tolist(),
            "feasible" if res.feasible else "infeasible",
        )
    else:
        if a.counts:
            est = melucci.estimate_stats(*melucci.counts_from_json(_read_text(a.counts)))
            A, se = melucci.invariant_estimate(est)
            tol = a.tol if a.tol is not None else 3.0 * se
            inputs = {"counts": a.counts, "stats": asdict(est.stats), "se": est.se._asdict()}
            value = {"A": A, "se": se, "tol": tol}
        else:
            missing = [n for n in ("px", "px_r", "px_notr", "pr") if getattr(a, n) is None]
            if missing:
                raise UsageError("invariant needs --counts or all of --px --px-r --px-notr --pr")
            s = probcheck.MelucciStats(a.px, a.px_r, a.px_notr, a.pr)
            A = probcheck.accardi_invariant(s)
            tol = a.tol or 0.0
            inputs = asdict(s)
            value = {"A": A, "tol": tol, "ltp_residual": probcheck.total_probability_residual(s)}
        doc = probcheck.verdict_report("accardi_invariant", inputs, value, probcheck.classify_accardi(A, tol))
    run.inputs = doc["inputs"]
    run.outputs = {"test": doc["test"], "value": doc["value"], "verdict": doc["verdict"]}
    run.write(a.out, _dump(doc))
    run.summary = f"{doc['test']}: {doc['verdict']}"


def cmd_melucci(run: Run, a) -> None:
    base = asdict(melucci.PRESETS[a.preset]) if a.preset else {}
    if a.config:
        doc = _load_json(a.config)
        if not isinstance(doc, dict):
            raise ConfigError("melucci config must be a JSON object")
        base.update(doc)
    for name in ("pR", "pX_given_R", "pX_given_notR", "delta", "N", "seed"):
        v = getattr(a, name)
        if v is not None:
            base[name] = v
    cfg = melucci.SourceConfig.from_dict(base)
    counts = melucci.run_all(cfg)
    est = melucci.estimate_stats(*counts)
    A, se = melucci.invariant_estimate(est)
    run.write(a.out, melucci.counts_to_json(counts))
    run.inputs = {"config": asdict(cfg)}
    run.outputs = {
        "counts": [c.to_dict() for c in counts],
        "stats": asdict(est.stats),
        "se": est.se._asdict(),
        "A": A,
        "A_se": se,
        "expected_A": cfg.expected_invariant,
        "verdict": probcheck.classify_accardi(A, 3.0 * se),
        "ltp_residual": probcheck.total_probability_residual(est.stats),
    }
    run.summary = f"A = {A:.6g} +/- {se:.2g} ({run.outputs['verdict']})"


def _automaton(a) -> automaton.MooreAutomaton:
    if a.preset and a.file:
        raise UsageError("give either --preset or --file")
    if a.preset:
        return automaton.PRESETS[a.preset]()
    if a.file:
        return automaton.MooreAutomaton.from_json(_read_text(a.file))
    raise UsageError("give --preset or --file")


def cmd_automaton(run: Run, a) -> None:
    m = _automaton(a)
    poset = automaton.property_logic(m, a.max_len, a.mode, a.verified)
    doc = poset.to_dict()
    run.write(a.out, _dump(doc))
    run.inputs = {"automaton": a.preset or a.file, "max_len": a.max_len, "mode": a.mode, "verified": a.verified}
    run.outputs = {"poset": a.out, "size": len(poset), **doc}
    if a.complementary:
        w1, w2 = (tuple(w.split(",")) if w else () for w in a.complementary)
        run.outputs["complementary"] = automaton.is_complementary(m, w1, w2)
    run.summary = f"{len(poset)} propositions"


def cmd_rota(run: Run, a) -> None:
    if a.action in ("template", "closure"):
        d = rota.Dag.from_dict(_load_json(a.dag))
        t = rota.template_matrix(d)
        if a.action == "closure":
            t = rota.algebra_closure(t)
        doc = {"dag": d.to_dict(), "template": t.to_dict(), "closed": rota.is_closed_algebra(t)}
        run.inputs = {"dag": a.dag}
        run.summary = f"{a.action} of a {d.m}-vertex DAG" + (" (closed)" if doc["closed"] else "")
    elif a.action == "propagate":
        d = rota.Dag.from_dict(_load_json(a.dag))
        t = rota.template_matrix(d)
        W = _load_json(a.weights)
        out = rota.propagate(t, W, _floats(a.signal, "--signal"), a.layers)
        doc = {"output": out.tolist()}
        run.inputs = {"dag": a.dag, "weights": W, "signal": a.signal, "layers": a.layers}
        run.summary = "propagated signal"
    else:
        sp = rota.spatialize(rota.subspace_from_json(_read_text(a.subspace)))
        doc = sp.to_dict()
        run.inputs = {"subspace": a.subspace}
        run.summary = f"{sp.topology.n_points}-point space" + ("" if sp.dag is None else ", DAG recovered")
    run.outputs = doc
    run.write(a.out, _dump(doc))


PIPELINE_SECTIONS = {"seed", "input", "prespace", "embed", "geodesic"}


def run_pipeline(config: dict, run: Run | None = None) -> dict:
    """Synthesize or ingest, build the skeleton, embed, fit the metric and
    predict held-out suffixes.  Returns the report outputs."""
    if not isinstance(config, dict):
        raise ConfigError("pipeline config must be a JSON object")
    unknown = set(config) - PIPELINE_SECTIONS
    if unknown:
        raise ConfigError(f"unknown pipeline sections: {sorted(unknown)}")
    seed = config.get("seed", 0)
    t = time.perf_counter()

    def mark(name):
        nonlocal t
        if run is not None:
            t = run.stage(name, t)

    src = config.get("input", {"synthetic": {}})
    if "synthetic" in src:
        syn = dict(src["synthetic"])
        try:
            scfg = clicklog.SyntheticConfig(**syn).validate()
        except TypeError as exc:
            raise ConfigError(f"bad synthetic config: {exc}") from None
        coll = clicklog.generate_synthetic(scfg, src.get("seed", seed))
    elif "log" in src:
        coll = clicklog.read_log(src["log"], _log_format(src["log"], src.get("format")))
    else:
        raise ConfigError("input must name a 'synthetic' config or a 'log' path")
    mark("input")

    pcfg = dict(config.get("prespace", {}))
    unknown = set(pcfg) - {"scheme", "K"}
    if unknown:
        raise ConfigError(f"unknown prespace parameters: {sorted(unknown)}")
    sk = prespace.build_skeleton(coll, pcfg.get("scheme", "cosine"), pcfg.get("K", 8))
    mark("prespace")

    ecfg = {"seed": seed, **config.get("embed", {})}
    emb = embedding.embed(sk, _embed_params(ecfg))
    mark("embed")

    gcfg = dict(config.get("geodesic", {}))
    unknown = set(gcfg) - {"cells", "spacing", "margin", "epsilon", "holdout", "dt"}
    if unknown:
        raise ConfigError(f"unknown geodesic parameters: {sorted(unknown)}")
    spacing = gcfg.get("spacing")
    grid = geodesic.GridSpec(
        spacing=tuple(spacing) if isinstance(spacing, list) else spacing,
        cells=gcfg.get("cells"),
        margin=gcfg.get("margin", 1),
    )
    res = geodesic.holdout_prediction(emb, sk, gcfg.get("holdout", 1), grid, gcfg.get("epsilon"), gcfg.get("dt", 1.0))
    mark("geodesic")

    out = {
        "streams": len(coll),
        "clicks": coll.n_clicks,
        "edges": len(sk.edges),
        "final_stress": emb.final_stress,
        "iterations": len(emb.stress_history) - 1,
        "mean_prediction_error": res.mean_error,
        "mean_step": res.mean_step,
        "relative_prediction_error": res.relative_error,
    }
    latent = [c.latent for _, c in coll.clicks()]
    if all(v is not None for v in latent):
        lat = np.array(
            [coll.streams[p.stream_index].clicks[p.seq].latent for p in sk.points], dtype=float
        )
        _, residual = embedding.procrustes_align(lat, emb.spatial)
        diam = float(np.max(np.linalg.norm(lat[:, None, :] - lat[None, :, :], axis=-1)))
        rms = float(np.sqrt(residual / len(lat)))
        out.update({"procrustes_rms": rms, "latent_diameter": diam, "relative_rms": rms / diam if diam else None})
    return out


def cmd_pipeline(run: Run, a) -> None:
    config = _load_json(a.config)
    run.inputs = {"config": config}
    run.outputs = run_pipeline(config, run)
    o = run.outputs
    run.checks = {
        "final_stress_below_0.05": o["final_stress"] < 0.05,
        "prediction_below_0.2_step": o["relative_prediction_error"] < 0.2,
    }
    if "relative_rms" in o:
        run.checks["procrustes_below_0.1_diameter"] = o["relative_rms"] < 0.1
    run.summary = (
        f"stress {o['final_stress']:.3g}, prediction error {o['relative_prediction_error']:.3g} x step"
    )


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--report", help="write the JSON report to this file")
    common.add_argument("--stdout", action="store_true", help="also print the JSON report on stdout")

    p = argparse.ArgumentParser(prog="reality-forge", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("ingest", parents=[common], help="validate a clickstream log")
    s.add_argument("input")
    s.add_argument("--format", choices=clicklog.FORMATS)
    s.add_argument("--out", help="write the normalized log here")
    s.add_argument("--out-format", choices=clicklog.FORMATS)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic log")
    s.add_argument("--out", required=True)
    s.add_argument("--format", choices=clicklog.FORMATS)
    s.add_argument("--seed", type=int, default=0)
    d = clicklog.SyntheticConfig()
    s.add_argument("--mode", choices=clicklog.MODES, default=d.mode)
    s.add_argument("--streams", type=int, default=d.num_streams)
    s.add_argument("--length", type=int, default=d.stream_len)
    s.add_argument("--n", type=int, default=d.n)
    s.add_argument("--step", type=float, default=d.step)
    s.add_argument("--spread", type=float, default=d.spread)
    s.add_argument("--heading-spread", type=float, default=d.heading_spread)
    s.add_argument("--bins", type=int, default=d.bins_per_window)

    s = sub.add_parser("prespace", parents=[common], help="build the layered skeleton")
    s.add_argument("input")
    s.add_argument("--format", choices=clicklog.FORMATS)
    s.add_argument("--scheme", choices=prespace.SCHEMES, default="cosine")
    s.add_argument("--K", type=int, default=8)
    s.add_argument("--out", required=True)

    s = sub.add_parser("embed", parents=[common], help="embed a skeleton in spacetime")
    e = embedding.EmbedParams()
    s.add_argument("skeleton")
    s.add_argument("--out", required=True, help="coordinates CSV")
    s.add_argument("--sidecar", help="parameters JSON (default: OUT.json)")
    s.add_argument("--n", type=int, default=e.n)
    s.add_argument("--max-iters", type=int, default=e.max_iters)
    s.add_argument("--tol", type=float, default=e.tol)
    s.add_argument("--time-scale", type=float, default=e.time_scale)
    s.add_argument("--lambda", dest="temporal_stiffness", type=float, default=e.temporal_stiffness)
    s.add_argument("--seed", type=int, default=e.seed)
    s.add_argument("--n-init", type=int, default=e.n_init)
    s.add_argument("--init", choices=embedding.INIT_MODES, default=e.init)

    def grid_flags(s):
        s.add_argument("embedding", help="coordinates CSV (sidecar read from EMBEDDING.json if present)")
        s.add_argument("skeleton")
        s.add_argument("--cells", type=int, default=None)
        s.add_argument("--spacing", help="node spacing, one value or one per axis")
        s.add_argument("--margin", type=int, default=1)
        s.add_argument("--epsilon", type=float)

    s = sub.add_parser("geodesic", parents=[common], help="fit the metric and integrate a geodesic")
    grid_flags(s)
    s.add_argument("--x0")
    s.add_argument("--v0")
    s.add_argument("--stream", type=int)
    s.add_argument("--seq", type=int)
    s.add_argument("--steps", type=int, default=100)
    s.add_argument("--dt", type=float, default=0.1)
    s.add_argument("--out", required=True, help="path CSV")
    s.add_argument("--metric-out", help="metric field JSON")

    s = sub.add_parser("predict", parents=[common], help="predict held-out stream suffixes")
    grid_flags(s)
    s.add_argument("--holdout", type=int, default=1)
    s.add_argument("--dt", type=float, default=1.0)
    s.add_argument("--out", help="predictions CSV")

    s = sub.add_parser("probcheck", help="classical-model tests")
    acts = s.add_subparsers(dest="action", required=True, metavar="TEST")
    b = acts.add_parser("bell", parents=[common])
    for name in ("--p-ab", "--p-bc", "--p-ac"):
        b.add_argument(name, type=float, required=True)
    b.add_argument("--out")
    b = acts.add_parser("accardi", parents=[common])
    for name in ("--p", "--q", "--r"):
        b.add_argument(name, type=float, required=True)
    b.add_argument("--out")
    b = acts.add_parser("lp", parents=[common])
    b.add_argument("family", help="observable family JSON {T, n, cond, marg}")
    b.add_argument("--out")
    b = acts.add_parser("invariant", parents=[common])
    b.add_argument("--counts", help="counts JSON from the melucci subcommand")
    b.add_argument("--px", type=float)
    b.add_argument("--px-r", type=float)
    b.add_argument("--px-notr", type=float)
    b.add_argument("--pr", type=float)
    b.add_argument("--tol", type=float, help="classification tolerance (default 0, or 3 SE with --counts)")
    b.add_argument("--out")

    s = sub.add_parser("melucci", parents=[common], help="simulate the two-slit retrieval experiment")
    s.add_argument("--preset", choices=sorted(melucci.PRESETS))
    s.add_argument("--config", help="SourceConfig JSON")
    s.add_argument("--pR", type=float)
    s.add_argument("--pX-given-R", dest="pX_given_R", type=float)
    s.add_argument("--pX-given-notR", dest="pX_given_notR", type=float)
    s.add_argument("--delta", type=float)
    s.add_argument("--N", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="counts JSON")

    s = sub.add_parser("automaton", parents=[common], help="proposition logic of a Moore automaton")
    s.add_argument("--preset", choices=sorted(automaton.PRESETS))
    s.add_argument("--file")
    s.add_argument("--max-len", type=int, default=1)
    s.add_argument("--mode", choices=automaton.LOGIC_MODES, default="all_cells")
    s.add_argument("--verified", help="output symbol counted as verification (designated mode)")
    s.add_argument("--complementary", nargs=2, metavar=("W1", "W2"), help="comma-separated input words")
    s.add_argument("--out", help="poset JSON")

    s = sub.add_parser("rota", help="template matrices and spatialization")
    acts = s.add_subparsers(dest="action", required=True, metavar="ACTION")
    for name in ("template", "closure"):
        b = acts.add_parser(name, parents=[common])
        b.add_argument("dag", help="DAG JSON {m, edges}")
        b.add_argument("--out")
    b = acts.add_parser("propagate", parents=[common])
    b.add_argument("dag")
    b.add_argument("--weights", required=True, help="JSON weight matrix")
    b.add_argument("--signal", required=True, help="comma-separated input vector")
    b.add_argument("--layers", type=int, default=1)
    b.add_argument("--out")
    b = acts.add_parser("spatialize", parents=[common])
    b.add_argument("subspace", help="JSON list of square matrices")
    b.add_argument("--out")

    s = sub.add_parser("pipeline", parents=[common], help="run the full pipeline from a JSON config")
    s.add_argument("config")
    s.add_argument("--out", help="write the report here (same as --report)")
    return p


COMMANDS = {
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "prespace": cmd_prespace,
    "embed": cmd_embed,
    "geodesic": cmd_geodesic,
    "predict": cmd_predict,
    "probcheck": cmd_probcheck,
    "melucci": cmd_melucci,
    "automaton": cmd_automaton,
    "rota": cmd_rota,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    run = Run(args)
    try:
        with _thread_limit():
            COMMANDS[args.command](run, args)
        report = _dump(run.report())
        targets = {args.report} | ({args.out} if args.command == "pipeline" and args.out else set())
        for path in sorted(t for t in targets if t):
            _atomic_write(path, report)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"reality-forge: error: {exc}", file=sys.stderr)
        return 2
    except (RealityForgeError, OSError) as exc:
        print(f"reality-forge {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if args.stdout:
        sys.stdout.write(report)
    print(f"reality-forge {args.command}: {run.summary}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
