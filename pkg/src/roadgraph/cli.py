"""Command-line interface.

Subcommands: render, extract, evaluate, route, pipeline, gen-synthetic.

Exit codes: 0 success, 2 usage or config error, 3 unmet precondition,
4 pipeline stage failure, 5 no result (e.g. no route).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    apls_config,
    city_config,
    clean_config,
    load_config,
    oracle_noise,
    refine_config,
    resolved,
    speed_config,
    speed_table,
    topo_config,
)
from .geojson import GeoJSONError, load_geojson, save_geojson
from .graph import GeoTransform, GraphError, RoadGraph
from .masks import (
    MaskError,
    MaskPreconditionError,
    RasterMask,
    export_png_bands,
    load_mask,
    oracle_predict,
    render_binary_mask,
    render_continuous_mask,
    render_multiclass_mask,
    save_mask,
)
from .metrics.apls import AplsDomainError, apls, apls_directional
from .metrics.topo import topo
from .routing import NoPath, NodeNotFoundError, graph_stats, shortest_route
from .speed import label_speeds
from .speed_infer import infer_speeds
from .synth import gen_synthetic_city, scene_transform
from .tiler import MaskDirectorySource, OracleSource, StageError, extract_graph, run_city_scale

log = logging.getLogger("roadgraph")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PRECONDITION = 3
EXIT_STAGE = 4
EXIT_NO_RESULT = 5

THREADS_ENV = "ROADGRAPH_THREADS"


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# report helpers
# ---------------------------------------------------------------------------


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif not isinstance(v, (list, tuple)):
            out[key] = v
    return out


def write_json(path, doc) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, default=_json_default)
    return str(path)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def write_csv(path, rows: list[dict]) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fields: list[str] = []
    for r in rows:
        for k in r:
            if k not in fields:
                fields.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow(r)
    return str(path)


def _load_graph(path) -> RoadGraph:
    try:
        return load_geojson(path)
    except FileNotFoundError as exc:
        raise CliError(EXIT_PRECONDITION, f"{path}: file not found") from exc
    except (GeoJSONError, GraphError) as exc:
        raise CliError(EXIT_PRECONDITION, str(exc)) from exc


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise CliError(EXIT_USAGE, f"{THREADS_ENV}={env!r} is not an integer") from exc
        if n < 1:
            raise CliError(EXIT_USAGE, f"{THREADS_ENV} must be >= 1")
        return n
    return 1


def _config(args, overrides: dict | None = None) -> dict:
    try:
        return load_config(getattr(args, "config", None), overrides)
    except FileNotFoundError as exc:
        raise CliError(EXIT_USAGE, f"config file not found: {exc.filename}") from exc
    except ConfigError as exc:
        raise CliError(EXIT_USAGE, f"config error at {exc}") from exc


def _labels_transform(graph: RoadGraph, pixel_size: float, pad_m: float) -> GeoTransform:
    if graph.transform is not None:
        return graph.transform
    bb = graph.bbox()
    if bb is None:
        raise CliError(EXIT_PRECONDITION, "labels contain no edges and carry no transform")
    return GeoTransform.covering(bb[0] - pad_m, bb[1] - pad_m, bb[2] + pad_m, bb[3] + pad_m, pixel_size)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_render(args) -> int:
    cfg = _config(args)
    gsd = args.gsd if args.gsd is not None else cfg["render"]["pixel_size"]
    hw = args.halfwidth if args.halfwidth is not None else cfg["render"]["halfwidth_m"]
    graph = label_speeds(_load_graph(args.labels), speed_table(cfg))
    transform = _labels_transform(graph, gsd, 2 * hw)
    try:
        if args.format == "binary":
            mask = render_binary_mask(graph, transform, hw)
        elif args.format == "continuous":
            mask = render_continuous_mask(graph, transform, hw)
        else:
            mask = render_multiclass_mask(graph, transform, hw)
    except MaskPreconditionError as exc:
        raise CliError(EXIT_PRECONDITION, str(exc)) from exc
    except ValueError as exc:
        raise CliError(EXIT_USAGE, str(exc)) from exc
    out = Path(args.out)
    path = out / f"mask_{args.format}.npy"
    save_mask(mask, path)
    written = [str(path)]
    if args.png:
        written += export_png_bands(mask, out / f"mask_{args.format}")
    print(json.dumps({"bands": mask.bands, "shape": list(mask.shape), "files": written}))
    return EXIT_OK


def _extract_source(args, cfg) -> tuple[RasterMask, RoadGraph | None]:
    if args.mask:
        try:
            return load_mask(args.mask), None
        except FileNotFoundError as exc:
            raise CliError(EXIT_PRECONDITION, f"mask not found: {args.mask}") from exc
        except MaskError as exc:
            raise CliError(EXIT_PRECONDITION, str(exc)) from exc
    if not args.labels:
        raise CliError(EXIT_USAGE, "extract needs --mask or --labels")
    truth = label_speeds(_load_graph(args.labels), speed_table(cfg))
    transform = _labels_transform(truth, cfg["render"]["pixel_size"], 10.0)
    try:
        return oracle_predict(truth, transform, oracle_noise(cfg), cfg["render"]["halfwidth_m"]), truth
    except MaskPreconditionError as exc:
        raise CliError(EXIT_PRECONDITION, str(exc)) from exc


def cmd_extract(args) -> int:
    over: dict = {}
    if args.noise_sigma is not None or args.dropout_prob is not None or args.seed is not None:
        over["oracle"] = {}
        if args.noise_sigma is not None:
            over["oracle"]["gaussian_sigma"] = args.noise_sigma
        if args.dropout_prob is not None:
            over["oracle"]["dropout_prob"] = args.dropout_prob
            over["oracle"].setdefault("dropout_len_m", 10.0)
        if args.seed is not None:
            over["oracle"]["seed"] = args.seed
    cfg = _config(args, over)
    mask, truth = _extract_source(args, cfg)
    clean = clean_config(cfg, args.city_scale)
    timings: dict[str, float] = {}
    try:
        graph, _ = extract_graph(mask, refine_config(cfg), clean, timings)
        if not args.no_speed and graph.edges:
            t0 = time.perf_counter()
            try:
                graph = infer_speeds(graph, mask, config=speed_config(cfg))
            except Exception as exc:
                raise StageError("speed", exc) from exc
            timings["speed"] = time.perf_counter() - t0
    except StageError as exc:
        raise CliError(EXIT_STAGE, str(exc)) from exc
    out = Path(args.out)
    save_geojson(graph, out / "graph.geojson")
    report = {
        "command": "extract",
        "mode": "city-scale" if args.city_scale else "chip",
        "thresholds": {
            "min_subgraph_m": clean.min_subgraph_m,
            "max_spur_m": clean.max_spur_m,
            "max_terminal_gap_m": clean.max_terminal_gap_m,
            "threshold": cfg["refine"]["threshold"],
            "smooth_sigma_m": cfg["refine"]["smooth_sigma_m"],
            "min_area_m2": cfg["refine"]["min_area_m2"],
        },
        "speed": not args.no_speed,
        "timings_s": timings,
        "stats": graph_stats(graph).as_dict(),
        "config": resolved(cfg),
    }
    if truth is not None:
        report["metrics"] = _metrics(truth, graph, cfg)
    write_json(out / "report.json", report)
    write_csv(out / "report.csv", [_flatten({k: v for k, v in report.items() if k != "config"})])
    if not args.no_figures:
        from .plotting import plot_graph, plot_speed_histogram, plot_timings

        plot_graph(graph, out / "graph.png", truth, title="extracted graph")
        plot_speed_histogram(graph, out / "speeds.png", truth)
        plot_timings(timings, out / "timings.png")
    print(json.dumps({"stats": report["stats"], "timings_s": timings}))
    return EXIT_OK


def _disjoint(a: RoadGraph, b: RoadGraph, slack: float) -> bool:
    ba, bb = a.bbox(), b.bbox()
    if ba is None or bb is None:
        return False
    return ba[2] + slack < bb[0] or bb[2] + slack < ba[0] or ba[3] + slack < bb[1] or bb[3] + slack < ba[1]


def _metrics(truth: RoadGraph, prop: RoadGraph, cfg: dict, weights=("length", "time"), require_time=False) -> dict:
    out: dict = {}
    acl = apls_config(cfg, "length")
    if _disjoint(truth, prop, acl.buffer_m):
        log.warning("truth and proposal bounding boxes are disjoint; scores set to 0")
        out["warning"] = "disjoint frames"
        out.update(apls_length=0.0, apls_time=0.0, topo={"precision": 0.0, "recall": 0.0, "f1": 0.0})
        return out
    for w in weights:
        ac = apls_config(cfg, w)
        if w == "time" and not (truth.has_times() and prop.has_times()):
            if require_time:
                raise CliError(EXIT_PRECONDITION, "weight=time needs travel_time_s on every edge of both graphs")
            out["apls_time"] = None
            continue
        try:
            fwd = apls_directional(truth, prop, ac)
            rev = apls_directional(prop, truth, ac)
            out[f"apls_{w}"] = apls(truth, prop, ac)
            out[f"apls_{w}_directional"] = {"truth_to_proposal": fwd, "proposal_to_truth": rev}
        except AplsDomainError as exc:
            raise CliError(EXIT_PRECONDITION, str(exc)) from exc
    out["topo"] = topo(truth, prop, topo_config(cfg)).as_dict()
    out["truth_stats"] = graph_stats(truth).as_dict()
    out["proposal_stats"] = graph_stats(prop).as_dict()
    return out


def _pairs(truth: str, proposal: str) -> list[tuple[str, str, str]]:
    """Region name, truth file, proposal file; directories are matched by file name."""
    if os.path.isdir(truth) != os.path.isdir(proposal):
        raise CliError(EXIT_USAGE, "--truth and --proposal must both be files or both directories")
    if not os.path.isdir(truth):
        return [(Path(truth).stem, truth, proposal)]
    names = sorted(f for f in os.listdir(truth) if f.endswith((".geojson", ".json")))
    pairs = []
    for f in names:
        p = os.path.join(proposal, f)
        if not os.path.exists(p):
            raise CliError(EXIT_PRECONDITION, f"no proposal for region {f}")
        pairs.append((Path(f).stem, os.path.join(truth, f), p))
    if not pairs:
        raise CliError(EXIT_PRECONDITION, f"no GeoJSON files in {truth}")
    return pairs


def cmd_evaluate(args) -> int:
    over: dict = {"apls": {}, "topo": {}}
    if args.buffer is not None:
        over["apls"]["buffer_m"] = args.buffer
    if args.large_mode:
        over["apls"]["large_mode"] = True
    if args.topo_hole is not None:
        over["topo"]["hole_m"] = args.topo_hole
    if args.topo_seeds is not None:
        over["topo"]["n_seeds"] = args.topo_seeds
    cfg = _config(args, over)
    weights = ("length", "time") if args.weight == "both" else (args.weight,)
    regions = []
    for name, t, p in _pairs(args.truth, args.proposal):
        m = _metrics(_load_graph(t), _load_graph(p), cfg, weights, require_time=args.weight == "time")
        regions.append({"region": name, **m})

    def mean(key):
        vals = [r.get(key) for r in regions]
        vals = [v for v in vals if v is not None]
        return float(np.mean(vals)) if vals else None

    report = {
        "apls_length": mean("apls_length") if "length" in weights else None,
        "apls_time": mean("apls_time") if "time" in weights else None,
        "topo": {k: float(np.mean([r["topo"][k] for r in regions])) for k in ("precision", "recall", "f1")},
        "regions": regions,
        "config": {"apls": cfg["apls"], "topo": cfg["topo"], "weight": args.weight},
    }
    if args.out:
        out = Path(args.out)
        write_json(out / "metrics.json", report)
        rows = []
        for r in regions:
            row = {"region": r["region"], "apls_length": r.get("apls_length"), "apls_time": r.get("apls_time")}
            row.update({f"topo_{k}": v for k, v in r["topo"].items() if k in ("precision", "recall", "f1")})
            rows.append(row)
        write_csv(out / "metrics.csv", rows)
        if not args.no_figures and len(regions) == 1:
            from .plotting import plot_graph

            plot_graph(_load_graph(args.proposal), out / "overlay.png", _load_graph(args.truth), title=regions[0]["region"])
    print(json.dumps({k: report[k] for k in ("apls_length", "apls_time", "topo")}, default=_json_default))
    return EXIT_OK


def cmd_route(args) -> int:
    graph = _load_graph(args.graph)
    try:
        res = shortest_route(graph, args.src, args.dst, args.by)
    except NodeNotFoundError as exc:
        raise CliError(EXIT_USAGE, f"unknown node id: {exc.args[0]}") from exc
    if isinstance(res, NoPath):
        flags = f" ({'; '.join(res.flags)})" if res.flags else ""
        raise CliError(EXIT_NO_RESULT, f"no path from {args.src} to {args.dst} by {args.by}{flags}")
    summary = {
        "src": args.src,
        "dst": args.dst,
        "by": args.by,
        "nodes": res.nodes,
        "length_m": res.length_m,
        "travel_time_s": res.travel_time_s,
    }
    if args.out:
        coords = res.geometry(graph).tolist() if res.edges else [graph.xy(args.src).tolist()] * 2
        doc = {
            "type": "FeatureCollection",
            "frame": {"type": "metric"},
            "features": [
                {"type": "Feature", "geometry": {"type": "LineString", "coordinates": coords}, "properties": summary}
            ],
        }
        write_json(args.out, doc)
    print(f"length_m={res.length_m:.3f} travel_time_s={'' if res.travel_time_s is None else f'{res.travel_time_s:.3f}'}")
    print(json.dumps(summary))
    return EXIT_OK


def cmd_pipeline(args) -> int:
    over: dict = {"tiler": {}}
    if args.folds is not None:
        over["tiler"]["folds"] = args.folds
    threads = _threads(args)
    over["tiler"]["threads"] = threads
    if args.out:
        over["output"] = {"dir": args.out}
    cfg = _config(args, over)
    scene = cfg["scene"]
    if args.dry_run:
        print(json.dumps({"config": "ok", "resolved": resolved(cfg)}, default=_json_default))
        return EXIT_OK
    if scene["labels"]:
        truth = label_speeds(_load_graph(scene["labels"]), speed_table(cfg))
        transform = _labels_transform(truth, cfg["render"]["pixel_size"], 10.0)
    else:
        truth = gen_synthetic_city(scene["extent_m"], scene["density"], scene["seed"])
        transform = scene_transform(scene["extent_m"], cfg["render"]["pixel_size"])
    if args.mask_dir:
        source = MaskDirectorySource(args.mask_dir, transform)
    else:
        source = OracleSource(truth, transform, oracle_noise(cfg), cfg["render"]["halfwidth_m"])
    ccfg = city_config(cfg, scene["city_scale"], keep_mask=cfg["output"]["write_masks"] or cfg["output"]["figures"])
    try:
        result = run_city_scale(source, ccfg)
    except StageError as exc:
        raise CliError(EXIT_STAGE, str(exc)) from exc
    out = Path(cfg["output"]["dir"])
    save_geojson(result.graph, out / "graph.geojson")
    save_geojson(truth, out / "truth.geojson")
    report = {
        "command": "pipeline",
        "windows": result.n_windows,
        "coverage": result.coverage.as_dict(),
        "timings_s": result.timings,
        "stats": graph_stats(result.graph).as_dict(),
        "metrics": _metrics(truth, result.graph, cfg) if result.graph.edges or truth.edges else None,
        "config": resolved(cfg),
    }
    write_json(out / "report.json", report)
    write_csv(out / "report.csv", [_flatten({k: v for k, v in report.items() if k != "config"})])
    if cfg["output"]["write_masks"] and result.mask is not None:
        save_mask(result.mask, out / "mask_stitched.npy")
    if cfg["output"]["figures"]:
        from .plotting import plot_graph, plot_mask, plot_speed_histogram, plot_timings

        plot_graph(result.graph, out / "graph.png", truth, title="extracted graph")
        plot_speed_histogram(result.graph, out / "speeds.png", truth)
        plot_timings(result.timings, out / "timings.png")
        if result.refined is not None:
            plot_mask(result.refined.data[0].astype(np.float32), out / "refined_mask.png", "refined mask")
    m = report["metrics"] or {}
    print(json.dumps({"apls_length": m.get("apls_length"), "apls_time": m.get("apls_time"), "stats": report["stats"]}))
    return EXIT_OK


def cmd_gen_synthetic(args) -> int:
    g = gen_synthetic_city(args.extent, args.density, args.seed)
    if args.pixel_size:
        g = RoadGraph(g.nodes, g.edges, scene_transform(args.extent, args.pixel_size))
    save_geojson(g, args.out)
    print(json.dumps(graph_stats(g).as_dict()))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="roadgraph", description="Road graph extraction, speed inference and evaluation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("render", help="rasterize labels into training masks")
    r.add_argument("--labels", required=True, help="label GeoJSON")
    r.add_argument("--format", choices=["binary", "continuous", "multiclass"], default="multiclass")
    r.add_argument("--gsd", type=float, help="meters per pixel (default from config)")
    r.add_argument("--halfwidth", type=float, help="road halfwidth in meters (default 2)")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--png", action="store_true", help="also write one PNG per band")
    r.add_argument("--config")
    r.set_defaults(func=cmd_render)

    e = sub.add_parser("extract", help="mask -> road graph with speeds")
    src = e.add_mutually_exclusive_group(required=True)
    src.add_argument("--mask", help="prediction mask (.npy with .json sidecar)")
    src.add_argument("--labels", help="label GeoJSON rendered through the oracle segmenter")
    e.add_argument("--noise-sigma", type=float)
    e.add_argument("--dropout-prob", type=float)
    e.add_argument("--seed", type=int)
    e.add_argument("--city-scale", action="store_true", help="use the city-scale subgraph threshold")
    e.add_argument("--no-speed", action="store_true", help="skip speed inference")
    e.add_argument("--no-figures", action="store_true")
    e.add_argument("--out", required=True)
    e.add_argument("--config")
    e.set_defaults(func=cmd_extract)

    v = sub.add_parser("evaluate", help="APLS and TOPO between truth and proposal")
    v.add_argument("--truth", required=True, help="GeoJSON file or directory of regions")
    v.add_argument("--proposal", required=True, help="GeoJSON file or directory of regions")
    v.add_argument("--weight", choices=["length", "time", "both"], default="both")
    v.add_argument("--buffer", type=float, help="APLS snapping buffer in meters")
    v.add_argument("--large-mode", action="store_true", help="no midpoints, capped control nodes")
    v.add_argument("--topo-hole", type=float, help="TOPO hole size in meters (15 for comparison mode)")
    v.add_argument("--topo-seeds", type=int)
    v.add_argument("--out", help="directory for metrics.json / metrics.csv")
    v.add_argument("--no-figures", action="store_true")
    v.add_argument("--config")
    v.set_defaults(func=cmd_evaluate)

    rt = sub.add_parser("route", help="shortest route by length or travel time")
    rt.add_argument("--graph", required=True)
    rt.add_argument("--src", type=int, required=True)
    rt.add_argument("--dst", type=int, required=True)
    rt.add_argument("--by", choices=["length", "time"], default="time")
    rt.add_argument("--out", help="route GeoJSON")
    rt.set_defaults(func=cmd_route)

    pl = sub.add_parser("pipeline", help="full large-image run from a config file")
    pl.add_argument("--config")
    pl.add_argument("--folds", type=int, help="fold predictions merged per window")
    pl.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
    pl.add_argument("--mask-dir", help="external per-window masks instead of the oracle")
    pl.add_argument("--out", help="output directory (overrides output.dir)")
    pl.add_argument("--dry-run", action="store_true", help="validate the config and exit")
    pl.set_defaults(func=cmd_pipeline)

    g = sub.add_parser("gen-synthetic", help="write a random road network as GeoJSON")
    g.add_argument("--extent", type=float, default=2000.0, help="scene side in meters")
    g.add_argument("--density", type=float, default=5.0, help="lattice lines per km")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--pixel-size", type=float, help="attach a raster transform at this GSD")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_synthetic)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", None) is not None and args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
