"""Command-line entry point: ``ensemble-seg {synth,fuse,postproc,eval,loss,render}``."""

from __future__ import annotations

import argparse
import dataclasses
import io
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import RunConfig, load_config
from .ensemble import fuse
from .errors import ConfigError, SegError
from .losses import basnet_hybrid_loss, blob_loss, ce_dice_loss
from .metrics import MetricReport, evaluate_case
from .nifti import atomic_write, case_id_from_path, read_nifti, write_nifti
from .postprocess import postprocess
from .render import render, write_ppm
from .synth import default_spec, derive_seed, make_case
from .volume import LabelVolume, ProbVolume, argmax_labels

log = logging.getLogger("ensemble_seg")

CSV_HEADER = "case_id,region,lesion_wise_dice,dice,lesion_wise_hd95,hd95,tp,fp,fn"
SUMMARY_ID = "mean"


def _map(fn, items, workers: int):
    """Ordered map, in a process pool when ``workers > 1``."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def _read_labels(path: Path, n_classes: int) -> LabelVolume:
    _, vol = read_nifti(path, n_classes)
    if not isinstance(vol, LabelVolume):
        raise SegError(f"{path}: expected a uint8 label volume")
    return vol


def _read_probs(path: Path) -> ProbVolume:
    _, vol = read_nifti(path)
    if not isinstance(vol, ProbVolume):
        raise SegError(f"{path}: expected a 4D float32 probability volume")
    return vol


def _list_cases(directory: Path) -> dict[str, Path]:
    return {
        case_id_from_path(p): p
        for p in sorted(directory.iterdir())
        if p.is_file() and (p.name.endswith(".nii") or p.name.endswith(".nii.gz"))
    }


def _fmt(x: float) -> str:
    return f"{x:.6f}"


# -- manifest ---------------------------------------------------------------


def load_manifest(path: Path) -> list[dict]:
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, list):
        raise ConfigError(f"{path}: manifest must be a JSON list of cases")
    base = path.parent
    cases = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise ConfigError(f"manifest[{i}] must be an object", field=f"manifest[{i}]")
        unknown = set(item) - {"case_id", "members", "gt"}
        if unknown:
            raise ConfigError(f"manifest[{i}]: unknown field {sorted(unknown)[0]}", field=sorted(unknown)[0])
        for key in ("case_id", "members"):
            if key not in item:
                raise ConfigError(f"manifest[{i}]: missing field {key}", field=key)
        members = item["members"]
        if not isinstance(members, list) or not members:
            raise ConfigError(f"manifest[{i}]: members must be a non-empty list", field="members")
        cases.append(
            {
                "case_id": str(item["case_id"]),
                "members": [str(base / m) for m in members],
                "gt": str(base / item["gt"]) if item.get("gt") else None,
            }
        )
    return cases


# -- per-case workers (top level so they pickle) -----------------------------


def _fuse_case(job) -> str | None:
    case, out_dir = job
    try:
        fused = fuse(_read_probs(Path(p)) for p in case["members"])
        labels = argmax_labels(fused)
        meta = dataclasses.replace(fused.meta, case_id=case["case_id"])
        write_nifti(ProbVolume(meta, fused.probs), Path(out_dir) / "probs" / f"{case['case_id']}.nii.gz")
        write_nifti(LabelVolume(meta, labels.voxels, labels.n_classes), Path(out_dir) / f"{case['case_id']}.nii.gz")
    except (SegError, OSError) as exc:
        return f"case {case['case_id']}: {exc}"
    return None


def _postproc_case(job) -> str | None:
    src, dst, cfg = job
    try:
        vol = _read_labels(Path(src), cfg.n_classes)
        write_nifti(postprocess(vol, cfg.postprocess), Path(dst))
    except (SegError, OSError) as exc:
        return f"{src}: {exc}"
    return None


def _eval_case(job) -> tuple[str, list[MetricReport] | None, str | None]:
    case_id, pred_path, gt_path, cfg = job
    try:
        pred = _read_labels(Path(pred_path), cfg.n_classes)
        gt = _read_labels(Path(gt_path), cfg.n_classes)
        return case_id, evaluate_case(pred, gt, cfg.regions, cfg.lesionwise, case_id), None
    except (SegError, OSError) as exc:
        return case_id, None, f"case {case_id}: {exc}"


# -- commands ---------------------------------------------------------------


def cmd_fuse(manifest: Path, out_dir: Path, cfg: RunConfig) -> int:
    cases = load_manifest(manifest)
    errors = [e for e in _map(_fuse_case, [(c, str(out_dir)) for c in cases], cfg.workers) if e]
    for e in errors:
        log.error(e)
    return 1 if errors else 0


def cmd_postproc(src: Path, dst: Path, cfg: RunConfig) -> int:
    if src.is_dir():
        jobs = [(str(p), str(dst / p.name), cfg) for p in _list_cases(src).values()]
        if not jobs:
            log.error("%s: no NIfTI files found", src)
            return 1
    else:
        jobs = [(str(src), str(dst), cfg)]
    errors = [e for e in _map(_postproc_case, jobs, cfg.workers) if e]
    for e in errors:
        log.error(e)
    return 1 if errors else 0


def format_report(reports: list[MetricReport], regions) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    rows = sorted(reports, key=lambda r: (r.case_id, [g.name for g in regions].index(r.region)))
    for r in rows:
        buf.write(
            ",".join(
                [r.case_id, r.region, _fmt(r.lesion_wise_dice), _fmt(r.dice), _fmt(r.lesion_wise_hd95), _fmt(r.hd95)]
                + [str(r.tp), str(r.fp), str(r.fn)]
            )
            + "\n"
        )
    for region in regions:
        group = [r for r in reports if r.region == region.name]
        if not group:
            continue
        n = len(group)
        means = [
            sum(getattr(r, f) for r in group) / n for f in ("lesion_wise_dice", "dice", "lesion_wise_hd95", "hd95")
        ]
        sums = [sum(getattr(r, f) for r in group) for f in ("tp", "fp", "fn")]
        buf.write(",".join([SUMMARY_ID, region.name] + [_fmt(m) for m in means] + [str(s) for s in sums]) + "\n")
    return buf.getvalue()


def cmd_eval(pred_dir: Path, gt_dir: Path, out_csv: Path, cfg: RunConfig) -> int:
    preds, gts = _list_cases(pred_dir), _list_cases(gt_dir)
    matched = sorted(set(preds) & set(gts))
    for cid in sorted(set(preds) - set(gts)):
        log.warning("case %s has no ground truth; skipped", cid)
    for cid in sorted(set(gts) - set(preds)):
        log.warning("case %s has no prediction; skipped", cid)
    if not matched:
        log.error("no cases matched between %s and %s", pred_dir, gt_dir)
        return 1
    jobs = [(cid, str(preds[cid]), str(gts[cid]), cfg) for cid in matched]
    reports, failed = [], False
    for cid, rep, err in _map(_eval_case, jobs, cfg.workers):
        if err:
            log.error(err)
            failed = True
        else:
            reports.extend(rep)
    atomic_write(out_csv, format_report(reports, cfg.regions).encode("ascii"))
    return 1 if failed else 0


def loss_report(pred: ProbVolume, gt: LabelVolume, cfg: RunConfig) -> dict:
    return {
        "case_id": gt.meta.case_id or pred.meta.case_id,
        "ce_dice": ce_dice_loss(pred, gt).to_dict(),
        "basnet_hybrid": basnet_hybrid_loss(pred, gt, cfg.msssim).to_dict(),
        "blob": blob_loss(pred, gt, cfg.blob, cfg.msssim).to_dict(),
    }


def cmd_loss(pred_path: Path, gt_path: Path, cfg: RunConfig, out: Path | None = None) -> int:
    pred = _read_probs(pred_path)
    gt = _read_labels(gt_path, cfg.n_classes)
    text = json.dumps(loss_report(pred, gt, cfg), sort_keys=True)
    if out is not None:
        atomic_write(out, (text + "\n").encode())
    print(text)
    return 0


def cmd_synth(out_dir: Path, cases: int, seed: int, dims, members: int, noise: float) -> int:
    manifest = []
    for j in range(cases):
        case_id = f"case_{j:03d}"
        spec = default_spec(derive_seed(seed, j), dims, members, noise, case_id)
        gt, probs = make_case(spec)
        write_nifti(gt, out_dir / "gt" / f"{case_id}.nii.gz")
        paths = []
        for m, p in enumerate(probs):
            rel = f"members/{case_id}_m{m}.nii.gz"
            write_nifti(p, out_dir / rel)
            paths.append(rel)
        manifest.append({"case_id": case_id, "members": paths, "gt": f"gt/{case_id}.nii.gz"})
    atomic_write(out_dir / "manifest.json", (json.dumps(manifest, indent=2) + "\n").encode())
    return 0


def cmd_render(paths: list[Path], axis: str, index: int, out: Path, n_classes: int) -> int:
    vols = [_read_labels(p, n_classes) for p in paths]
    write_ppm(render(vols, axis, index), out)
    return 0


# -- argument parsing -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ensemble-seg", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help):
        p.add_argument("--config", type=Path, help="JSON run configuration")
        p.add_argument("--workers", type=int, help="worker processes (overrides config)")
        p.add_argument("--out", type=Path, required=out_help is not None, help=out_help)

    p = sub.add_parser("synth", help="write deterministic synthetic cases and a manifest")
    common(p, "output directory")
    p.add_argument("--cases", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dims", type=int, nargs=3, default=(64, 64, 64))
    p.add_argument("--members", type=int, default=3)
    p.add_argument("--noise", type=float, default=0.0)

    p = sub.add_parser("fuse", help="average member probabilities per case")
    common(p, "output directory (labels; fused probabilities under probs/)")
    p.add_argument("manifest", type=Path)

    p = sub.add_parser("postproc", help="size filtering and smoothing of label volumes")
    common(p, "output file, or directory when the input is a directory")
    p.add_argument("input", type=Path)

    p = sub.add_parser("eval", help="volumetric and lesion-wise metrics to CSV")
    common(p, "output CSV path")
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--gt", type=Path, required=True)

    p = sub.add_parser("loss", help="evaluate the three training losses, print JSON")
    common(p, None)
    p.add_argument("--pred", type=Path, required=True, help="4D float32 probability volume")
    p.add_argument("--gt", type=Path, required=True, help="uint8 label volume")

    p = sub.add_parser("render", help="render one slice of 1-3 label volumes to PPM")
    common(p, "output .ppm path")
    p.add_argument("labels", type=Path, nargs="+")
    p.add_argument("--axis", default="z", choices=["x", "y", "z", "sagittal", "coronal", "axial"])
    p.add_argument("--index", type=int, required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s: %(message)s", stream=sys.stderr
    )
    try:
        cfg = load_config(args.config)
        if args.workers is not None:
            cfg = dataclasses.replace(cfg, workers=args.workers)
        if args.command == "synth":
            return cmd_synth(args.out, args.cases, args.seed, tuple(args.dims), args.members, args.noise)
        if args.command == "fuse":
            return cmd_fuse(args.manifest, args.out, cfg)
        if args.command == "postproc":
            return cmd_postproc(args.input, args.out, cfg)
        if args.command == "eval":
            return cmd_eval(args.pred, args.gt, args.out, cfg)
        if args.command == "loss":
            return cmd_loss(args.pred, args.gt, cfg, args.out)
        if args.command == "render":
            return cmd_render(args.labels, args.axis, args.index, args.out, cfg.n_classes)
    except ConfigError as exc:
        log.error("config error%s: %s", f" in field {exc.field}" if exc.field else "", exc)
        return 1
    except (SegError, OSError, IndexError, ValueError) as exc:
        log.error("%s", exc)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
