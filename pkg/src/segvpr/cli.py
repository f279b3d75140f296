"""Command-line interface for the segment retrieval pipeline.

Subcommands cover the whole flow: build-vocab, describe, index, filter,
query, eval, plus the patchify/synth/ablate study drivers. A JSON config
file can mirror any flag; explicit flags win. All emitted reports are
deterministic byte-for-byte for fixed seeds (keys sorted, no timestamps).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import evalbench, pipeline
from .aggregate import DescriptorSet, METHODS
from .dimred import load_pca, pca_fit, save_pca
from .filtering import cull_by_iou
from .retrieval import (
    ImageRanking,
    RANKING_METHODS,
    build_index,
    load_index,
    rank,
    save_index,
    search,
)
from .seggraph import SuperSegmentMaskSet
from .tensor_io import (
    DatasetManifest,
    ManifestEntry,
    SegmentMaskSet,
    read_manifest,
    read_masks,
    read_tensor,
    write_manifest,
    write_masks,
    write_tensor,
)
from .vocab import kmeans_fit, load_vocabulary, sample_for_vocab, save_vocabulary


def _write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_build_vocab(args) -> int:
    manifest = read_manifest(args.manifest)
    sample = sample_for_vocab(
        manifest, split=args.split, per_image=args.per_image, seed=args.seed
    )
    vocab = kmeans_fit(
        sample, num_clusters=args.clusters, seed=args.seed, source=args.split
    )
    save_vocabulary(vocab, args.out)
    print(f"vocabulary: {vocab.num_clusters} clusters, dim {vocab.dim} -> {args.out}")
    return 0


def cmd_describe(args) -> int:
    manifest = read_manifest(args.manifest)
    entries = (
        manifest.reference_entries
        if args.split == "reference"
        else manifest.query_entries
    )
    vocab = load_vocabulary(args.vocab) if args.vocab else None
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    descriptor_sets, ss_masks = pipeline.describe_entries(
        manifest,
        entries,
        order=args.order,
        method=args.method,
        vocab=vocab,
        gem_p=args.gem_p,
        patch=args.patch,
    )
    for dset in descriptor_sets:
        _write_descriptor_set(out_dir, dset, ss_masks[dset.image_id])
    meta = {
        "method": args.method,
        "order": args.order,
        "clusters": vocab.num_clusters if vocab else None,
        "gem_p": args.gem_p,
        "patch": args.patch,
        "split": args.split,
    }
    _write_json(out_dir / "describe.json", meta)
    print(f"described {len(descriptor_sets)} images -> {out_dir}")
    return 0


def _write_descriptor_set(
    out_dir: Path, dset: DescriptorSet, ss: SuperSegmentMaskSet
) -> None:
    write_tensor(out_dir / f"{dset.image_id}.desc.svt", dset.vectors)
    _write_json(
        out_dir / f"{dset.image_id}.desc.json",
        {
            "image_id": dset.image_id,
            "segment_ids": list(map(int, dset.segment_ids)),
            "order": dset.order,
            "method": dset.method,
        },
    )
    grid_h, grid_w = 1, ss.masks.shape[1]
    # grid masks are stored as a mask file over the flattened feature grid
    write_masks(
        out_dir / f"{dset.image_id}.ssmask.svm",
        SegmentMaskSet.encode(ss.masks, grid_h, grid_w, image_id=dset.image_id),
    )


def _read_descriptor_dir(desc_dir: Path) -> tuple[list[DescriptorSet], dict]:
    meta_path = desc_dir / "describe.json"
    meta = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.exists() else {}
    sets = []
    for desc_path in sorted(desc_dir.glob("*.desc.svt")):
        doc = json.loads(
            desc_path.with_suffix(".json").read_text(encoding="utf-8")
        )
        vectors = read_tensor(desc_path)
        sets.append(
            DescriptorSet(
                vectors=vectors,
                image_id=doc["image_id"],
                segment_ids=[int(s) for s in doc["segment_ids"]],
                order=int(doc["order"]),
                method=doc["method"],
            )
        )
    return sets, meta


def cmd_index(args) -> int:
    sets, meta = _read_descriptor_dir(Path(args.desc_dir))
    if args.pca_dim:
        stacked = np.concatenate([s.vectors for s in sets], axis=0)
        model = pca_fit(stacked, args.pca_dim, whiten=args.pca_whiten)
        save_pca(model, Path(str(args.out) + ".pca"))
        sets = pipeline.apply_pca(sets, model)
        meta = dict(meta, pca_dim=args.pca_dim, pca_whiten=args.pca_whiten)
    index = build_index(sets)
    save_index(index, args.out)
    _write_json(Path(args.out).with_suffix(".meta.json"), meta)
    print(f"index: {index.size} descriptors, dim {index.dim} -> {args.out}")
    return 0


def cmd_filter(args) -> int:
    desc_dir = Path(args.desc_dir)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sets, meta = _read_descriptor_dir(desc_dir)
    reports = {}
    total_before = total_after = 0
    for dset in sets:
        ss = read_masks(desc_dir / f"{dset.image_id}.ssmask.svm")
        masks = ss.decode()
        report = cull_by_iou(masks, args.iou_threshold)
        keep = report.kept_ids  # row indices into this image's descriptors
        filtered = DescriptorSet(
            vectors=dset.vectors[keep],
            image_id=dset.image_id,
            segment_ids=[dset.segment_ids[i] for i in keep],
            order=dset.order,
            method=dset.method,
        )
        _write_descriptor_set(
            out_dir,
            filtered,
            SuperSegmentMaskSet(masks=masks[keep], order=dset.order),
        )
        reports[dset.image_id] = json.loads(report.to_json())
        total_before += len(dset.segment_ids)
        total_after += len(keep)
    _write_json(
        out_dir / "describe.json", dict(meta, iou_threshold=args.iou_threshold)
    )
    if args.report:
        _write_json(
            Path(args.report),
            {
                "threshold": args.iou_threshold,
                "per_image": reports,
                "total_before": total_before,
                "total_after": total_after,
                "retention_ratio": (total_after / total_before) if total_before else 1.0,
            },
        )
    print(f"culled {total_before} -> {total_after} SuperSegments at iou {args.iou_threshold}")
    return 0


def cmd_query(args) -> int:
    index = load_index(args.index)
    sets, meta = _read_descriptor_dir(Path(args.desc_dir))
    pca_prefix = Path(str(args.index) + ".pca")
    if (pca_prefix.parent / f"{pca_prefix.name}.json").exists():
        sets = pipeline.apply_pca(sets, load_pca(pca_prefix))
    results = {}
    for dset in sets:
        hits = search(index, dset.vectors, args.k_prime)
        ranking = rank(hits, args.ranking)
        results[dset.image_id] = {
            "images": ranking.top(args.top_k),
            "scores": [round(float(s), 9) for s in ranking.scores[: args.top_k]],
        }
    _write_json(
        Path(args.out),
        {
            "results": results,
            "config": dict(
                meta, k_prime=args.k_prime, top_k=args.top_k, ranking=args.ranking
            ),
        },
    )
    print(f"queried {len(results)} images -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    doc = json.loads(Path(args.results).read_text(encoding="utf-8"))
    manifest = read_manifest(args.manifest)
    pairs = None
    if args.gt_pairs:
        pairs = json.loads(Path(args.gt_pairs).read_text(encoding="utf-8"))
    gt = evalbench.make_gt(manifest, mode=args.gt_mode, radius=args.radius, pairs=pairs)
    ks = [int(k) for k in args.ks.split(",")]
    rankings = {
        qid: ImageRanking(
            image_ids=entry["images"], scores=entry["scores"], method="loaded"
        )
        for qid, entry in doc["results"].items()
    }
    report = evalbench.recall_at_k(
        rankings,
        gt,
        ks,
        config=dict(
            doc.get("config", {}), gt_mode=args.gt_mode, radius=args.radius, ks=ks
        ),
    )
    Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
    if args.csv:
        Path(args.csv).write_text(report.to_csv(), encoding="utf-8")
    for k in ks:
        print(f"R@{k} = {report.recalls[k]:.4f}")
    return 0


def cmd_patchify(args) -> int:
    manifest = read_manifest(args.manifest)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    new_refs, new_queries = [], []
    for entries, new_entries in (
        (manifest.reference_entries, new_refs),
        (manifest.query_entries, new_queries),
    ):
        for entry in entries:
            src = read_masks(manifest.resolve(entry.mask_path))
            masks, _graph = pipeline.patchify(src.height, src.width, args.patch)
            mask_path = f"{entry.image_id}.patch{args.patch}.svm"
            write_masks(out_dir / mask_path, masks)
            new_entries.append(
                ManifestEntry(
                    image_id=entry.image_id,
                    mask_path=mask_path,
                    feature_path=str(
                        Path(manifest.resolve(entry.feature_path)).resolve()
                    ),
                    position=entry.position,
                    frame_index=entry.frame_index,
                )
            )
    new_manifest = DatasetManifest(
        name=f"{manifest.name}-patch{args.patch}",
        reference_entries=new_refs,
        query_entries=new_queries,
        root=out_dir,
    )
    write_manifest(out_dir / "manifest.json", new_manifest)
    print(f"patchified {len(new_refs) + len(new_queries)} images -> {out_dir}")
    return 0


def cmd_synth(args) -> int:
    spec = evalbench.SynthSpec(
        num_refs=args.num_refs,
        num_queries=args.num_queries,
        segments_per_image=args.segments_per_image,
        overlap_fraction=args.overlap_fraction,
        distractor_strength=args.distractor_strength,
        seed=args.seed,
    )
    manifest_path, _gt = evalbench.synth_generate(spec, args.out_dir)
    print(f"synthetic dataset -> {manifest_path}")
    return 0


def cmd_ablate(args) -> int:
    manifest = read_manifest(args.manifest)
    vocab = load_vocabulary(args.vocab) if args.vocab else None
    pairs = None
    if args.gt_pairs:
        pairs = json.loads(Path(args.gt_pairs).read_text(encoding="utf-8"))
    gt = evalbench.make_gt(manifest, mode=args.gt_mode, radius=args.radius, pairs=pairs)
    ks = [int(k) for k in args.ks.split(",")]
    orders = [int(o) for o in args.orders.split(",")]
    methods = args.methods.split(",")
    grid = []
    for method in methods:
        for order in orders:
            db_sets, _ = pipeline.describe_entries(
                manifest, manifest.reference_entries,
                order=order, method=method, vocab=vocab, gem_p=args.gem_p,
            )
            q_sets, _ = pipeline.describe_entries(
                manifest, manifest.query_entries,
                order=order, method=method, vocab=vocab, gem_p=args.gem_p,
            )
            index = build_index(db_sets)
            rankings = {}
            for dset in q_sets:
                hits = search(index, dset.vectors, args.k_prime)
                rankings[dset.image_id] = rank(hits, args.ranking)
            report = evalbench.recall_at_k(rankings, gt, ks)
            row = {"method": method, "order": order}
            row.update({f"r@{k}": report.recalls[k] for k in ks})
            grid.append(row)
            print(
                f"{method} order={order}: "
                + " ".join(f"R@{k}={report.recalls[k]:.4f}" for k in ks)
            )
    _write_json(Path(args.out), {"grid": grid})
    if args.csv:
        cols = ["method", "order"] + [f"r@{k}" for k in ks]
        lines = [",".join(cols)]
        for row in grid:
            lines.append(",".join(str(row[c]) for c in cols))
        Path(args.csv).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segvpr", description="segment-level place recognition engine"
    )
    parser.add_argument("--config", help="JSON file with default flag values")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-vocab", help="fit the cluster vocabulary")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", choices=["map", "domain"], default="map")
    p.add_argument("--clusters", type=int, default=32)
    p.add_argument("--per-image", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("describe", help="compute SuperSegment descriptors")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", choices=["reference", "query"], default="reference")
    p.add_argument("--vocab")
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--method", choices=METHODS, default="segvlad")
    p.add_argument("--gem-p", type=float, default=3.0)
    p.add_argument("--patch", type=int, help="uniform patch baseline instead of masks")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("index", help="build the flat exact index")
    p.add_argument("--desc-dir", required=True)
    p.add_argument("--pca-dim", type=int)
    p.add_argument("--pca-whiten", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("filter", help="IOU-cull database SuperSegments")
    p.add_argument("--desc-dir", required=True)
    p.add_argument("--iou-threshold", type=float, required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("query", help="search and rank reference images")
    p.add_argument("--index", required=True)
    p.add_argument("--desc-dir", required=True)
    p.add_argument("--k-prime", type=int, default=50)
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--ranking", choices=RANKING_METHODS, default="weighted")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval", help="Recall@K against ground truth")
    p.add_argument("--results", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--gt-mode", choices=evalbench.GT_MODES, required=True)
    p.add_argument("--radius", type=float)
    p.add_argument("--gt-pairs", help="JSON file {query_id: [ref ids]} for pairs mode")
    p.add_argument("--ks", default="1,5")
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("patchify", help="replace masks with uniform square patches")
    p.add_argument("--manifest", required=True)
    p.add_argument("--patch", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_patchify)

    p = sub.add_parser("synth", help="generate the planted synthetic dataset")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--num-refs", type=int, default=64)
    p.add_argument("--num-queries", type=int, default=32)
    p.add_argument("--segments-per-image", type=int, default=10)
    p.add_argument("--overlap-fraction", type=float, default=0.3)
    p.add_argument("--distractor-strength", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ablate", help="order x method recall grid")
    p.add_argument("--manifest", required=True)
    p.add_argument("--vocab")
    p.add_argument("--orders", default="0,1,2,3")
    p.add_argument("--methods", default="segvlad,sap")
    p.add_argument("--gem-p", type=float, default=3.0)
    p.add_argument("--k-prime", type=int, default=50)
    p.add_argument("--ranking", choices=RANKING_METHODS, default="weighted")
    p.add_argument("--gt-mode", choices=evalbench.GT_MODES, required=True)
    p.add_argument("--radius", type=float)
    p.add_argument("--gt-pairs")
    p.add_argument("--ks", default="1,5")
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    # config file provides defaults; explicit flags still win because we
    # re-parse with the config values as parser defaults
    pre, _ = parser.parse_known_args(argv)
    if pre.config:
        config = json.loads(Path(pre.config).read_text(encoding="utf-8"))
        for action in parser._subparsers._group_actions:
            for sub_parser in action.choices.values():
                known = {
                    opt.dest for opt in sub_parser._actions
                }
                sub_parser.set_defaults(
                    **{k.replace("-", "_"): v for k, v in config.items()
                       if k.replace("-", "_") in known}
                )
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
