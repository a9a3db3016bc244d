#!/usr/bin/env python3
"""Compare trained models against the information ceiling of the planted signal.

The clinic generator plants a per-embryo signal score built from three latent
variables (texture, geometry, treatment factor) and each input arm exposes a
subset of them: video frames render texture, morphology annotations and the
interpretable features derive from geometry, the treatment-level record
derives from the treatment factor. Scoring the held-out clinic directly with
the relevant latents therefore gives a noiseless AUC ceiling per selector row,
independent of any model. This script prints those ceilings, trains a model
per requested row on a rendered corpus, and reports how much of the ceiling
each one recovers.

Transfer selection is top-k on noisy geometry, so geometry-based ceilings are
range-restricted well below 1.0 even though geometry carries the largest
planted weight.

    python3 scripts/planted_signal.py --oracle-only          # ceilings, no training
    python3 scripts/planted_signal.py --selectors v "v+v'" e # three rows, ~3 min
"""

import argparse
import json
import time
from pathlib import Path

from mmviab.cli import PRIME, RunConfig, normalize_selector, selector_kind
from mmviab.metrics import auc_roc
from mmviab.synthclinic import SynthConfig, build_dataset
from mmviab.synthclinic.generate import sample_cohort
from mmviab.trainer import SplitData, train

# which planted latent each input token can at best recover
TOKEN_LATENTS = {
    "v": ("texture",),
    "v" + PRIME: ("geometry",),
    "e": ("factor",),
    "e" + PRIME: ("geometry",),
}

DESK_MODEL = dict(frame_size=32, patch_size=8, spatial_dim=16, spatial_layers=1,
                  spatial_heads=2, mm_dim=32, mm_layers=2, mm_heads=2,
                  mlp_ratio=2.0, head_hidden=16, max_frames=30)
DESK_TABULAR = dict(token_dim=16, layers=2, heads=2, mlp_ratio=2.0)

DEFAULT_SELECTORS = ("v", "v+v′", "v′+e+e′", "e", "e+e′")


def synth_config(args, n_treatments, seed):
    return SynthConfig(
        n_treatments=n_treatments, embryos_low=2, embryos_high=4,
        frames_raw=120, frame_size=32, w_video=0.3, w_ehr=0.3, w_morph=0.4,
        signal_gain=args.signal_gain, success_rate=0.3, proxy_noise=0.35,
        feature_noise=0.5, pixel_noise=20.0, seed=seed)


def exposed_latents(selector):
    names = set()
    for token in selector.split("+"):
        names.update(TOKEN_LATENTS[token])
    return names


def oracle_auc(cohort, cfg, latents):
    """AUC of the weighted latent combination over transferred embryos."""
    weights = {"texture": cfg.w_video, "geometry": cfg.w_morph,
               "factor": cfg.w_ehr}
    total = sum(weights[name] for name in latents)
    scores, labels = [], []
    for rec in cohort.treatments:
        label = 1 if rec.n_births >= 1 else 0
        for emb in rec.embryos:
            if not emb.transferred:
                continue
            value = {"texture": emb.latent.texture_quality,
                     "geometry": emb.latent.geometry_quality,
                     "factor": rec.factor}
            scores.append(sum(weights[n] * value[n] for n in latents) / total)
            labels.append(label)
    return auc_roc(scores, labels)


def eval_auc(model, eval_ds):
    scores, labels = [], []
    predictions = model.score_cycles(eval_ds.cycles)
    for cycle in eval_ds.cycles:
        label = 1 if cycle.successful else 0
        for emb in cycle.embryos:
            if emb.transferred:
                scores.append(predictions[emb.embryo_id])
                labels.append(label)
    return auc_roc(scores, labels)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--selectors", nargs="*", default=list(DEFAULT_SELECTORS),
                    help="modality rows to train (ASCII ' accepted for the prime)")
    ap.add_argument("--oracle-only", action="store_true",
                    help="print latent ceilings and skip training")
    ap.add_argument("--treatments", type=int, default=300)
    ap.add_argument("--eval-treatments", type=int, default=200)
    ap.add_argument("--signal-gain", type=float, default=40.0)
    ap.add_argument("--mm-epochs", type=int, default=8)
    ap.add_argument("--mm-lr", type=float, default=1e-4)
    ap.add_argument("--tab-epochs", type=int, default=10)
    ap.add_argument("--tab-lr", type=float, default=3e-3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("results/planted_signal"))
    args = ap.parse_args()
    selectors = [normalize_selector(s) for s in args.selectors]

    t0 = time.time()
    eval_cfg = synth_config(args, args.eval_treatments, seed=args.seed + 1)
    cohort = sample_cohort(eval_cfg)
    print(f"evaluation cohort: {len(cohort.treatments)} treatments, realized "
          f"success rate {cohort.realized_success_rate:.3f}\n")

    print("oracle AUC ceilings on the evaluation cohort (noiseless latents):")
    ceilings = {}
    for selector in selectors:
        latents = exposed_latents(selector)
        ceilings[selector] = oracle_auc(cohort, eval_cfg, latents)
        print(f"  {selector:10s} <- {'+'.join(sorted(latents)):17s} "
              f"{ceilings[selector]:.4f}")
    full = oracle_auc(cohort, eval_cfg, {"texture", "geometry", "factor"})
    print(f"  {'(all)':10s} <- factor+geometry+texture {full:.4f}\n")

    rows = {sel: {"ceiling": ceilings[sel]} for sel in selectors}
    if not args.oracle_only:
        train_ds = build_dataset(synth_config(args, args.treatments,
                                              seed=args.seed))
        eval_ds = build_dataset(eval_cfg)
        splits = SplitData.from_dataset(train_ds, seed=args.seed)
        print(f"[{time.time() - t0:5.0f}s] rendered corpora ready", flush=True)

        for selector in selectors:
            kind = selector_kind(selector)
            if kind == "multimodal":
                sched = dict(learning_rate=args.mm_lr, max_epochs=args.mm_epochs,
                             patience=args.mm_epochs)
            else:
                sched = dict(learning_rate=args.tab_lr, max_epochs=args.tab_epochs,
                             patience=args.tab_epochs)
            run = RunConfig(selector=selector, model=DESK_MODEL,
                            tabular=DESK_TABULAR,
                            train=dict(sched, snapshot="final", seed=args.seed))
            model, history = train(kind, splits, run.train_config(),
                                   run.model_config(train_ds.schema))
            if history.diverged:
                raise SystemExit(f"{selector}: training diverged "
                                 f"({history.failure})")
            auc = eval_auc(model, eval_ds)
            ceiling = ceilings[selector]
            # fraction of the above-chance headroom the model recovers
            recovered = (auc - 0.5) / max(ceiling - 0.5, 1e-9)
            rows[selector].update(trained=auc, recovered=recovered)
            print(f"[{time.time() - t0:5.0f}s] {selector:10s} trained "
                  f"{auc:.4f} vs ceiling {ceiling:.4f} "
                  f"(recovered {recovered:+.0%})", flush=True)

    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "summary.json").write_text(json.dumps(rows, indent=2) + "\n")
    print(f"\nwrote {args.out}/summary.json ({time.time() - t0:.0f}s total)")


if __name__ == "__main__":
    main()
