"""Ablation sweep: retrain the model with single components changed.

Three row groups, all trained under one shared protocol (same seed, same
tiles, same optimizer settings) so rows differ only in the configuration
under test:

  modules  - drop one block at a time, and vary the stem block count
  depth    - nesting depth of the encoder/decoder grid
  scan     - patch grid size and traversal-direction set of the upsampler

Each run reports its starting/final training loss plus evaluation metrics
on the training tiles (desk-scale overfit regime). Results are emitted as
one flat CSV and per-group Markdown tables whose row structure is fixed.
"""

from __future__ import annotations

import csv
import dataclasses
import os
from dataclasses import dataclass

from .model import ModelConfig, ablate, build_model
from .tensor import ConfigError
from .train import TrainConfig, evaluate, train

GROUPS = ("modules", "depth", "scan")

_CARDINAL = ("row_fwd", "row_bwd", "col_fwd", "col_bwd")


@dataclass(frozen=True)
class AblationRow:
    """One sweep entry: a label plus how it modifies the base config."""

    group: str
    label: str
    disable: str | None = None  # block flag passed to model.ablate
    replace: tuple = ()  # (field, value) pairs applied to the base config

    def config(self, base: ModelConfig) -> ModelConfig:
        cfg = ablate(base, self.disable) if self.disable else base
        if self.replace:
            cfg = dataclasses.replace(cfg, **dict(self.replace))
        return cfg


ROWS = (
    AblationRow("modules", "w/o DPA", disable="dpa"),
    AblationRow("modules", "w/o MUB", disable="mub"),
    AblationRow("modules", "w/o MHCB", disable="mhcb"),
    AblationRow("modules", "w/ MHCB-1", replace=(("mhcb_count", 1),)),
    AblationRow("modules", "w/ MHCB-2 (default)"),
    AblationRow("modules", "w/ MHCB-3", replace=(("mhcb_count", 3),)),
    AblationRow("depth", "depth 2", replace=(("depth", 2),)),
    AblationRow("depth", "depth 3", replace=(("depth", 3),)),
    AblationRow("depth", "depth 4 (default)", replace=(("depth", 4),)),
    AblationRow("scan", "3x3 patch grid", replace=(("patch_grid", 3),)),
    AblationRow("scan", "w/o MUB", disable="mub"),
    AblationRow(
        "scan",
        "w/ MUB (diag fwd scan)",
        replace=(("scan_dirs", _CARDINAL + ("diag_fwd",)),),
    ),
    AblationRow(
        "scan",
        "w/ MUB (diag bwd scan)",
        replace=(("scan_dirs", _CARDINAL + ("diag_bwd",)),),
    ),
    AblationRow("scan", "2x2 patch grid (default)"),
)


def ablation_rows(groups=("modules",)):
    """Rows of the requested groups, in sweep order."""
    groups = tuple(groups)
    unknown = set(groups) - set(GROUPS)
    if unknown:
        raise ConfigError(f"unknown ablation groups: {sorted(unknown)}")
    return [r for r in ROWS if r.group in groups]


def run_ablation(
    samples,
    base_cfg: ModelConfig,
    train_cfg: TrainConfig,
    groups=("modules",),
    out_dir: str | None = None,
):
    """Train and evaluate every row; returns a list of result dicts.

    Each row rebuilds the model from the modified config at the shared seed
    and trains on the same samples under train_cfg. Results carry the
    training-loss endpoints and the aggregate evaluation metrics.
    """
    rows = ablation_rows(groups)
    results = []
    for row in rows:
        cfg = row.config(base_cfg)
        model = build_model(cfg)
        res = train(model, samples, train_cfg)
        agg = evaluate(model, samples).aggregate()
        results.append(
            {
                "group": row.group,
                "label": row.label,
                "mhcb": str(cfg.mhcb_count) if cfg.enable_mhcb else "no",
                "dpa": "yes" if cfg.enable_dpa else "no",
                "mub": "yes" if cfg.enable_mub else "no",
                "initial_l1": res.initial_loss,
                "final_l1": res.final_loss,
                "psnr_db": agg["psnr_db"],
                "ssim": agg["ssim"],
                "mse": agg["mse"],
                "mae": agg["mae"],
                "sam_rad": agg["sam_rad"],
            }
        )
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        write_ablation_csv(results, os.path.join(out_dir, "ablation.csv"))
        with open(os.path.join(out_dir, "ablation.md"), "w", encoding="utf-8") as f:
            for g in GROUPS:
                if any(r["group"] == g for r in results):
                    f.write(format_group_table(results, g) + "\n\n")
    return results


def write_ablation_csv(results, path: str) -> None:
    cols = [
        "group",
        "label",
        "mhcb",
        "dpa",
        "mub",
        "initial_l1",
        "final_l1",
        "psnr_db",
        "ssim",
        "mse",
        "mae",
        "sam_rad",
    ]
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(cols)
        for r in results:
            w.writerow(
                [
                    r[c] if isinstance(r[c], str) else f"{r[c]:.6f}"
                    for c in cols
                ]
            )


def format_group_table(results, group: str) -> str:
    """Markdown table for one group; row order matches the sweep order."""
    rows = [r for r in results if r["group"] == group]
    if not rows:
        raise ConfigError(f"no results for ablation group {group!r}")
    if group == "modules":
        head = ["config", "MHCB", "DPA", "MUB", "PSNR", "SSIM", "MSE", "MAE"]
        body = [
            [
                r["label"],
                r["mhcb"],
                r["dpa"],
                r["mub"],
                f"{r['psnr_db']:.3f}",
                f"{r['ssim']:.3f}",
                f"{r['mse']:.3f}",
                f"{r['mae']:.3f}",
            ]
            for r in rows
        ]
    else:
        head = ["config", "PSNR", "SSIM", "MSE", "MAE", "SAM"]
        body = [
            [
                r["label"],
                f"{r['psnr_db']:.3f}",
                f"{r['ssim']:.3f}",
                f"{r['mse']:.3f}",
                f"{r['mae']:.3f}",
                f"{r['sam_rad']:.3f}",
            ]
            for r in rows
        ]
    widths = [max(len(head[i]), *(len(b[i]) for b in body)) for i in range(len(head))]
    def fmt(cells):
        return "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"
    lines = [fmt(head), "| " + " | ".join("-" * w for w in widths) + " |"]
    lines.extend(fmt(b) for b in body)
    return "\n".join(lines)
