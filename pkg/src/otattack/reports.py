"""Report serialization.

Each EvalReport becomes two files: a JSON document (UTF-8, sorted keys —
equal reports serialize byte-identically) and a flat CSV with one row per
image. All floating-point numbers carry 9 significant digits.

JSON schema (top-level keys):
  source_model_seed, target_model_seed  int
  asr_tr, asr_ir                        float | null (null = no attackable outcomes)
  n_attackable_tr, n_attackable_ir      int
  mean_feature_deviation                float
  any_diverged                          bool
  config                                object (attack configuration snapshot)
  per_image                             list of {image_id, clean_top1, adv_top1,
                                        clean_correct, attack_success,
                                        feature_deviation}

CSV header: image_id,clean_top1,adv_top1,success,feature_deviation
"""

import csv
import json
import os


def _sig9(x):
    """Round a float through 9 significant digits."""
    return float(f"{float(x):.9g}")


def _rounded(obj):
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, float):
        return _sig9(obj)
    if isinstance(obj, dict):
        return {k: _rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_rounded(v) for v in obj]
    return obj


def report_basename(report) -> str:
    return f"report_src{report.source_model_seed}_tgt{report.target_model_seed}"


def write_report(report, out_dir, deviations=None) -> tuple[str, str]:
    """Write the JSON and CSV files for one report; returns their paths.
    `deviations` optionally supplies per-image feature deviations for the
    CSV rows (empty cells otherwise)."""
    os.makedirs(out_dir, exist_ok=True)
    base = report_basename(report)
    if deviations is None:
        deviations = getattr(report, "per_image_deviation", None)
    per_image = []
    for idx, o in enumerate(report.per_image):
        dev = deviations[idx] if deviations is not None else None
        per_image.append({
            "image_id": o.image_id,
            "clean_top1": o.clean_top1,
            "adv_top1": o.adv_top1,
            "clean_correct": o.clean_correct,
            "attack_success": o.attack_success,
            "feature_deviation": _sig9(dev) if dev is not None else None,
        })
    doc = {
        "source_model_seed": report.source_model_seed,
        "target_model_seed": report.target_model_seed,
        "asr_tr": _sig9(report.asr_tr) if report.asr_tr is not None else None,
        "asr_ir": _sig9(report.asr_ir) if report.asr_ir is not None else None,
        "n_attackable_tr": report.n_attackable_tr,
        "n_attackable_ir": report.n_attackable_ir,
        "mean_feature_deviation": _sig9(report.mean_feature_deviation),
        "any_diverged": report.any_diverged,
        "config": _rounded(report.config),
        "per_image": per_image,
    }
    json_path = os.path.join(out_dir, base + ".json")
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")

    csv_path = os.path.join(out_dir, base + ".csv")
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id", "clean_top1", "adv_top1", "success",
                         "feature_deviation"])
        for row in per_image:
            writer.writerow([
                row["image_id"], row["clean_top1"], row["adv_top1"],
                int(row["attack_success"]),
                "" if row["feature_deviation"] is None
                else f"{row['feature_deviation']:.9g}",
            ])
    return json_path, csv_path


def write_curve(curve, path) -> None:
    """Sweep curve as CSV rows of (set size, transfer ASR)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["set_size", "asr_tr"])
        for size, value in curve:
            writer.writerow([size, "" if value is None else f"{value:.9g}"])


def write_comparison(rows, path) -> None:
    """Side-by-side transfer ASR of the transport and baseline objectives."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["source_seed", "target_seed",
                         "asr_tr_ot", "asr_tr_mean", "asr_ir_ot", "asr_ir_mean"])
        for row in rows:
            writer.writerow([row[0], row[1]] +
                            ["" if v is None else f"{v:.9g}" for v in row[2:]])
