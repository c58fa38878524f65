"""Metric report: an MCD table over feature pairs and LSD/LGD of final spectra.

Two files are written, ``report.tsv`` and its structured twin
``report.json``; both carry the metric convention identifiers. Published
reference values sit beside our numbers under an explicit label because they
come from a different corpus, analyser and training scale.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..align import dtw_align
from ..dsp.audio import read_wav
from ..dsp.features import assemble_features
from ..dsp.mcep import mcep_to_envelope
from ..metrics import CONVENTIONS, lgd, lsd, mcd

REFERENCE_LABEL = "published (not reproducible here: different corpus, analysers and training scale)"

# published values, DNN-based and HMM-based TTS columns
REFERENCE_MCD = {
    "syn-nat": (7.50, 5.63),
    "enh-pseudo": (3.75, 4.11),
    "pseudo-nat": (3.30, 4.26),
    "enh-nat": (5.01, 5.21),
    "enh-syn": (5.91, 2.74),
    "syn-pseudo": (7.12, 4.88),
}
# (LSD WN, LSD PWG, LGD WN, LGD PWG); DNN rows for AM/TM, DNN-NPF" for the cascade, HMM-NPF for NPF
REFERENCE_FINAL = {
    "TTS": (1.242, 1.242, 1.055, 1.055),
    "UB": (0.878, 0.841, 0.669, 0.484),
    "AM": (1.175, 1.181, 1.239, 1.109),
    "TM": (1.164, 1.029, 1.707, 0.703),
    "NPF_cascade": (1.106, 1.039, 1.177, 0.989),
    "NPF": (1.116, 1.102, 1.172, 1.199),
}

MCD_PAIRS = ("syn-nat", "enh-pseudo", "pseudo-nat", "enh-nat", "enh-syn", "syn-pseudo")


def _summary(values):
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return {"mean": None, "median": None, "count": 0}
    return {"mean": float(v.mean()), "median": float(np.median(v)), "count": int(v.size)}


def _mcd_any(x, y) -> float:
    """MCD on shape coefficients, DTW-aligned when frame counts differ."""
    return mcd(x.mcep_shape, y.mcep_shape, pre_aligned=x.num_frames == y.num_frames)


def final_spectrum_distances(output, natural):
    """(LSD, LGD) between an analysed output and the natural features."""
    env_o = mcep_to_envelope(output.mcep, output.alpha, 1024).frames
    env_n = mcep_to_envelope(natural.mcep, natural.alpha, 1024).frames
    if output.num_frames == natural.num_frames:
        pairs = np.stack([np.arange(natural.num_frames)] * 2, axis=1)
    else:
        pairs = dtw_align(output.mcep_shape, natural.mcep_shape, zscore=True).pairs
    d_lsd = lsd(env_o[pairs[:, 0]], env_n[pairs[:, 1]])
    d_lgd = lgd(output.mcep_shape, natural.mcep_shape)
    return d_lsd, d_lgd


def build_report(run) -> dict:
    from .stages import output_name

    cfg = run.config
    utts = run.splits()["test"]
    nat = {u: run.natural(u) for u in utts}
    syn = {u: run.synthetic(u) for u in utts}
    missing = []

    mcd_rows = {}
    if run.manifest.is_done("train-cycvc"):
        cvc = run.cycvc_model()
        enh = {u: cvc.enhance(syn[u]) for u in utts}
        ps = {u: cvc.pseudo_vc(nat[u]) for u in utts}
        sets = {"syn": syn, "nat": nat, "enh": enh, "pseudo": ps}
        for pair in MCD_PAIRS:
            a, b = pair.split("-")
            per = {u: _mcd_any(sets[a][u], sets[b][u]) for u in utts}
            mcd_rows[pair] = {**_summary(list(per.values())), "per_utterance": per}
    else:
        missing.append("train-cycvc")

    final_rows = {}
    per_tts = {u: final_spectrum_distances(syn[u], nat[u]) for u in utts}
    final_rows["TTS"] = _final_summary(per_tts)
    out_dir = run.infer_dir()
    for cond in cfg.conditions:
        per = {}
        for u in utts:
            path = out_dir / output_name(u, cond, cfg.vocoder)
            if not path.is_file():
                continue
            gen = assemble_features(read_wav(path), run.analysis)
            per[u] = final_spectrum_distances(gen, nat[u])
        if len(per) < len(utts):
            missing.append(cond)
        final_rows[cond] = _final_summary(per)

    column = 0 if cfg.vocoder == "wavenet" else 1
    return {
        "run": run.run_key,
        "seed": run.seed,
        "vocoder": cfg.vocoder,
        "conditions": list(cfg.conditions),
        "test_utterances": list(utts),
        "conventions": dict(CONVENTIONS),
        "reference_label": REFERENCE_LABEL,
        "mcd": {k: {**v, "reference_dnn": REFERENCE_MCD[k][0], "reference_hmm": REFERENCE_MCD[k][1]}
                for k, v in mcd_rows.items()},
        "final": {k: {**v, "reference_lsd": REFERENCE_FINAL[k][column], "reference_lgd": REFERENCE_FINAL[k][2 + column]}
                  for k, v in final_rows.items()},
        "missing": missing,
    }


def _final_summary(per):
    return {
        "lsd": _summary([v[0] for v in per.values()]),
        "lgd": _summary([v[1] for v in per.values()]),
        "per_utterance": {u: {"lsd": v[0], "lgd": v[1]} for u, v in per.items()},
    }


def _fmt(x):
    return "NA" if x is None else f"{x:.4f}"


def write_report(report: dict, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    lines = [f"# {k}: {v}" for k, v in sorted(report["conventions"].items())]
    lines.append(f"# reference columns: {report['reference_label']}")
    lines.append("# mcd rows: reference = DNN-based TTS, reference_alt = HMM-based TTS; final rows: same vocoder")
    lines.append("table\trow\tmetric\tmean\tmedian\tcount\treference\treference_alt")
    for pair, row in report["mcd"].items():
        lines.append("\t".join(["mcd", pair, "mcd_db", _fmt(row["mean"]), _fmt(row["median"]), str(row["count"]),
                                _fmt(row["reference_dnn"]), _fmt(row["reference_hmm"])]))
    for cond, row in report["final"].items():
        for metric in ("lsd", "lgd"):
            s = row[metric]
            lines.append("\t".join(["final", cond, metric, _fmt(s["mean"]), _fmt(s["median"]), str(s["count"]),
                                    _fmt(row[f"reference_{metric}"]), "NA"]))
    for gap in report["missing"]:
        lines.append(f"gap\t{gap}\tmissing\tNA\tNA\t0\tNA\tNA")
    (directory / "report.tsv").write_text("\n".join(lines) + "\n")
