"""Per-axis accuracy and top score, with and without the fuzzy filter.

Sweeps each perturbation axis alone (the others held neutral) over a wider
range than the evaluation grid, to show where each path starts to fail.

    python notebooks/02_axis_sweep.py
"""
import numpy as np

from fuzzyspeech import synth_corpus as sc
from fuzzyspeech.recognizer import RecognizerConfig, enroll, recognize

clips = {spec.label: sc.make_word(spec) for spec in sc.DEFAULT_LEXICON}
store = None
for label, clip in clips.items():
    store = enroll(label, [clip], store)

sweeps = {
    "stretch": [sc.PerturbationSpec(f, 0.0, 0.0) for f in (0.4, 0.5, 0.7, 1.0, 1.4, 2.0, 2.5)],
    "gain_db": [sc.PerturbationSpec(1.0, g, 0.0) for g in (-18, -12, -6, 0, 6, 12)],
    "tilt": [sc.PerturbationSpec(1.0, 0.0, t) for t in (-3, -2, -1, 0, 1, 2, 3)],
}
configs = {"filter": RecognizerConfig(), "raw": RecognizerConfig(use_filter=False)}

print(f"{'axis':<8} {'value':>6} " + " ".join(f"{k + ' acc':>11} {k + ' top':>10}" for k in configs))
for axis, cells in sweeps.items():
    for cell in cells:
        value = {"stretch": cell.stretch, "gain_db": cell.gain_db, "tilt": cell.tilt_db_per_band}[axis]
        row = []
        for cfg in configs.values():
            hits, tops = [], []
            for label, clip in clips.items():
                res = recognize(sc.perturb(clip, cell), store, cfg)
                hits.append(len(res) == 1 and res[0].top_word == label)
                tops.append(res[0].top_score if res else 0.0)
            row.append(f"{np.mean(hits):>11.2f} {np.mean(tops):>10.3f}")
        print(f"{axis:<8} {value:>6g} " + " ".join(row))
