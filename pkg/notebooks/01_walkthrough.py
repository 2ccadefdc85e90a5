"""Walk one word through the pipeline: synthesise, profile, filter, recognise.

    python notebooks/01_walkthrough.py
"""
import numpy as np

from fuzzyspeech import synth_corpus as sc
from fuzzyspeech.audio_features import analyze_clip
from fuzzyspeech.paraling_filter import filter_segment
from fuzzyspeech.recognizer import enroll, recognize

# enrol the default lexicon from its neutral renderings
store = None
for spec in sc.DEFAULT_LEXICON:
    store = enroll(spec.label, [sc.make_word(spec)], store)
print(f"{len(store)} templates, mean duration {store.mean_duration:.1f} frames, "
      f"mean energy {store.mean_energy:.1f} dBFS")

# a slow, loud, dull rendering of "speech"
spec = sc.DEFAULT_LEXICON[1]
clip = sc.perturb(sc.make_word(spec), sc.PerturbationSpec(1.5, 9.0, -1.0))
seg = analyze_clip(clip).segments[0]
print(f"\nsegment frames {seg.start_frame}..{seg.end_frame}")

out, rec = filter_segment(seg.frames, store.mean_duration, store.mean_energy)
for name, prof in (("before", rec.before), ("after", rec.after)):
    d = prof.to_dict()
    print(f"{name:>6}: v={d['speed']['crisp']:+.2f} {d['speed']['degrees']}")
    print(f"{'':>6}  e={d['emphasis']['crisp']:+.2f} dB {d['emphasis']['degrees']}")
    print(f"{'':>6}  hf={d['accent']['crisp']:.3f} {d['accent']['degrees']}")
c = rec.corrections
print(f"corrections: x{c.resample_factor:.3f} ({c.frames_in}->{c.frames_out} frames), "
      f"gain -{c.gain_shift_db:.2f} dB, tilt {c.tilt_slope_db:+.2f} dB")

# the raw stream is untouched; the record is the side channel
assert np.array_equal(seg.frames.log_energy, analyze_clip(clip).segments[0].frames.log_energy)

(res,) = recognize(clip, store)
print("\ntop hypotheses:", ", ".join(f"{w} {s:.3f}" for w, s in res.hypotheses[:3]))
print(f"margin {res.confidence:.3f}  ambiguous={res.ambiguous}  confirm={res.needs_confirmation}")
