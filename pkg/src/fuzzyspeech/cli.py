"""Command-line entry point: ``fuzzyspeech <verb> ...``.

Verbs: enroll, analyze, filter, recognize, synth, eval. ``--format records``
writes one JSON object per line, each tagged with a ``type`` field; ``table``
(the default) writes aligned text for people.

Exit codes: 0 success, 1 usage or I/O error, 2 an out-of-vocabulary result in
batch (non-interactive) recognition.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import synth_corpus as sc
from .audio_features import AudioClip, AudioFormatError, dump_features, load_audio, write_wav
from .config import Config, ConfigError, load_config
from .dtw_align import dtw, dump_cost_matrix
from .paraling_filter import correction_weights, filter_utterance, profile_segment
from .recognizer import (
    EnrollmentError,
    RecognitionError,
    TemplateStore,
    accept,
    confirm,
    enroll,
    load_store,
    recognize,
    save_store,
)

log = logging.getLogger("fuzzyspeech")

EXIT_OK, EXIT_ERROR, EXIT_OOV = 0, 1, 2
RECORD_TYPES = {"store_summary", "enroll_error", "profile", "paralinguistic", "recognition",
                "transcript", "synth_summary", "eval_summary", "eval_axis", "eval_missing"}


class UsageError(Exception):
    pass


class Output:
    """Single writer for everything a command prints to stdout."""

    def __init__(self, fmt: str, stream=None):
        self.fmt = fmt
        self.stream = stream or sys.stdout

    @property
    def records(self) -> bool:
        return self.fmt == "records"

    def record(self, kind: str, payload: dict) -> None:
        if self.records:
            line = json.dumps({"type": kind, **payload}, sort_keys=True)
            self.stream.write(line + "\n")

    def text(self, line: str = "") -> None:
        if not self.records:
            self.stream.write(line + "\n")


def parse_record(line: str) -> dict:
    """Parse one line of ``--format records`` output; raises ValueError if malformed."""
    obj = json.loads(line)
    if not isinstance(obj, dict) or obj.get("type") not in RECORD_TYPES:
        raise ValueError(f"not a record line: {line!r}")
    return obj


def _load_clip(path) -> AudioClip:
    try:
        return load_audio(path)
    except FileNotFoundError:
        raise UsageError(f"{path}: file not found") from None
    except (AudioFormatError, OSError) as exc:
        raise UsageError(f"{path}: {exc}") from None


def _load_store(path) -> TemplateStore:
    try:
        return load_store(path)
    except FileNotFoundError:
        raise UsageError(f"{path}: template store not found") from None
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"{path}: cannot read template store ({exc})") from None


def _word_from_filename(path: Path) -> str:
    return path.stem.split("__")[0].lower()


# -- enroll ---------------------------------------------------------------------

def cmd_enroll(args, cfg: Config, out: Output) -> int:
    rcfg = cfg.recognizer()
    store_path = Path(args.store)
    store = _load_store(store_path) if store_path.exists() else TemplateStore()

    if args.lexicon:
        lex_dir = Path(args.lexicon)
        if not lex_dir.is_dir():
            raise UsageError(f"{lex_dir}: not a directory")
        jobs = [(_word_from_filename(p), p) for p in sorted(lex_dir.glob("*.wav"))]
        if not jobs:
            raise UsageError(f"{lex_dir}: no .wav files")
    else:
        if not args.word or not args.audio:
            raise UsageError("enroll needs --lexicon DIR or --word W --audio FILE...")
        jobs = [(args.word, Path(p)) for p in args.audio]

    failures = 0
    for word, path in jobs:
        try:
            clip = load_audio(path)
            store = enroll(word, [clip], store, rcfg, sources=[str(path)])
            log.info("enrolled %s from %s", word, path)
        except (EnrollmentError, AudioFormatError, OSError) as exc:
            failures += 1
            msg = exc.strerror if isinstance(exc, OSError) and exc.strerror else str(exc)
            print(f"error: {path}: {msg}", file=sys.stderr)
            out.record("enroll_error", {"file": str(path), "word": word, "error": msg})

    if len(store):
        save_store(store, store_path)
        counts = store.counts()
        out.record("store_summary", {"store": str(store_path), "words": len(counts),
                                     "templates": len(store), "counts": counts,
                                     "mean_duration_frames": store.mean_duration})
        out.text(f"store {store_path}: {len(counts)} words, {len(store)} templates, "
                 f"mean duration {store.mean_duration:.1f} frames")
        for word, n in counts.items():
            out.text(f"  {word:<16} {n}")
    return EXIT_ERROR if failures else EXIT_OK


# -- analyze / filter -------------------------------------------------------------

def _references(args, cfg: Config, segments):
    """Reference duration and energy: the store's lexicon means, else the utterance's own."""
    if args.store:
        store = _load_store(args.store)
        return store.mean_duration, store.mean_energy
    if segments:
        print("warning: no template store; using the utterance's own mean duration "
              "and energy as reference", file=sys.stderr)
        dur = float(np.mean([s.n_frames for s in segments]))
        energy = float(np.mean(np.concatenate([s.frames.log_energy for s in segments])))
        return dur, energy
    return None, None


def cmd_analyze(args, cfg: Config, out: Output) -> int:
    clip = _load_clip(args.input)
    axes = cfg.axes()
    utt = cfg.frontend().analyze(clip)
    ref_dur, ref_energy = _references(args, cfg, utt.segments)
    out.text(f"{args.input}: {len(utt.segments)} segments")
    if args.frames_out:
        with open(args.frames_out, "w", encoding="utf-8") as fh:
            dump_features(utt.frames, fh)
    if not utt.segments:
        return EXIT_OK
    out.text(f"{'seg':>3} {'frames':>9} {'v':>6} {'slow':>5} {'norm':>5} {'fast':>5} "
             f"{'e_dB':>6} {'light':>5} {'med':>5} {'heavy':>5} {'hf':>5} {'soft':>5} "
             f"{'sharp':>5} {'w_spd':>5} {'w_emp':>5} {'w_acc':>5}")
    for sid, seg in enumerate(utt.segments):
        prof = profile_segment(seg, ref_dur, ref_energy, axes)
        w = correction_weights(prof)
        out.record("profile", {
            "file": str(args.input), "segment_id": sid, "start_frame": seg.start_frame,
            "end_frame": seg.end_frame, "reference_duration_frames": ref_dur,
            "reference_energy_db": ref_energy, "profile": prof.to_dict(),
            "weights": dict(zip(("speed", "emphasis", "accent"), w)),
        })
        d = prof.to_dict()
        cells = [*d["speed"]["degrees"].values(), d["emphasis"]["crisp"],
                 *d["emphasis"]["degrees"].values(), d["accent"]["crisp"],
                 *d["accent"]["degrees"].values(), *w]
        out.text(f"{sid:>3} {seg.start_frame:>4}-{seg.end_frame:<4} {prof.speed_log2:>6.2f} "
                 + " ".join(f"{c:>5.2f}" if k != 3 else f"{c:>6.1f}" for k, c in enumerate(cells)))
    return EXIT_OK


def cmd_filter(args, cfg: Config, out: Output) -> int:
    clip = _load_clip(args.input)
    axes = cfg.axes()
    utt = cfg.frontend().analyze(clip)
    ref_dur, ref_energy = _references(args, cfg, utt.segments)
    out.text(f"{args.input}: {len(utt.segments)} segments")
    if not utt.segments:
        return EXIT_OK
    frames, records = filter_utterance(utt, ref_dur, ref_energy, axes, cfg.target_ratio)
    for rec in records:
        out.record("paralinguistic", {"file": str(args.input), **rec.to_dict()})
        c = rec.corrections
        out.text(f"seg {rec.segment_id}: frames {c.frames_in}->{c.frames_out} "
                 f"(x{c.resample_factor:.3f}), gain {-c.gain_shift_db:+.2f} dB, "
                 f"tilt {c.tilt_slope_db:+.2f} dB/span")
    if args.out:
        arrays = {}
        for k, (f, seg) in enumerate(zip(frames, utt.segments)):
            arrays[f"seg{k}_filtered"] = f.vectors()
            arrays[f"seg{k}_original"] = seg.frames.vectors()
        np.savez(args.out, **arrays)
    return EXIT_OK


# -- recognize ------------------------------------------------------------------

def _prompt(result, lexicon, stdin, stderr):
    shown = ", ".join(f"{w} ({s:.3f})" for w, s in result.hypotheses[:3])
    reason = "ambiguous" if result.ambiguous else "low confidence"
    stderr.write(f"segment {result.segment_id} [{reason}]: {shown}\n"
                 f"did you say '{result.top_word}'? [y/n/<word>] ")
    stderr.flush()
    reply = stdin.readline().strip()
    low = reply.lower()
    if low in ("y", "yes"):
        return confirm(result, True)
    if low in ("", "n", "no"):
        return confirm(result, False)
    return confirm(result, False, reply, lexicon)


def cmd_recognize(args, cfg: Config, out: Output) -> int:
    store = _load_store(args.store)
    if args.no_filter:
        cfg = replace(cfg, use_filter=False)
    rcfg = cfg.recognizer()
    lexicon = store.words
    any_oov = False
    for path in args.input:
        clip = _load_clip(path)
        try:
            results = recognize(clip, store, rcfg)
        except RecognitionError as exc:
            raise UsageError(str(exc)) from None
        out.text(f"{path}: {len(results)} segments")
        for res in results:
            any_oov |= res.out_of_vocabulary
            payload = {"file": str(path), **res.to_dict()}
            del payload["type"]
            out.record("recognition", payload)
            flags = [name for name, on in (("ambiguous", res.ambiguous),
                                           ("confirm", res.needs_confirmation),
                                           ("oov", res.out_of_vocabulary)) if on]
            hyps = "  ".join(f"{w}:{s:.4f}" for w, s in res.hypotheses[: args.top])
            out.text(f"  seg {res.segment_id}  {hyps}  margin {res.confidence:.4f}"
                     + (f"  [{' '.join(flags)}]" if flags else ""))
            if args.dump_cost:
                best = next(t for t in store.templates if t.word == res.top_word)
                ref = best.frames if rcfg.use_filter else best.raw_frames
                target = Path(args.dump_cost) / f"{Path(path).stem}_seg{res.segment_id}.txt"
                target.parent.mkdir(parents=True, exist_ok=True)
                with open(target, "w", encoding="utf-8") as fh:
                    dump_cost_matrix(dtw(res.frames, ref, rcfg.band_half_width,
                                         return_matrix=True), fh)
            if args.interactive:
                if res.needs_confirmation or res.ambiguous:
                    entry = _prompt(res, lexicon, sys.stdin, sys.stderr)
                else:
                    entry = accept(res)
                payload = {"file": str(path), **entry.to_dict()}
                del payload["type"]
                out.record("transcript", payload)
                note = f" ({entry.note})" if entry.note else ""
                out.text(f"  -> {entry.word or '<rejected>'} [{entry.origin}]{note}")
    if any_oov and not args.interactive:
        return EXIT_OOV
    return EXIT_OK


# -- synth ----------------------------------------------------------------------

GRIDS = {"default": sc.DEFAULT_GRID, "neutral": sc.NEUTRAL_GRID}


def cmd_synth(args, cfg: Config, out: Output) -> int:
    lexicon, grid, seed = list(sc.DEFAULT_LEXICON), None, None
    try:
        if args.spec:
            lexicon, grid, seed = sc.load_lexicon_spec(args.spec)
        if args.grid:
            grid = GRIDS[args.grid]
        if args.stretch or args.gain or args.tilt:
            base = grid or sc.DEFAULT_GRID
            grid = sc.PerturbationGrid(
                tuple(args.stretch) if args.stretch else base.stretch,
                tuple(args.gain) if args.gain else base.gain_db,
                tuple(args.tilt) if args.tilt else base.tilt_db_per_band,
            )
            grid.cells()
        grid = grid or sc.DEFAULT_GRID
        if args.seed is not None:
            seed = args.seed
        seed = 0 if seed is None else seed
        corpus = sc.build_eval_corpus(lexicon, grid, seed)
    except sc.SpecError as exc:
        print(f"error: invalid spec field '{exc.field}': {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"{args.spec}: {exc}") from None

    out_dir = Path(args.out)
    manifest = sc.write_corpus(out_dir, corpus, lexicon, grid, seed)
    if args.homophone:
        write_wav(out_dir / "homophone.wav", sc.make_word(sc.HOMOPHONE_SPEC, corpus_seed=seed))
    out.record("synth_summary", {"out": str(out_dir), "words": len(lexicon),
                                 "clips": len(corpus.manifest), "seed": seed,
                                 "manifest": str(manifest)})
    out.text(f"wrote {len(corpus.manifest)} clips for {len(lexicon)} words to {out_dir} "
             f"(seed {seed})")
    return EXIT_OK


# -- eval -----------------------------------------------------------------------

def _axis_value(row, axis):
    return {"stretch": row.stretch, "gain_db": row.gain_db, "tilt": row.tilt}[axis]


def cmd_eval(args, cfg: Config, out: Output) -> int:
    store = _load_store(args.store)
    if args.no_filter:
        cfg = replace(cfg, use_filter=False)
    elif args.with_filter:
        cfg = replace(cfg, use_filter=True)
    rcfg = cfg.recognizer()
    manifest = Path(args.corpus)
    try:
        rows = sc.read_manifest(manifest)
    except (OSError, ValueError) as exc:
        raise UsageError(f"{manifest}: {exc}") from None
    if not rows:
        raise UsageError(f"{manifest}: empty manifest")

    missing = [r.filename for r in rows if not (manifest.parent / r.filename).is_file()]
    if missing:
        for name in missing:
            print(f"error: missing clip {name}", file=sys.stderr)
            out.record("eval_missing", {"filename": name})
        return EXIT_ERROR

    hits = []
    for row in rows:
        clip = _load_clip(manifest.parent / row.filename)
        results = recognize(clip, store, rcfg)
        ok = len(results) == 1 and results[0].top_word == row.label.lower()
        if not ok:
            got = [r.top_word for r in results]
            log.info("miss %s: expected %s, got %s", row.filename, row.label, got)
        hits.append(ok)
    hits = np.array(hits)
    acc = float(hits.mean())

    out.record("eval_summary", {"clips": len(rows), "correct": int(hits.sum()),
                                "accuracy": acc, "filter": cfg.use_filter})
    out.text(f"filter {'on' if cfg.use_filter else 'off'}: {int(hits.sum())}/{len(rows)} "
             f"correct, accuracy {acc:.4f}")
    out.text(f"{'axis':<8} {'value':>7} {'n':>5} {'accuracy':>9}")
    for axis in ("stretch", "gain_db", "tilt"):
        values = sorted({_axis_value(r, axis) for r in rows})
        for val in values:
            mask = np.array([_axis_value(r, axis) == val for r in rows])
            a = float(hits[mask].mean())
            out.record("eval_axis", {"axis": axis, "value": val, "clips": int(mask.sum()),
                                     "accuracy": a, "filter": cfg.use_filter})
            out.text(f"{axis:<8} {val:>7g} {int(mask.sum()):>5} {a:>9.4f}")
    return EXIT_OK


# -- wiring -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fuzzyspeech",
                                description="Fuzzy paralinguistic filtering and DTW word recognition.")
    p.add_argument("--config", help="flat section.key = value config file")
    p.add_argument("--format", choices=("table", "records"), default="table")
    p.add_argument("--seed", type=int, help="corpus seed (synth)")
    p.add_argument("--verbose", "-v", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    e = sub.add_parser("enroll", help="add templates to a store")
    src = e.add_mutually_exclusive_group()
    src.add_argument("--lexicon", help="directory of <word>.wav or <word>__<tag>.wav files")
    src.add_argument("--word")
    e.add_argument("--audio", nargs="+")
    e.add_argument("--store", required=True)
    e.set_defaults(func=cmd_enroll)

    a = sub.add_parser("analyze", help="per-segment paralinguistic profile")
    a.add_argument("--input", required=True)
    a.add_argument("--store")
    a.add_argument("--frames-out", help="write per-frame features as JSON lines")
    a.set_defaults(func=cmd_analyze)

    f = sub.add_parser("filter", help="normalise segments, emit side-channel records")
    f.add_argument("--input", required=True)
    f.add_argument("--store")
    f.add_argument("--out", help="write filtered and original frame matrices (.npz)")
    f.set_defaults(func=cmd_filter)

    r = sub.add_parser("recognize", help="recognise isolated words")
    r.add_argument("--input", required=True, nargs="+")
    r.add_argument("--store", required=True)
    r.add_argument("--interactive", action="store_true")
    r.add_argument("--no-filter", action="store_true")
    r.add_argument("--dump-cost", metavar="DIR",
                   help="write the accumulated DTW matrix against the top word's template")
    r.add_argument("--top", type=int, default=3, help="hypotheses shown in table output")
    r.set_defaults(func=cmd_recognize)

    s = sub.add_parser("synth", help="generate the synthetic evaluation corpus")
    s.add_argument("--spec", help="JSON lexicon spec (default: built-in lexicon)")
    s.add_argument("--out", required=True)
    s.add_argument("--grid", choices=sorted(GRIDS))
    s.add_argument("--stretch", type=float, nargs="+")
    s.add_argument("--gain", type=float, nargs="+")
    s.add_argument("--tilt", type=float, nargs="+")
    s.add_argument("--homophone", action="store_true", help="also write homophone.wav")
    s.set_defaults(func=cmd_synth)

    v = sub.add_parser("eval", help="accuracy over a corpus manifest")
    v.add_argument("--store", required=True)
    v.add_argument("--corpus", required=True, help="manifest.tsv")
    mode = v.add_mutually_exclusive_group()
    mode.add_argument("--with-filter", action="store_true")
    mode.add_argument("--no-filter", action="store_true")
    v.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    out = Output(args.format)
    try:
        cfg = load_config(args.config) if args.config else Config()
        cfg.recognizer()  # surfaces bad variable files before any work
        return args.func(args, cfg, out)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
