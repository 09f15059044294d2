"""End-to-end analysis: smooth, register, test every AU x emotion pair, report.

Outputs of :func:`run_pipeline`:

``report.json``
    Versioned report with the grid and, per AU x emotion, the estimated
    ``mu0`` and ``alpha`` curves, ``FRATIO(t)``, both critical values, the
    significant zones and the effect class at each level.
``timeline.csv``
    Long-format table ``au, emotion, t, fratio, pointwise_critical,
    max_critical, above_pointwise, above_max``.
``summary.csv``
    One row per tested emotion listing the significant AUs at the
    max-statistic and the pointwise level.
"""

from __future__ import annotations

import csv
import dataclasses
import io as _io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .fanova import design_from_groups, ftest
from .fdcore import (
    Curve,
    MultiChannelCurve,
    TimeGrid,
    eval_expansion,
    make_bspline_basis,
    smooth_curve,
)
from .io import (
    AU_LABELS,
    EMOTIONS,
    IngestError,
    emotion_code,
    emotion_name,
    ingest_csv,
    list_csv,
    load_manifest,
    read_curve_csv,
    write_csv,
    write_curve_csv,
    VideoRecord,
)
from .registration import RegistrationConfig, register_by_reference
from .synth import Bump, MeanSpec, SynthConfig, generate

__all__ = [
    "SCHEMA_VERSION",
    "PipelineConfig",
    "SynthCorpusConfig",
    "PipelineError",
    "load_config",
    "load_sample",
    "smooth_records",
    "register_stage",
    "fanova_stage",
    "run_pipeline",
    "write_report",
    "emit_plot_data",
    "write_synthetic_corpus",
]

SCHEMA_VERSION = "1.0"
REPORT_FILES = ("report.json", "timeline.csv", "summary.csv")
# files the stages write next to their curves; never read back as videos
OUTPUT_CSVS = ("timeline.csv", "summary.csv", "warps.csv")


class PipelineError(RuntimeError):
    """A pipeline stage failed; carries the stage name and the input id."""

    def __init__(self, stage: str, input_id: str, message: str):
        super().__init__(f"[{stage}] {input_id}: {message}")
        self.stage = stage
        self.input_id = input_id


def _check_range(name, value, lo=None, hi=None, lo_open=False, hi_open=False):
    bad = (
        (lo is not None and (value <= lo if lo_open else value < lo))
        or (hi is not None and (value >= hi if hi_open else value > hi))
    )
    if bad:
        lb = "(" if lo_open else "["
        rb = ")" if hi_open else "]"
        raise ValueError(f"config field {name!r} = {value!r} outside {lb}{lo}, {hi}{rb}")


@dataclass(frozen=True)
class SynthCorpusConfig:
    """Synthetic OpenFace-style corpus: every AU shares a baseline shape and
    ``effects`` injects bumps into chosen (AU, emotion) pairs.

    Effects are not recentered: an injected pair differs from the neutral
    group and every other emotion matches neutral exactly.

    Each effect is a mapping with keys ``au``, ``emotion`` (name or code),
    ``center``, ``width``, ``amplitude`` and optionally ``shape``.
    """

    K: int = 6
    n_frames: int = 110
    noise_sd: float = 0.2
    warp_sd: float = 0.0
    seed: int = 0
    baseline: float = 1.0
    baseline_bump: float = 1.0
    effects: tuple = ()

    def __post_init__(self):
        _check_range("synth.K", self.K, 2, 96)
        _check_range("synth.n_frames", self.n_frames, 4)
        _check_range("synth.noise_sd", self.noise_sd, 0)
        _check_range("synth.warp_sd", self.warp_sd, 0)
        _check_range("synth.baseline", self.baseline, 0, 5)
        effects = []
        for e in self.effects:
            e = dict(e)
            unknown = set(e) - {"au", "emotion", "center", "width", "amplitude", "shape"}
            if unknown:
                raise ValueError(f"unknown synth effect keys: {sorted(unknown)}")
            if e.get("au") not in AU_LABELS:
                raise ValueError(f"synth effect names unknown AU {e.get('au')!r}")
            code = emotion_code(e["emotion"])
            if code == 1:
                raise ValueError("synth effects cannot target the neutral group")
            e["emotion"] = emotion_name(code)
            Bump(e["center"], e["width"], e["amplitude"], e.get("shape", "gaussian"))
            effects.append(e)
        object.__setattr__(self, "effects", tuple(effects))

    def to_synth_config(self) -> SynthConfig:
        G = len(EMOTIONS) - 1
        per_au = {}
        for e in self.effects:
            spec = per_au.setdefault(e["au"], [[] for _ in range(G)])
            spec[emotion_code(e["emotion"]) - 2].append(
                Bump(e["center"], e["width"], e["amplitude"], e.get("shape", "gaussian"))
            )
        mean = MeanSpec(self.baseline, 0.0, (Bump(0.5, 0.12, self.baseline_bump),))
        return SynthConfig(
            K=self.K,
            G=G,
            grid=TimeGrid.uniform(self.n_frames),
            mu0_spec=mean,
            noise_sd=self.noise_sd,
            warp_sd=self.warp_sd,
            seed=self.seed,
            clamp=True,
            recenter=False,
            channel_labels=AU_LABELS,
            channel_effects={au: tuple(tuple(s) for s in spec) for au, spec in per_au.items()},
        )


@dataclass(frozen=True)
class PipelineConfig:
    """Pipeline settings.

    ``correction`` is ``"none"`` (each AU x emotion test at level ``alpha``)
    or ``"bonferroni"`` (level ``alpha`` divided by the number of tests).
    ``fpca_components`` sets the number of components in the per-AU FPCA
    summary of the registered curves (95% variance rule when ``None``).
    """

    n_basis: int = 20
    order: int = 4
    smoothing_lambda: float = 1e-6
    n_grid: int = 101
    reference_au: str = "AU25"
    register: bool = True
    registration: RegistrationConfig = field(default_factory=RegistrationConfig)
    fpca_components: Optional[int] = None
    alpha: float = 0.05
    n_permutations: int = 1000
    correction: str = "none"
    seed: int = 0
    n_jobs: int = 1
    output_dir: str = "out"
    synth: SynthCorpusConfig = field(default_factory=SynthCorpusConfig)

    def __post_init__(self):
        _check_range("order", self.order, 1, 10)
        _check_range("n_basis", self.n_basis, self.order, 500)
        _check_range("smoothing_lambda", self.smoothing_lambda, 0)
        _check_range("n_grid", self.n_grid, 5, 10000)
        _check_range("alpha", self.alpha, 0, 1, lo_open=True, hi_open=True)
        _check_range("n_permutations", self.n_permutations, 100)
        _check_range("n_jobs", self.n_jobs, 1, 256)
        _check_range("seed", self.seed, 0, 2**64 - 1)
        if self.fpca_components is not None:
            _check_range("fpca_components", self.fpca_components, 1)
        if self.correction not in ("none", "bonferroni"):
            raise ValueError(f"config field 'correction' must be 'none' or 'bonferroni', got {self.correction!r}")
        if isinstance(self.registration, Mapping):
            object.__setattr__(self, "registration", _from_mapping(RegistrationConfig, self.registration, "registration"))
        if isinstance(self.synth, Mapping):
            object.__setattr__(self, "synth", _from_mapping(SynthCorpusConfig, self.synth, "synth"))

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["synth"]["effects"] = [dict(e) for e in self.synth.effects]
        return out

    def analysis_dict(self) -> dict:
        """Settings that affect results (no paths, no thread counts)."""
        out = self.to_dict()
        for key in ("output_dir", "n_jobs", "synth"):
            out.pop(key)
        return out


def _from_mapping(cls, data: Mapping, where: str = ""):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        prefix = f"{where}." if where else ""
        raise ValueError(f"unknown config keys: {', '.join(prefix + k for k in unknown)}")
    return cls(**dict(data))


def load_config(path=None, **overrides) -> PipelineConfig:
    """Read a JSON config file (unknown keys rejected) and apply overrides.

    ``None`` overrides are ignored so CLI flags can be passed through.
    """
    data = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ValueError(f"{path}: config must be a JSON object")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return _from_mapping(PipelineConfig, data)


# ---------------------------------------------------------------- stages


def _is_curve_file(path) -> bool:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    return first.split(",")[0].strip() == "t"


def load_sample(input_dir, manifest=None, exclude: Sequence[str] = ()) -> list:
    """Read every CSV in ``input_dir`` except the pipeline's own outputs.

    Returns :class:`VideoRecord` objects for OpenFace files and
    :class:`MultiChannelCurve` objects for curve files.
    """
    files = list_csv(input_dir, [*exclude, *OUTPUT_CSVS])
    if not files:
        raise PipelineError("ingest", str(input_dir), "no CSV files found")
    manifest = load_manifest(manifest) if isinstance(manifest, (str, Path)) else manifest
    out = []
    for f in files:
        try:
            out.append(read_curve_csv(f, manifest) if _is_curve_file(f) else ingest_csv(f, manifest))
        except (IngestError, ValueError) as exc:
            raise PipelineError("ingest", f.name, str(exc)) from exc
    return out


def _group_of(item):
    return item.group


def validate_groups(items) -> list:
    """Check the group sizes; return the sorted group indices present."""
    counts = {}
    for item in items:
        counts[_group_of(item)] = counts.get(_group_of(item), 0) + 1
    if 0 not in counts:
        raise PipelineError("validate", "groups", "no neutral videos (emotion code 01)")
    if len(counts) < 2:
        raise PipelineError("validate", "groups", "need the neutral group and at least one emotion")
    small = [emotion_name(g + 1) for g, c in sorted(counts.items()) if c < 2]
    if small:
        raise PipelineError("validate", "groups", f"fewer than 2 videos for: {', '.join(small)}")
    return sorted(counts)


def smooth_records(items, config: PipelineConfig) -> list:
    """Penalized spline smoothing of every channel, sampled on the common grid.

    Curves that are already on the common grid (curve files) pass through.
    """
    grid = TimeGrid.uniform(config.n_grid)
    basis = make_bspline_basis(1.0, config.n_basis, config.order)
    out = []
    for item in items:
        if isinstance(item, MultiChannelCurve):
            out.append(item)
            continue
        vid = item.video_id
        try:
            tgrid = TimeGrid(item.normalized_times(), 1.0)
            rows = [
                eval_expansion(smooth_curve(Curve(tgrid, col), basis, config.smoothing_lambda), grid).values
                for col in item.frames.T
            ]
        except (ValueError, IngestError, np.linalg.LinAlgError) as exc:
            raise PipelineError("smooth", vid, str(exc)) from exc
        out.append(MultiChannelCurve(grid, np.vstack(rows), item.labels, vid, item.group))
    return out


def register_stage(curves, config: PipelineConfig):
    """Register by ``config.reference_au``; returns ``(curves, result)``."""
    if not config.register:
        return list(curves), None
    try:
        result = register_by_reference(
            curves,
            config.reference_au,
            config.registration,
            TimeGrid.uniform(config.n_grid),
            config.n_jobs,
        )
    except KeyError as exc:
        raise PipelineError("register", config.reference_au, str(exc.args[0])) from exc
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise PipelineError("register", "sample", str(exc)) from exc
    return list(result.registered), result


def _pair_seed(seed: int, au_index: int, code: int) -> int:
    return int(np.random.SeedSequence([seed, au_index, code]).generate_state(1)[0])


def _floats(a):
    return [float(x) for x in np.asarray(a).ravel()]


def _test_one(Y, design, grid, design_g, code, au, au_index, alpha, config):
    rep = ftest(
        Y,
        design,
        g_tilde=design_g,
        alpha=alpha,
        n_permutations=config.n_permutations,
        seed=_pair_seed(config.seed, au_index, code),
        grid=grid,
    )
    F = rep.fratio.values
    return {
        "au": au,
        "emotion": emotion_name(code),
        "emotion_code": code,
        "df_model": rep.df_model,
        "df_error": rep.df_error,
        "level": alpha,
        "pointwise_critical": rep.pointwise_critical,
        "max_critical": rep.max_critical,
        "max_fratio": float(F.max()),
        "max_pvalue": rep.max_pvalue,
        "zones_pointwise": [list(z) for z in rep.zones("pointwise")],
        "zones_max": [list(z) for z in rep.zones("max")],
        "effect_class_pointwise": rep.effect("pointwise"),
        "effect_class_max": rep.effect("max"),
        "mu0": _floats(rep.full_fit.mu0.values),
        "alpha": _floats(rep.full_fit.alpha(design_g).values),
        "fratio": _floats(F),
    }


def fanova_stage(curves, config: PipelineConfig, registration=None) -> dict:
    """Per-AU, per-emotion functional F-tests; returns the report dict."""
    present = validate_groups(curves)
    grid = curves[0].grid
    labels = curves[0].channel_labels
    for c in curves:
        if c.grid != grid or c.channel_labels != labels:
            raise PipelineError("fanova", c.video_id, "curves are not on a common grid/channel set")
    # stable order: group, then video id
    order = sorted(range(len(curves)), key=lambda i: (curves[i].group, curves[i].video_id))
    curves = [curves[i] for i in order]
    remap = {g: j for j, g in enumerate(present)}
    design = design_from_groups([remap[c.group] for c in curves], len(present) - 1)
    X = np.stack([c.values for c in curves])
    emotions = present[1:]
    n_tests = len(labels) * len(emotions)
    alpha = config.alpha / n_tests if config.correction == "bonferroni" else config.alpha
    if alpha * (config.n_permutations + 1) < 1:
        raise PipelineError(
            "fanova", "config",
            f"{config.n_permutations} permutations cannot resolve level {alpha:.3g}; "
            f"use at least {int(np.ceil(1 / alpha))}",
        )

    jobs = [
        (X[:, d, :], design, grid, remap[g], g + 1, au, AU_LABELS.index(au) if au in AU_LABELS else d, alpha, config)
        for d, au in enumerate(labels)
        for g in emotions
    ]

    def run(job):
        try:
            return _test_one(*job)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise PipelineError("fanova", f"{job[5]}/{emotion_name(job[4])}", str(exc)) from exc

    if config.n_jobs > 1:
        with ThreadPoolExecutor(config.n_jobs) as pool:
            analyses = list(pool.map(run, jobs))
    else:
        analyses = [run(j) for j in jobs]

    fpca_summary = _fpca_summary(X, grid, labels, config.fpca_components)
    return {
        "schema_version": SCHEMA_VERSION,
        "config": config.analysis_dict(),
        "grid": _floats(grid.points),
        "channels": list(labels),
        "emotions": [emotion_name(g + 1) for g in emotions],
        "videos": [{"id": c.video_id, "emotion": emotion_name(c.group + 1)} for c in curves],
        "n_tests": n_tests,
        "test_level": alpha,
        "registration": None if registration is None else {
            "reference_au": config.reference_au,
            "n_iterations": registration.n_iterations,
            "converged": bool(registration.converged),
        },
        "fpca": fpca_summary,
        "analyses": analyses,
    }


def _fpca_summary(X, grid, labels, J):
    from .fpca import fpca_arrays

    out = []
    n = X.shape[0]
    for d, au in enumerate(labels):
        Jd = None if J is None else min(J, n - 1, X.shape[2])
        _, ev, _, _, total = fpca_arrays(X[:, d : d + 1, :], grid.weights, Jd)
        out.append({
            "au": au,
            "eigenvalues": _floats(ev),
            "explained_variance_ratio": _floats(ev / total) if total > 0 else [0.0] * ev.size,
        })
    return out


# ---------------------------------------------------------------- output


def _fmt(x) -> str:
    return repr(float(x))


def _timeline_rows(report):
    grid = report["grid"]
    for a in report["analyses"]:
        for t, F in zip(grid, a["fratio"]):
            yield [
                a["au"], a["emotion"], _fmt(t), _fmt(F), _fmt(a["pointwise_critical"]),
                _fmt(a["max_critical"]), int(F > a["pointwise_critical"]), int(F > a["max_critical"]),
            ]


def _summary_rows(report):
    for emo in report["emotions"]:
        rows = [a for a in report["analyses"] if a["emotion"] == emo]
        yield [
            emo,
            " ".join(a["au"] for a in rows if a["zones_max"]),
            " ".join(a["au"] for a in rows if a["zones_pointwise"]),
        ]


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_report(report: dict, out_dir) -> dict:
    """Write report.json, timeline.csv and summary.csv; return their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / name for name in REPORT_FILES}
    with open(paths["report.json"], "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1)
        fh.write("\n")
    _write_rows(
        paths["timeline.csv"],
        ["au", "emotion", "t", "fratio", "pointwise_critical", "max_critical", "above_pointwise", "above_max"],
        _timeline_rows(report),
    )
    _write_rows(paths["summary.csv"], ["emotion", "significant_aus_max", "significant_aus_pointwise"], _summary_rows(report))
    return paths


def load_report(report) -> dict:
    if isinstance(report, dict):
        return report
    p = Path(report)
    if p.is_dir():
        p = p / "report.json"
    with open(p, encoding="utf-8") as fh:
        return json.load(fh)


PLOT_COLUMNS = ("t", "mu0", "mu0_plus_alpha", "fratio", "pointwise_crit", "max_crit")


def emit_plot_data(report, au: str, emotion) -> str:
    """Plot-ready CSV text for one AU x emotion pair (6 columns, one row per grid point)."""
    report = load_report(report)
    name = emotion_name(emotion_code(emotion))
    match = [a for a in report["analyses"] if a["au"] == au and a["emotion"] == name]
    if not match:
        raise KeyError(f"no analysis for AU {au!r} and emotion {name!r} in the report")
    a = match[0]
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PLOT_COLUMNS)
    for t, m, al, F in zip(report["grid"], a["mu0"], a["alpha"], a["fratio"]):
        w.writerow([_fmt(t), _fmt(m), _fmt(m + al), _fmt(F), _fmt(a["pointwise_critical"]), _fmt(a["max_critical"])])
    return buf.getvalue()


def run_pipeline(config: PipelineConfig, input_dir, out_dir=None, manifest=None) -> dict:
    """Smooth, register and test the corpus in ``input_dir``; write the report.

    Returns the report dict. ``out_dir`` defaults to ``config.output_dir``.
    """
    exclude = [manifest] if isinstance(manifest, (str, Path)) else []
    items = load_sample(input_dir, manifest, exclude)
    validate_groups(items)
    curves = smooth_records(items, config)
    curves, reg = register_stage(curves, config)
    report = fanova_stage(curves, config, reg)
    write_report(report, out_dir or config.output_dir)
    return report


def write_synthetic_corpus(cfg: SynthCorpusConfig, out_dir) -> list:
    """Write a RAVDESS-named OpenFace-style corpus; returns the file paths.

    Video k of emotion e is named ``02-01-{e}-01-{statement}-{repetition}-{actor}.csv``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    curves, _ = generate(cfg.to_synth_config())
    paths = []
    for c in curves:
        k = int(c.video_id.split("_k")[1]) - 1
        actor, rep, stmt = k % 24 + 1, (k // 24) % 2 + 1, (k // 48) % 2 + 1
        name = f"02-01-{c.group + 1:02d}-01-{stmt:02d}-{rep:02d}-{actor:02d}.csv"
        record = VideoRecord(name, c.group + 1, f"{actor:02d}", np.arange(1, len(c.grid) + 1), c.values.T)
        write_csv(record, out / name)
        paths.append(out / name)
    return paths


def write_curves(curves, out_dir) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for c in curves:
        p = out / f"{c.video_id}.csv"
        write_curve_csv(c, p)
        paths.append(p)
    return paths
