"""Command-line entry point and benchmark harness.

Subcommands: ``denoise`` (single image), ``synth-noise``, ``evaluate``
(metrics only) and ``bench`` (noise -> denoise -> score sweep over a list
of SNRs, persisted as CSV). Progress goes to stderr; stdout carries only
machine-readable results. Exit codes: 0 success, 1 configuration error,
2 runtime failure.

File-based commands feed the pipeline unit-scaled intensities (8-bit data
divided by 255), which is the scale the bundled presets were tuned for;
results are rescaled on output.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .denoise import DenoiseConfig, denoise_image
from .imggrid import read_image, write_image
from .noisemetrics import SNR_CONVENTIONS, QualityReport, add_awgn, psnr, ssim

INTENSITY_SCALE = 255.0

# bundled hyperparameter sets, named for the benchmark image and SNR
# they were tuned on; all use P_h = 3, W_h = 10
PRESETS = {
    "lena16": {"p_h": 3, "w_h": 10, "d": 22, "p": 0.051, "kinetic": 1.58},
    "house8": {"p_h": 3, "w_h": 10, "d": 11, "p": 0.085, "kinetic": 1.53},
    "lake2": {"p_h": 3, "w_h": 10, "d": 7, "p": 0.29, "kinetic": 2.3},
}

CSV_COLUMNS = [
    "image", "snr_db", "P_h", "W_h", "d", "p", "kinetic", "seed",
    "noisy_psnr", "noisy_ssim", "out_psnr", "out_ssim", "seconds",
]

CONFIG_KEYS = {
    "image": str,
    "output_dir": str,
    "report": str,
    "snr": str,
    "preset": str,
    "seed": int,
    "d": int,
    "p": float,
    "kinetic": float,
    "patch_half": int,
    "window_half": int,
    "stride": int,
    "window_stride": int,
    "distance_mode": str,
    "pad_mode": str,
    "snr_convention": str,
}

# config-file/flag key -> DenoiseConfig field
CFG_FIELDS = {
    "patch_half": "p_h",
    "window_half": "w_h",
    "d": "d",
    "p": "p",
    "kinetic": "kinetic",
    "stride": "stride",
    "window_stride": "window_stride",
    "distance_mode": "distance_mode",
    "pad_mode": "pad_mode",
    "seed": "seed",
}


class ConfigError(ValueError):
    """Invalid configuration (exit code 1)."""


@dataclass
class ExperimentSpec:
    """One benchmark sweep: a clean image degraded at several SNRs."""

    input_image: Path
    snr_db: list[float]
    cfg: DenoiseConfig
    output_dir: Path
    report: str = "csv"
    snr_convention: str = "power"


@dataclass
class RunRecord:
    """Result of one (image, snr) run; both reports score against the
    same clean reference."""

    image: str
    snr_db: float
    cfg: DenoiseConfig
    noisy: QualityReport
    denoised: QualityReport
    seconds: float


def _parse_kv_lines(path: Path) -> dict[str, str]:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(
                f"{path}:{lineno}: unknown key {key!r} (known keys: {', '.join(sorted(CONFIG_KEYS))})"
            )
        raw[key] = value
    return raw


def _coerce(key: str, value):
    if value is None or isinstance(value, CONFIG_KEYS[key]):
        return value
    try:
        return CONFIG_KEYS[key](value)
    except ValueError:
        raise ConfigError(
            f"key {key!r}: cannot parse {value!r} as {CONFIG_KEYS[key].__name__}"
        ) from None


def _parse_snr_list(text: str) -> list[float]:
    entries = [tok.strip() for tok in text.split(",")]
    values = []
    for tok in entries:
        if not tok:
            continue
        try:
            val = float(tok)
        except ValueError:
            raise ConfigError(f"invalid SNR value {tok!r}") from None
        if not np.isfinite(val):
            raise ConfigError(f"SNR values must be finite, got {tok!r}")
        values.append(val)
    return values


def build_config(settings: dict) -> DenoiseConfig:
    """Resolve a DenoiseConfig from preset and explicit keys (explicit wins)."""
    preset = settings.get("preset")
    fields: dict = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r} (available: {', '.join(PRESETS)})")
        fields.update(PRESETS[preset])
    for key, name in CFG_FIELDS.items():
        if settings.get(key) is not None:
            fields[name] = _coerce(key, settings[key])
    key_names = {"p_h": "patch_half", "w_h": "window_half"}
    missing = [key_names.get(n, n) for n in ("p_h", "w_h", "d", "p", "kinetic") if n not in fields]
    if missing:
        raise ConfigError("incomplete hyperparameters: give a preset or set " + ", ".join(missing))
    try:
        return DenoiseConfig(**fields)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_config(path=None, overrides: dict | None = None) -> ExperimentSpec:
    """Build a validated ExperimentSpec from a key=value file and/or flag
    overrides (flags win). Unknown keys are hard errors."""
    settings: dict = {}
    if path is not None:
        settings.update(_parse_kv_lines(Path(path)))
    for key, value in (overrides or {}).items():
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown configuration key {key!r}")
        if value is not None:
            settings[key] = value
    if "image" not in settings:
        raise ConfigError("missing required key 'image'")
    image = Path(_coerce("image", settings["image"]))
    if not image.exists():
        raise ConfigError(f"input image {image} does not exist")
    report = settings.get("report", "csv")
    if report not in ("csv", "markdown"):
        raise ConfigError(f"report must be 'csv' or 'markdown', got {report!r}")
    convention = settings.get("snr_convention", "power")
    if convention not in SNR_CONVENTIONS:
        raise ConfigError(f"snr_convention must be one of {SNR_CONVENTIONS}, got {convention!r}")
    snr_text = settings.get("snr", "")
    snr_list = _parse_snr_list(snr_text) if isinstance(snr_text, str) else list(snr_text)
    return ExperimentSpec(
        input_image=image,
        snr_db=snr_list,
        cfg=build_config(settings),
        output_dir=Path(_coerce("output_dir", settings.get("output_dir", "."))),
        report=report,
        snr_convention=convention,
    )


def _fmt(value) -> str:
    return str(value)


def record_to_row(rec: RunRecord) -> list[str]:
    return [
        rec.image,
        _fmt(rec.snr_db),
        _fmt(rec.cfg.p_h),
        _fmt(rec.cfg.w_h),
        _fmt(rec.cfg.d),
        _fmt(rec.cfg.p),
        _fmt(rec.cfg.kinetic),
        _fmt(rec.cfg.seed),
        _fmt(rec.noisy.psnr_db),
        _fmt(rec.noisy.ssim),
        _fmt(rec.denoised.psnr_db),
        _fmt(rec.denoised.ssim),
        _fmt(rec.seconds),
    ]


def write_records(path, records: list[RunRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow(record_to_row(rec))


def read_records(path) -> list[RunRecord]:
    """Read back a records CSV; inverse of write_records for the echoed
    fields (unechoed DenoiseConfig fields take their defaults)."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_COLUMNS:
            raise ConfigError(f"{path}: unexpected CSV columns {header}")
        for row in reader:
            cfg = DenoiseConfig(
                p_h=int(row[2]),
                w_h=int(row[3]),
                d=int(row[4]),
                p=float(row[5]),
                kinetic=float(row[6]),
                seed=int(row[7]),
            )
            records.append(
                RunRecord(
                    image=row[0],
                    snr_db=float(row[1]),
                    cfg=cfg,
                    noisy=QualityReport(psnr_db=float(row[8]), ssim=float(row[9])),
                    denoised=QualityReport(psnr_db=float(row[10]), ssim=float(row[11])),
                    seconds=float(row[12]),
                )
            )
    return records


def _denoise_scaled(noisy: np.ndarray, cfg: DenoiseConfig, progress=None) -> np.ndarray:
    """Denoise at unit intensity scale and rescale, clamping to [0, 255]."""
    out = denoise_image(noisy / INTENSITY_SCALE, cfg, progress=progress)
    return np.clip(out * INTENSITY_SCALE, 0.0, 255.0)


def _band_progress(label: str):
    def report(done: int, total: int) -> None:
        end = "\n" if done == total else "\r"
        print(f"  {label}: band {done}/{total}", file=sys.stderr, end=end, flush=True)

    return report


def run_experiment(spec: ExperimentSpec, quiet: bool = False) -> list[RunRecord]:
    """Execute every (image, snr) run of a spec.

    Per-run failures are reported on stderr and skipped; surviving
    records are returned in spec order and persisted to
    ``output_dir/records.csv``.
    """
    spec.output_dir.mkdir(parents=True, exist_ok=True)
    records: list[RunRecord] = []
    stem = spec.input_image.stem
    for snr_db in spec.snr_db:
        label = f"{stem} @ {snr_db:g} dB"
        try:
            clean = read_image(spec.input_image)
            noisy, _ = add_awgn(clean, snr_db, spec.cfg.seed, convention=spec.snr_convention)
            noisy_report = QualityReport(psnr_db=psnr(clean, noisy), ssim=ssim(clean, noisy))
            start = time.perf_counter()
            denoised = _denoise_scaled(
                noisy, spec.cfg, progress=None if quiet else _band_progress(label)
            )
            seconds = time.perf_counter() - start
            denoised_report = QualityReport(psnr_db=psnr(clean, denoised), ssim=ssim(clean, denoised))
            write_image(spec.output_dir / f"{stem}_snr{snr_db:g}dB_denoised.png", denoised)
            records.append(
                RunRecord(
                    image=stem,
                    snr_db=float(snr_db),
                    cfg=spec.cfg,
                    noisy=noisy_report,
                    denoised=denoised_report,
                    seconds=seconds,
                )
            )
            if not quiet:
                print(
                    f"  {label}: noisy {noisy_report.psnr_db:.2f} dB -> "
                    f"denoised {denoised_report.psnr_db:.2f} dB in {seconds:.1f}s",
                    file=sys.stderr,
                )
        except Exception as exc:  # noqa: BLE001 - keep remaining runs alive
            print(f"run failed ({label}): {exc}", file=sys.stderr)
    write_records(spec.output_dir / "records.csv", records)
    return records


def render_report(records: list[RunRecord], fmt: str) -> str:
    if fmt == "csv":
        lines = [",".join(CSV_COLUMNS)]
        lines += [",".join(record_to_row(rec)) for rec in records]
        return "\n".join(lines)
    header = "| " + " | ".join(CSV_COLUMNS) + " |"
    rule = "|" + "|".join(" --- " for _ in CSV_COLUMNS) + "|"
    lines = [header, rule]
    lines += ["| " + " | ".join(record_to_row(rec)) + " |" for rec in records]
    return "\n".join(lines)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are configuration errors
        raise ConfigError(message)


def _add_cfg_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--preset", choices=sorted(PRESETS), help="bundled hyperparameter set")
    sub.add_argument("--d", type=int, help="retained subspace dimension")
    sub.add_argument("--p", type=float, help="interaction constant")
    sub.add_argument("--kinetic", type=float, help="Laplacian weight (hbar^2/2m)")
    sub.add_argument("--patch-half", type=int, dest="patch_half")
    sub.add_argument("--window-half", type=int, dest="window_half")
    sub.add_argument("--stride", type=int)
    sub.add_argument("--window-stride", type=int, dest="window_stride")
    sub.add_argument("--distance-mode", choices=("spatial", "pixel-vector"), dest="distance_mode")
    sub.add_argument("--pad-mode", choices=("mirror", "zero", "replicate"), dest="pad_mode")
    sub.add_argument("--seed", type=int)


def _build_parser() -> _Parser:
    parser = _Parser(prog="qmpi", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    subs = parser.add_subparsers(dest="command", required=True)

    den = subs.add_parser("denoise", help="denoise one grayscale image file")
    den.add_argument("--input", required=True)
    den.add_argument("--output-dir", default=".", dest="output_dir")
    _add_cfg_flags(den)

    syn = subs.add_parser("synth-noise", help="write seeded AWGN-corrupted copies of an image")
    syn.add_argument("--input", required=True)
    syn.add_argument("--output-dir", default=".", dest="output_dir")
    syn.add_argument("--snr", required=True, help="comma-separated SNR list in dB")
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--snr-convention", choices=SNR_CONVENTIONS, default="power",
                     dest="snr_convention")

    ev = subs.add_parser("evaluate", help="PSNR/SSIM of an image against a reference")
    ev.add_argument("--input", required=True)
    ev.add_argument("--reference", required=True)

    ben = subs.add_parser("bench", help="run a full noise/denoise/score experiment")
    ben.add_argument("--config", help="key = value experiment file")
    ben.add_argument("--input", dest="image")
    ben.add_argument("--output-dir", dest="output_dir")
    ben.add_argument("--snr", help="comma-separated SNR list in dB")
    ben.add_argument("--report", choices=("csv", "markdown"))
    ben.add_argument("--snr-convention", choices=SNR_CONVENTIONS, dest="snr_convention")
    _add_cfg_flags(ben)

    return parser


def _cfg_overrides(args: argparse.Namespace) -> dict:
    keys = ("preset", "d", "p", "kinetic", "patch_half", "window_half", "stride",
            "window_stride", "distance_mode", "pad_mode", "seed")
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def _cmd_denoise(args) -> int:
    cfg = build_config(_cfg_overrides(args))
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    noisy = read_image(args.input)
    stem = Path(args.input).stem
    denoised = _denoise_scaled(noisy, cfg, progress=_band_progress(stem))
    out_path = out_dir / f"{stem}_denoised.png"
    write_image(out_path, denoised)
    print(out_path)
    return 0


def _cmd_synth_noise(args) -> int:
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    clean = read_image(args.input)
    stem = Path(args.input).stem
    print("path,snr_db,sigma,realized_sigma,seed")
    for snr_db in _parse_snr_list(args.snr):
        noisy, spec = add_awgn(clean, snr_db, args.seed, convention=args.snr_convention)
        out_path = out_dir / f"{stem}_snr{snr_db:g}dB_seed{args.seed}.png"
        write_image(out_path, noisy)
        sidecar = out_path.with_suffix(".txt")
        sidecar.write_text(
            f"snr_db = {spec.snr_db}\nsigma = {spec.sigma}\n"
            f"realized_sigma = {spec.realized_sigma}\nseed = {spec.seed}\n"
        )
        print(f"{out_path},{spec.snr_db},{spec.sigma},{spec.realized_sigma},{spec.seed}")
    return 0


def _cmd_evaluate(args) -> int:
    reference = read_image(args.reference)
    test = read_image(args.input)
    print("psnr_db,ssim")
    print(f"{psnr(reference, test)},{ssim(reference, test)}")
    return 0


def _cmd_bench(args) -> int:
    overrides = _cfg_overrides(args)
    for key in ("image", "output_dir", "snr", "report", "snr_convention"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    spec = parse_config(args.config, overrides)
    records = run_experiment(spec)
    print(render_report(records, spec.report))
    if len(records) < len(spec.snr_db):
        print(f"{len(spec.snr_db) - len(records)} run(s) failed", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        handler = {
            "denoise": _cmd_denoise,
            "synth-noise": _cmd_synth_noise,
            "evaluate": _cmd_evaluate,
            "bench": _cmd_bench,
        }[args.command]
        return handler(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
