"""Command-line surface for the cipher, the networks, and the study reports.

Exit codes are a stable contract for scripting: 0 success, 2 usage or
validation problems, 3 data/shape problems (bad files, indivisible grids),
4 numeric failure during training.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .cipher import (brute_force_years, derive_key, encrypt, decrypt,
                     format_key_file, keyspace, parse_key_file)
from .errors import ConfigError, FormatError, NumericFailure, ShapeMismatchError
from .imaging import (ImageBuffer, histogram, mean_abs_adjacent_correlation,
                      read_ppm, write_metrics_csv, write_ppm)
from .pipeline import (beta_sweep, load_model, parse_train_config,
                       receive, residual_attack, send, train)

__all__ = ["main"]


def _read_bytes(path: str) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from None


def _read_text(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from None


def _write_bytes(path: str, data: bytes) -> None:
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from None


def _write_text(path: str, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from None


def _load_image(path: str) -> ImageBuffer:
    return read_ppm(_read_bytes(path))


def _load_key(path: str):
    return parse_key_file(_read_text(path))


# ---------------------------------------------------------------------------
# Commands

def cmd_keygen(args) -> int:
    if args.grid < 1:
        raise ConfigError(f"--grid must be >= 1, got {args.grid}")
    if args.seed < 0:
        raise ConfigError(f"--seed must be a non-negative integer, got {args.seed}")
    key = derive_key(args.seed, args.grid)
    _write_text(args.out, format_key_file(key))
    return 0


def cmd_encrypt(args) -> int:
    key = _load_key(args.key)
    image = _load_image(getattr(args, "in"))
    out = encrypt(image, key) if args.command == "encrypt" else decrypt(image, key)
    _write_bytes(args.out, write_ppm(out))
    return 0


def cmd_train(args) -> int:
    config = parse_train_config(_read_text(args.config))

    def progress(record):
        if args.log_every and record.epoch % args.log_every == 0:
            print(f"epoch {record.epoch}: encode_loss={record.encode_loss:.6g} "
                  f"cover_mse={record.cover_mse:.4g} secret_mse={record.secret_mse:.4g}",
                  file=sys.stderr)

    try:
        report = train(config, on_epoch=progress, checkpoint_path=args.out_checkpoint)
    except OSError as exc:
        raise ConfigError(f"cannot write {args.out_checkpoint}: {exc}") from None
    if args.metrics_csv:
        _write_text(args.metrics_csv, write_metrics_csv(report.records))
    print(f"trained {config.epochs} epochs in {report.duration_seconds:.1f}s; "
          f"final encode_loss={report.records[-1].encode_loss:.6g}")
    return 0


def cmd_hide(args) -> int:
    model = load_model(_read_bytes(args.checkpoint))
    key = _load_key(args.key)
    cover = _load_image(args.cover)
    secret = _load_image(args.secret)
    container = send(secret, cover, key, model)
    _write_bytes(args.out, write_ppm(container))
    return 0


def cmd_reveal(args) -> int:
    model = load_model(_read_bytes(args.checkpoint))
    key = _load_key(args.key)
    container = _load_image(args.container)
    revealed, secret_out = receive(container, key, model)
    _write_bytes(args.out_revealed, write_ppm(revealed))
    _write_bytes(args.out_secret, write_ppm(secret_out))
    return 0


def cmd_attack(args) -> int:
    model = load_model(_read_bytes(args.checkpoint))
    key = _load_key(args.key) if args.key else None
    cover = _load_image(args.cover)
    secret = _load_image(args.secret)
    residual, similarity = residual_attack(secret, cover, key, model)
    _write_bytes(args.out_residual, write_ppm(residual))
    _write_text(args.out_csv, f"encrypted,similarity\n{int(key is not None)},{similarity:.9g}\n")
    print(f"similarity={similarity:.6g} (encrypted={key is not None})")
    return 0


def _histogram_heatmap(counts: np.ndarray) -> ImageBuffer:
    peak = counts.max() or 1
    rows = np.floor(counts.astype(np.float64) / peak * 255.0 + 0.5).astype(np.uint8)
    return ImageBuffer(np.repeat(rows, 16, axis=0)[:, :, None])


def cmd_report(args) -> int:
    if args.what == "histogram":
        if len(args.inputs) != 1:
            raise ConfigError("histogram report takes exactly one --in image")
        counts = histogram(_load_image(args.inputs[0]))
        lines = ["channel,bin,count"]
        for c in range(counts.shape[0]):
            lines += [f"{c},{b},{counts[c, b]}" for b in range(256)]
        _write_text(args.out_csv, "\n".join(lines) + "\n")
        if args.out_heatmap:
            _write_bytes(args.out_heatmap, write_ppm(_histogram_heatmap(counts)))
    elif args.what == "correlation":
        if not args.inputs:
            raise ConfigError("correlation report needs at least one --in image")
        grids = _parse_int_list(args.grids, "--grids")
        images = [_load_image(p) for p in args.inputs]
        lines = ["grid_side,blocks,mean_abs_correlation"]
        for g in grids:
            key = derive_key(args.key_seed + g, g)
            vals = [mean_abs_adjacent_correlation(encrypt(img, key)) for img in images]
            lines.append(f"{g},{g * g},{float(np.mean(vals)):.9g}")
        _write_text(args.out_csv, "\n".join(lines) + "\n")
    elif args.what == "keyspace":
        if args.blocks < 1:
            raise ConfigError(f"--blocks must be >= 1, got {args.blocks}")
        log10_perms, log2_perms = keyspace(args.blocks)
        years = brute_force_years(args.blocks, args.ops_per_second)
        _write_text(args.out_csv,
                    "blocks,log10_permutations,log2_permutations,log10_years\n"
                    f"{args.blocks},{log10_perms:.9g},{log2_perms:.9g},{years:.9g}\n")
    else:  # sweep
        if not args.config:
            raise ConfigError("sweep report needs --config")
        base = parse_train_config(_read_text(args.config))
        betas = [float(b) for b in args.betas.split(",")]
        rows = beta_sweep(base, betas)
        lines = ["beta,cover_mse,secret_mse"]
        lines += [f"{r.beta:.9g},{r.cover_mse:.9g},{r.secret_mse:.9g}" for r in rows]
        _write_text(args.out_csv, "\n".join(lines) + "\n")
    return 0


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"{flag} expects comma-separated integers, got {text!r}") from None
    if not values:
        raise ConfigError(f"{flag} is empty")
    return values


# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stegocrypt",
                                     description="Encrypted deep steganography toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="derive a block-scramble key file")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--grid", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_keygen)

    for name, help_text in (("encrypt", "scramble an image's blocks"),
                            ("decrypt", "unscramble an image's blocks")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--in", dest="in", required=True)
        p.add_argument("--key", required=True)
        p.add_argument("--out", required=True)
        p.set_defaults(func=cmd_encrypt)

    p = sub.add_parser("train", help="train the hide/reveal networks")
    p.add_argument("--config", required=True)
    p.add_argument("--out-checkpoint", required=True)
    p.add_argument("--metrics-csv")
    p.add_argument("--log-every", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("hide", help="embed a secret image into a cover image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--cover", required=True)
    p.add_argument("--secret", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_hide)

    p = sub.add_parser("reveal", help="extract the secret from a container image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--container", required=True)
    p.add_argument("--out-revealed", required=True)
    p.add_argument("--out-secret", required=True)
    p.set_defaults(func=cmd_reveal)

    p = sub.add_parser("attack", help="residual attack given the original cover")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--key")
    p.add_argument("--cover", required=True)
    p.add_argument("--secret", required=True)
    p.add_argument("--out-residual", required=True)
    p.add_argument("--out-csv", required=True)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("report", help="CSV reports: histograms, correlation, keyspace, sweeps")
    p.add_argument("--what", required=True,
                   choices=["histogram", "correlation", "keyspace", "sweep"])
    p.add_argument("--in", dest="inputs", nargs="*", default=[])
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-heatmap")
    p.add_argument("--grids", default="2,4,8,14")
    p.add_argument("--key-seed", type=int, default=1000)
    p.add_argument("--blocks", type=int, default=196)
    p.add_argument("--ops-per-second", type=float, default=1e16)
    p.add_argument("--config")
    p.add_argument("--betas", default="0.25,0.75,1")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, ShapeMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
