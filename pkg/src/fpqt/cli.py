"""Command-line interface.

Subcommands:
  inspect        per-tensor statistics of a tensor container
  select-format  data-driven minifloat format choice per tensor
  quantize       per-channel MinMax quantization of a container
  hadamard       factorization and operation counts for one transform
  fuse           fold transforms into block weights (or invert)
  simulate       run the end-to-end harness and emit its JSON report
  cost           static cost accounting for a harness configuration

Exit codes: 0 success; 1 usage, configuration, or numerical error;
2 I/O or container-format error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .errors import FormatError, FpqtError
from .formats import parse_format
from .fusion import (
    V_MODES,
    DiTBlockWeights,
    fuse_block,
    plan_fusion,
    unfuse_ffn,
    unfuse_input,
    unfuse_v_out,
)
from .hadamard import apply_right, build, op_count, realize
from .harness import HarnessConfig, estimate_cost, run
from .quantize import minmax_quantize, quant_error
from .select import SelectionConfig, select_format, selection_table, spread_indicator
from .tensors import channel_stat, read_tensors, write_tensors

_DENSE_CHECK_LIMIT = 4096
_MATRIX_NAMES = ("w_q", "w_k", "w_v", "w_out", "w_fc1", "w_fc2")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); usage errors are exit 1
        raise UsageError(message)


# ---------------------------------------------------------------------------
# Shared flag groups
# ---------------------------------------------------------------------------


def _add_harness_flags(p: argparse.ArgumentParser) -> None:
    d = HarnessConfig()
    p.add_argument("--n", type=int, default=d.n, help="model width")
    p.add_argument("--heads", type=int, default=d.heads, help="attention heads")
    p.add_argument("--tokens", type=int, default=d.tokens, help="tokens per batch")
    p.add_argument("--hidden", type=int, default=None, help="FFN width (default 4*n)")
    p.add_argument("--outlier-channels", type=int, default=d.outlier_channels)
    p.add_argument("--outlier-scale", type=float, default=d.outlier_scale)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--weight-format", default=d.weight_format,
                   help="'auto' or a concrete format such as E2M1")
    p.add_argument("--weight-bits", type=int, default=d.weight_bits)
    p.add_argument("--act-format", default=d.act_format)
    p.add_argument("--method", choices=("gptq", "rtn"), default=d.method)
    p.add_argument("--calib-samples", type=int, default=d.calib_samples)
    p.add_argument("--alpha", type=float, default=d.alpha,
                   help="percentile for the spread indicator")
    p.add_argument("--heavy-tail-fraction", type=float, default=d.heavy_tail_fraction)
    p.add_argument("--v-mode", choices=V_MODES, default=d.v_mode)
    p.add_argument("--no-hadamard", dest="use_hadamard", action="store_false")
    p.add_argument("--hadamard-seed", type=int, default=None,
                   help="seed for random sign diagonals (default: none)")
    p.add_argument("--no-weight-quant", dest="quantize_weights", action="store_false")
    p.add_argument("--no-act-quant", dest="quantize_acts", action="store_false")


def _harness_config(args: argparse.Namespace) -> HarnessConfig:
    return HarnessConfig(
        n=args.n,
        heads=args.heads,
        tokens=args.tokens,
        hidden=args.hidden,
        outlier_channels=args.outlier_channels,
        outlier_scale=args.outlier_scale,
        seed=args.seed,
        weight_format=args.weight_format,
        weight_bits=args.weight_bits,
        act_format=args.act_format,
        quantize_weights=args.quantize_weights,
        quantize_acts=args.quantize_acts,
        use_hadamard=args.use_hadamard,
        hadamard_seed=args.hadamard_seed,
        v_mode=args.v_mode,
        method=args.method,
        calib_samples=args.calib_samples,
        alpha=args.alpha,
        heavy_tail_fraction=args.heavy_tail_fraction,
    )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_inspect(args: argparse.Namespace) -> int:
    tensors = read_tensors(args.file)
    stats = {}
    for name, t in tensors.items():
        entry = {
            "shape": list(t.shape),
            "min": float(t.min()),
            "max": float(t.max()),
            "mean": float(t.mean()),
            "std": float(t.std()),
            "max_abs": float(np.abs(t).max()),
            "spread": spread_indicator(t, args.alpha),
        }
        if t.ndim == 2:
            cmax = channel_stat(t, "max_abs")
            med = float(np.median(cmax))
            entry["channel_max_median_ratio"] = (
                float("inf") if med == 0.0 else float(cmax.max()) / med
            )
        stats[name] = entry
    if args.json:
        print(json.dumps(stats, sort_keys=True, indent=2))
    else:
        for name, e in stats.items():
            line = (
                f"{name}: shape={tuple(e['shape'])} min={e['min']:.6g} "
                f"max={e['max']:.6g} mean={e['mean']:.6g} std={e['std']:.6g} "
                f"spread={e['spread']:.6g}"
            )
            if "channel_max_median_ratio" in e:
                line += f" channel_ratio={e['channel_max_median_ratio']:.6g}"
            print(line)
    return 0


def cmd_select_format(args: argparse.Namespace) -> int:
    tensors = read_tensors(args.file)
    cfg = SelectionConfig(n_bits=args.bits, alpha=args.alpha)
    tables = {name: selection_table(t, cfg) for name, t in tensors.items()}
    if args.json:
        print(json.dumps(tables, sort_keys=True, indent=2))
    else:
        for name, tab in tables.items():
            best = next(
                c for c in tab["candidates"] if c["format"] == tab["selected"]
            )
            print(
                f"{name}: spread={tab['spread']:.6g} -> {tab['selected']} "
                f"(log2 distance {best['log2_distance']:.4f})"
            )
    return 0


def cmd_quantize(args: argparse.Namespace) -> int:
    tensors = read_tensors(args.input)
    cfg = SelectionConfig(n_bits=args.bits, alpha=args.alpha)
    out: dict[str, np.ndarray] = {}
    for name, t in tensors.items():
        bias_name = f"{name}.bias"
        if bias_name in tensors:
            raise ValueError(
                f"container already holds {bias_name!r}; refusing to overwrite"
            )
        fmt = select_format(t, cfg) if args.format == "auto" else parse_format(args.format)
        a = t.reshape(-1, 1) if t.ndim == 1 else t
        qt = minmax_quantize(a, fmt, channel_axis=-1)
        values = qt.values.reshape(t.shape)
        err = quant_error(t, values)
        out[name] = values
        out[bias_name] = qt.bias.astype(np.float64)
        print(
            f"{name}: format={fmt} channels={qt.bias.size} "
            f"mse={err['mse']:.6g} sqnr_db={err['sqnr_db']:.4f}"
        )
    write_tensors(args.output, out)
    print(f"wrote {len(out)} tensors to {args.output}")
    return 0


def cmd_hadamard(args: argparse.Namespace) -> int:
    spec = build(args.dim, args.seed)
    ops = {"dim": spec.dim, "p": spec.p, "q": spec.q, "rows": args.rows}
    ops.update(op_count(args.rows, spec))
    if args.check:
        if args.dim > _DENSE_CHECK_LIMIT:
            raise ValueError(
                f"--check materializes a dense {args.dim}x{args.dim} matrix; "
                f"limit is {_DENSE_CHECK_LIMIT}"
            )
        x = np.random.default_rng(args.seed or 0).standard_normal((8, args.dim))
        dense = realize(spec)
        err = float(np.abs(apply_right(x, spec) - x @ dense).max())
        ops["check_max_abs_err"] = err
        ortho = float(np.abs(dense.T @ dense - np.eye(args.dim)).max())
        ops["check_orthonormality_err"] = ortho
    print(json.dumps(ops, sort_keys=True, indent=2))
    return 0


def cmd_fuse(args: argparse.Namespace) -> int:
    tensors = read_tensors(args.input)
    missing = [n for n in _MATRIX_NAMES if n not in tensors]
    if missing:
        raise ValueError(f"container is missing required tensors: {missing}")
    n = tensors["w_q"].shape[0]
    weights = DiTBlockWeights(
        w_q=tensors["w_q"],
        w_k=tensors["w_k"],
        w_v=tensors["w_v"],
        w_out=tensors["w_out"],
        w_fc1=tensors["w_fc1"],
        w_fc2=tensors["w_fc2"],
        heads=args.heads,
        ln1_gamma=tensors.get("ln1_gamma", np.ones(n)),
        ln1_beta=tensors.get("ln1_beta", np.zeros(n)),
        ln2_gamma=tensors.get("ln2_gamma", np.ones(n)),
        ln2_beta=tensors.get("ln2_beta", np.zeros(n)),
    )
    plan = plan_fusion(weights, args.seed, args.v_mode)
    if args.invert:
        new = unfuse_input(unfuse_v_out(unfuse_ffn(weights, plan), plan), plan)
        online = ()
    else:
        new, online = fuse_block(weights, plan)
    out = dict(tensors)
    for name in _MATRIX_NAMES:
        out[name] = getattr(new, name)
    write_tensors(args.output, out)
    verb = "unfused" if args.invert else "fused"
    print(f"{verb} block (n={n}, heads={args.heads}, v_mode={args.v_mode}) "
          f"-> {args.output}")
    for tr in online:
        print(
            f"online transform at {tr.point}: dim {tr.spec.dim} = "
            f"{tr.spec.p} x {tr.spec.q}"
        )
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    report = run(_harness_config(args))
    text = report.to_json()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        print(f"wrote report to {args.out}")
    else:
        print(text)
    return 0


def cmd_cost(args: argparse.Namespace) -> int:
    print(json.dumps(estimate_cost(_harness_config(args)), sort_keys=True, indent=2))
    return 0


# ---------------------------------------------------------------------------
# Parser wiring
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="fpqt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("inspect", help="per-tensor statistics of a container")
    p.add_argument("file")
    p.add_argument("--alpha", type=float, default=25.0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("select-format", help="choose a minifloat format per tensor")
    p.add_argument("file")
    p.add_argument("--bits", type=int, default=4)
    p.add_argument("--alpha", type=float, default=25.0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_select_format)

    p = sub.add_parser("quantize", help="MinMax-quantize every tensor in a container")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--format", default="auto",
                   help="'auto' or a concrete format such as E2M1")
    p.add_argument("--bits", type=int, default=4, help="width used when --format auto")
    p.add_argument("--alpha", type=float, default=25.0)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("hadamard", help="factorization and op counts for one dim")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--rows", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--check", action="store_true",
                   help="verify the fast path against the dense matrix")
    p.set_defaults(func=cmd_hadamard)

    p = sub.add_parser("fuse", help="fold transforms into block weights")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--heads", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--v-mode", choices=V_MODES, default="per_head_exact")
    p.add_argument("--invert", action="store_true", help="undo a previous fuse")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("simulate", help="run the end-to-end harness")
    _add_harness_flags(p)
    p.add_argument("--out", default=None, help="write the JSON report here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("cost", help="static cost accounting for a configuration")
    _add_harness_flags(p)
    p.set_defaults(func=cmd_cost)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"fpqt: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else int(exc.code)
    if not hasattr(args, "func"):
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"fpqt: container error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"fpqt: i/o error: {exc}", file=sys.stderr)
        return 2
    except (FpqtError, ValueError) as exc:
        print(f"fpqt: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
