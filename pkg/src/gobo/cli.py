"""Command-line surface.

Subcommands: quantize, verify, bench, sweep-sm, dump, gen.  Every run ends
with a one-line JSON manifest (command, inputs, config, output digest) so
identical digests imply identical outputs.  Exit codes: 0 success, 1
unexpected failure, 2 usage or file problems, 3 quantizer errors, 4
container errors, 5 verification failure, 6 kernel or simulator errors.
"""

import argparse
import hashlib
import json
import sys
import time

import numpy as np

from . import __version__
from . import container as cont
from . import fixtures, fwt, kernel, quantize, tilesim
from .errors import ContainerError, GoboError, KernelError, QuantizerError, SimulatorError

EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_QUANTIZER = 3
EXIT_CONTAINER = 4
EXIT_VERIFY = 5
EXIT_COMPUTE = 6

_METHODS = {
    "gobo": quantize.quantize_gobo,
    "kmeans": quantize.quantize_kmeans,
    "linear": quantize.quantize_linear,
}


class VerificationFailure(GoboError):
    pass


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _manifest(command: str, args, inputs: dict, config: dict, output_path=None,
              output_bytes=None, started=None) -> None:
    man = {
        "command": command,
        "version": __version__,
        "inputs": inputs,
        "config": config,
        "elapsed_s": round(time.time() - started, 3) if started else None,
    }
    if output_bytes is not None:
        man["output"] = {"path": str(output_path) if output_path else None,
                         "sha256": _sha256(output_bytes), "bytes": len(output_bytes)}
    line = json.dumps(man, sort_keys=True)
    print(f"manifest: {line}")
    if output_path is not None:
        with open(f"{output_path}.manifest.json", "w") as fh:
            fh.write(line + "\n")


def _layer_report(layer, weights) -> dict:
    deq = quantize.dequantize(layer).astype(np.float64)
    mask = ~layer.outliers.mask(weights.shape) if len(layer.outliers) else np.ones(
        weights.shape, dtype=bool)
    final_l1 = float(np.abs(deq - weights.astype(np.float64))[mask].sum())
    return {
        "iterations": layer.iterations,
        "final_l1": final_l1,
        "outliers": len(layer.outliers),
        "outlier_fraction": len(layer.outliers) / weights.size,
        "warnings": layer.warnings,
    }


def cmd_quantize(args) -> int:
    started = time.time()
    w = fwt.read_fwt(args.input)
    layer = _METHODS[args.method](w, bits=args.bits, threshold=args.threshold)
    data = cont.encode(layer, cont.ContainerGeometry(alignment=args.alignment), args.variant)
    with open(args.out, "wb") as fh:
        fh.write(data)
    rep = _layer_report(layer, w)
    ratio = cont.measure_compression(layer, cont.ContainerGeometry(alignment=args.alignment),
                                     args.variant)
    print(f"quantized {args.input}: {w.shape[0]}x{w.shape[1]} -> {args.out}")
    print(f"method={args.method} bits={args.bits} iterations={rep['iterations']}")
    print(f"final_l1={rep['final_l1']:.6g}")
    print(f"outliers={rep['outliers']} ({rep['outlier_fraction']:.4%})")
    print(f"compression_ratio={ratio['ratio_vs_fp32']:.3f}x "
          f"(no-outlier bound {ratio['no_outlier_bound']:.3f}x)")
    for warning in rep["warnings"]:
        print(f"warning: {warning}")
    _manifest("quantize", args,
              {"input": {"path": args.input, "sha256": _sha256(open(args.input, "rb").read())}},
              {"bits": args.bits, "method": args.method, "threshold": args.threshold,
               "variant": args.variant, "alignment": args.alignment},
              args.out, data, started)
    return 0


def _fail(name: str, detail: str):
    raise VerificationFailure(f"{name}: {detail}")


def cmd_verify(args) -> int:
    started = time.time()
    data = open(args.container, "rb").read()
    orig = fwt.read_fwt(args.original)
    layer = cont.decode(data)
    hdr = cont.read_header(data)
    checks = []

    if (layer.rows, layer.cols) != orig.shape:
        _fail("dimensions", f"container is {layer.rows}x{layer.cols}, "
                            f"original is {orig.shape[0]}x{orig.shape[1]}")
    checks.append("dimensions: ok")

    reencoded = cont.encode(layer, cont.ContainerGeometry(alignment=hdr.alignment),
                            hdr.variant_name)
    if reencoded != data:
        _fail("round-trip", "re-encoded bytes differ from the container")
    checks.append("round-trip: ok (byte-identical re-encode)")

    ol = layer.outliers
    if len(ol) and not np.array_equal(orig[ol.rows, ol.cols], ol.values):
        _fail("outliers", "stored outlier values differ from the original weights")
    checks.append(f"outliers: ok ({len(ol)} stored exactly)")

    deq = quantize.dequantize(layer)
    g_mask = ~ol.mask(orig.shape)
    g_vals = orig[g_mask].astype(np.float64)
    if g_vals.size:
        table = layer.centroid_table.astype(np.float64)
        lo = np.concatenate(([g_vals.min()], (table[:-1] + table[1:]) / 2))
        hi = np.concatenate(((table[:-1] + table[1:]) / 2, [g_vals.max()]))
        bound = np.maximum(table - lo, hi - table).max()
        err = np.abs(deq.astype(np.float64) - orig.astype(np.float64))[g_mask].max()
        if err > bound + 1e-6:
            _fail("reconstruction", f"G error {err:.3g} exceeds bin bound {bound:.3g}")
        checks.append(f"reconstruction: ok (max G error {err:.3g} <= bound {bound:.3g})")

    rng = np.random.default_rng(fixtures.default_seed(args.seed))
    acts = rng.normal(0.0, 1.0, layer.cols).astype(np.float32)
    ref = kernel.reference_matvec(deq, acts)
    scale = np.abs(ref).max() or 1.0
    for mode, tol in (("double", 1e-12), ("single", 1e-5)):
        got = kernel.centroid_sum_matvec(layer, acts, accumulate=mode, out_dtype=np.float64)
        rel = float(np.max(np.abs(got - ref) / (np.abs(ref) + scale)))
        if rel > tol:
            _fail("kernel", f"{mode} accumulation error {rel:.3g} exceeds {tol:g}")
        checks.append(f"kernel[{mode}]: ok (max scaled error {rel:.3g})")

    for line in checks:
        print(line)
    print("verify: PASS")
    _manifest("verify", args,
              {"container": {"path": args.container, "sha256": _sha256(data)},
               "original": {"path": args.original}},
              {"seed": fixtures.default_seed(args.seed)}, started=started)
    return 0


def cmd_bench(args) -> int:
    started = time.time()
    data = open(args.container, "rb").read()
    layer = cont.decode(data)
    hdr = cont.read_header(data)
    rng = np.random.default_rng(fixtures.default_seed(args.seed))
    acts = rng.normal(0.0, 1.0, (layer.cols, args.words)).astype(np.float32)
    ops = kernel.count_ops(layer)
    print(f"layer {layer.rows}x{layer.cols} bits={layer.bits} "
          f"outliers={len(layer.outliers)} words={args.words}")
    print(f"accumulations={ops['accumulations']} macs={ops['macs']} "
          f"dense_macs={ops['dense_macs']} mac_reduction={ops['mac_reduction']:.2f}x")

    if args.mode == "kernel":
        from ._backend import available_backends
        for backend in available_backends():
            t0 = time.perf_counter()
            out = kernel.centroid_sum_matvec(layer, acts, backend=backend)
            dt = time.perf_counter() - t0
            rate = layer.rows * layer.cols * args.words / dt / 1e6
            print(f"backend={backend} elapsed={dt * 1e3:.2f}ms "
                  f"throughput={rate:.1f}M weight-macs/s")
        digest = _sha256(out.tobytes())
    else:
        paired = layer.bits == 4
        tiles = args.tiles
        if paired and tiles % 2:
            tiles += 1
        cfg = tilesim.TileConfig(tiles=tiles, paired_for_4bit=paired)
        sched = tilesim.schedule_layer(data, words=args.words, cfg=cfg,
                                       group_cols=args.group_cols)
        if args.mode == "tile":
            trace = tilesim.simulate_tile(sched, acts if args.words > 1 else acts[:, 0], cfg)
            summary = trace.summary()
            outputs = trace.outputs
        else:
            trace = tilesim.simulate_chip([sched], [acts if args.words > 1 else acts[:, 0]], cfg)
            summary = trace.layer_traces[0].summary()
            summary["chip_total_cycles"] = trace.total_cycles
            summary["chip_utilization"] = trace.utilization
            outputs = trace.layer_traces[0].outputs
        ker = kernel.centroid_sum_matvec(layer, acts if args.words > 1 else acts[:, 0],
                                         out_dtype=np.float64)
        scale = np.abs(ker).max() or 1.0
        err = float(np.max(np.abs(outputs.astype(np.float64) - ker) / (np.abs(ker) + scale)))
        for key, val in summary.items():
            print(f"{key}={val}")
        print(f"macs={ops['macs']}")
        print(f"accumulations={ops['accumulations']}")
        print(f"kernel_agreement_error={err:.3g}")
        perfetch = sched.plan.words * 1.0
        print(f"index_fetches={sched.plan.padded_rows * sched.plan.padded_cols} "
              f"index_consumptions={sched.plan.padded_rows * sched.plan.padded_cols * sched.plan.words} "
              f"(reuse x{perfetch:.0f})")
        digest = _sha256(outputs.tobytes())
    _manifest("bench", args, {"container": {"path": args.container, "sha256": _sha256(data)}},
              {"mode": args.mode, "words": args.words, "tiles": args.tiles,
               "seed": fixtures.default_seed(args.seed)},
              output_bytes=digest.encode(), started=started)
    return 0


def cmd_sweep_sm(args) -> int:
    started = time.time()
    w = fwt.read_fwt(args.input)
    layer = quantize.quantize_gobo(w, bits=args.bits, threshold=args.threshold)
    rows_out = cont.sweep_sm_sizes(layer, tuple(args.sm_sizes))
    bound = 32.0 / args.bits
    print(f"{'sm_size':>8} {'total_bits':>12} {'ratio':>8} {'bound':>8} {'of_bound':>9}")
    for entry in rows_out:
        ratio = entry["ratio_vs_fp32"]
        print(f"{entry['sm_size']:>8} {entry['total_bits']:>12} {ratio:>8.3f} "
              f"{bound:>8.3f} {ratio / bound:>8.1%}")
    _manifest("sweep-sm", args, {"input": {"path": args.input}},
              {"bits": args.bits, "sm_sizes": list(args.sm_sizes),
               "threshold": args.threshold},
              output_bytes=json.dumps(rows_out).encode(), started=started)
    return 0


def cmd_dump(args) -> int:
    data = open(args.container, "rb").read()
    hdr = cont.read_header(data)
    print(f"magic=GOBO version={hdr.version} variant={hdr.variant_name}")
    print(f"bits={hdr.bits} centroids={hdr.centroid_count} alignment={hdr.alignment}")
    print(f"rows={hdr.rows} cols={hdr.cols} padded={hdr.padded_rows}x{hdr.padded_cols}")
    print(f"outlier_offset={hdr.outlier_offset} total_bytes={len(data)}")
    print("centroid_table=" + " ".join(f"{v:.6g}" for v in hdr.centroid_table))
    layer = cont.decode(data)
    n_sm_r, n_sm_c = hdr.padded_rows // 16, hdr.padded_cols // 16
    sm_ids, _, _ = cont.position_to_triplet(
        layer.outliers.rows.astype(np.int64), layer.outliers.cols.astype(np.int64), n_sm_c)
    counts = np.bincount(sm_ids, minlength=n_sm_r * n_sm_c)
    print(f"outliers={len(layer.outliers)} sms={counts.size} "
          f"sms_with_outliers={int((counts > 0).sum())} max_per_sm={int(counts.max(initial=0))}")
    if args.per_sm:
        for i, count in enumerate(counts):
            if count:
                print(f"sm[{i}]={count}")
    return 0


def cmd_gen(args) -> int:
    started = time.time()
    seed = fixtures.default_seed(args.seed)
    if args.outliers:
        w, _ = fixtures.planted_outlier_matrix(args.rows, args.cols, args.outliers,
                                               magnitude=args.magnitude,
                                               sigma=args.sigma, seed=seed)
    else:
        w = fixtures.gaussian_matrix(args.rows, args.cols, sigma=args.sigma, seed=seed)
    fwt.write_fwt(args.out, w)
    data = open(args.out, "rb").read()
    print(f"wrote {args.out}: {args.rows}x{args.cols} sigma={args.sigma} "
          f"planted_outliers={args.outliers} seed={seed}")
    _manifest("gen", args, {},
              {"rows": args.rows, "cols": args.cols, "sigma": args.sigma,
               "outliers": args.outliers, "magnitude": args.magnitude, "seed": seed},
              args.out, data, started)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="gobo",
        description="Dictionary quantization with Gaussian outlier separation.",
        epilog="exit codes: 0 ok, 1 unexpected, 2 usage/io, 3 quantizer, "
               "4 container, 5 verification, 6 kernel/simulator",
    )
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("quantize", help="quantize a .fwt tensor into a .gobo container")
    q.add_argument("input")
    q.add_argument("--bits", type=int, default=3)
    q.add_argument("--method", choices=sorted(_METHODS), default="gobo")
    q.add_argument("--threshold", type=float, default=quantize.DEFAULT_THRESHOLD)
    q.add_argument("--variant", choices=["sequential", "random-access"], default="sequential")
    q.add_argument("--alignment", type=int, default=64)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_quantize)

    v = sub.add_parser("verify", help="verify a container against its original tensor")
    v.add_argument("container")
    v.add_argument("original")
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="report op counts, throughput, cycle traces")
    b.add_argument("container")
    b.add_argument("--words", type=int, default=1)
    b.add_argument("--mode", choices=["kernel", "tile", "chip"], default="kernel")
    b.add_argument("--tiles", type=int, default=1)
    b.add_argument("--group-cols", type=int, default=16, dest="group_cols")
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("sweep-sm", help="compression ratio versus submatrix size")
    s.add_argument("input")
    s.add_argument("--bits", type=int, default=3)
    s.add_argument("--threshold", type=float, default=quantize.DEFAULT_THRESHOLD)
    s.add_argument("--sm-sizes", type=int, nargs="+", default=[16, 64, 256, 1024],
                   dest="sm_sizes")
    s.set_defaults(func=cmd_sweep_sm)

    d = sub.add_parser("dump", help="print container header and outlier layout")
    d.add_argument("container")
    d.add_argument("--per-sm", action="store_true", dest="per_sm")
    d.set_defaults(func=cmd_dump)

    g = sub.add_parser("gen", help="generate a seed-fixed synthetic .fwt fixture")
    g.add_argument("--rows", type=int, default=768)
    g.add_argument("--cols", type=int, default=768)
    g.add_argument("--sigma", type=float, default=0.05)
    g.add_argument("--outliers", type=int, default=0)
    g.add_argument("--magnitude", type=float, default=0.5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except VerificationFailure as exc:
        print(f"verify: FAIL ({exc})", file=sys.stderr)
        return EXIT_VERIFY
    except QuantizerError as exc:
        print(f"quantizer error: {exc}", file=sys.stderr)
        return EXIT_QUANTIZER
    except ContainerError as exc:
        print(f"container error: {exc}", file=sys.stderr)
        return EXIT_CONTAINER
    except (KernelError, SimulatorError) as exc:
        print(f"compute error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
