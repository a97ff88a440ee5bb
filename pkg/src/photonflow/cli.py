"""Batch command-line front end.

Subcommands load system and state configurations, run one computation, and
write CSV/JSON artifacts plus a manifest that echoes everything needed to
reproduce the run.  Outputs are byte-deterministic: fixed float formatting,
fixed reduction orders, no timestamps.

Exit codes: 0 success, 1 tolerance failure, 2 configuration error,
3 numerical-cap error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

# Honor the thread cap before numpy initializes its thread pools.
_threads = os.environ.get("PHOTONFLOW_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

PLOT_SCRIPT = """\
#!/usr/bin/env python3
\"\"\"Render the CSV artifacts in this directory with matplotlib.\"\"\"
import csv
import json
import sys
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(".")
for path in sorted(out.glob("*.csv")):
    with path.open() as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], rows[1:]
    cols = {name: [float(r[i]) for r in data] for i, name in enumerate(header)}
    fig, ax = plt.subplots()
    if {"t1", "t2"} <= set(header):
        import numpy as np
        t1 = sorted(set(cols["t1"]))
        t2 = sorted(set(cols["t2"]))
        z = np.array(cols[header[2]]).reshape(len(t1), len(t2))
        pcm = ax.pcolormesh(t2, t1, z, shading="auto")
        fig.colorbar(pcm, ax=ax)
        ax.set_xlabel("t2"); ax.set_ylabel("t1")
    else:
        x = cols[header[0]]
        for name in header[1:]:
            ax.plot(x, cols[name], label=name)
        ax.set_xlabel(header[0])
        ax.legend(fontsize=7)
    ax.set_title(path.name)
    fig.savefig(path.with_suffix(".png"), dpi=130)
    plt.close(fig)
print("wrote", len(list(out.glob("*.png"))), "figures")
"""


def _fmt(x: float) -> str:
    return f"{x:.16e}"


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _load_json(path: str, what: str):
    from .errors import ConfigError

    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"{what}: file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{what}: malformed JSON in {path} at line {exc.lineno}, column {exc.colno}"
        ) from exc


def _resolve(section, what: str):
    """A config section may be inline or a path to a JSON file."""
    if isinstance(section, str):
        return _load_json(section, what)
    if isinstance(section, dict):
        return section
    from .errors import ConfigError

    raise ConfigError(f"{what}: expected an object or a file path")


def write_csv(path: Path, header, rows) -> None:
    with path.open("w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _write_manifest(out: Path, command: str, config, outputs, extra=None) -> None:
    from . import __version__
    from .config import DEFAULT_TOLERANCES

    doc = {
        "command": command,
        "config": config,
        "config_sha256": hashlib.sha256(_canonical(config).encode()).hexdigest(),
        "version": __version__,
        "tolerances": DEFAULT_TOLERANCES.__dict__,
        "outputs": sorted(outputs),
    }
    if extra:
        doc.update(extra)
    with (out / "manifest.json").open("w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _emit_plot_script(out: Path) -> str:
    path = out / "plot_results.py"
    path.write_text(PLOT_SCRIPT, encoding="utf-8")
    return path.name


def _complex_table(mat) -> list:
    return [[{"re": float(z.real), "im": float(z.imag)} for z in row] for row in mat]


# ---------------------------------------------------------------------------
# system-info


def cmd_system_info(args) -> int:
    import numpy as np

    from .lin_sys import build_state_space, is_stable, is_passive, params_from_json, suggest_grid
    from .config import DEFAULT_TOLERANCES

    config = _resolve(args.config, "config")
    system_doc = _resolve(config.get("system", config), "system")
    params = params_from_json(system_doc)
    ss = build_state_space(params)
    stable = is_stable(ss)
    report = {
        "m": ss.m,
        "n": ss.n,
        "A": _complex_table(ss.A) if ss.n else [],
        "B": _complex_table(ss.B) if ss.n else [],
        "C": _complex_table(ss.C) if ss.n else [],
        "D": _complex_table(ss.D),
        "eigenvalues": [{"re": float(l.real), "im": float(l.imag)}
                        for l in sorted(np.linalg.eigvals(ss.A),
                                        key=lambda z: (z.real, z.imag))] if ss.n else [],
        "stable": stable,
        "passive": is_passive(params),
    }
    if stable and ss.n:
        grid = suggest_grid(ss)
        report["suggested_horizon"] = grid.t_max
        from scipy.linalg import expm
        tail = float(np.linalg.norm(ss.C @ expm(ss.A * grid.t_max), ord="fro"))
        report["tail_mass_at_horizon"] = tail
        report["tail_ok"] = tail <= DEFAULT_TOLERANCES.decay
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "system_info.json").open("w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(out, "system-info", config, ["system_info.json"])
    print(json.dumps({k: report[k] for k in ("m", "n", "stable", "passive")}))
    return 0


# ---------------------------------------------------------------------------
# response


def _run_grid(config, args):
    from .errors import ConfigError
    from .lin_sys import TimeGrid

    gdoc = dict(config.get("grid", {}))
    if args.grid_points:
        gdoc["n_points"] = args.grid_points
    if args.t_max is not None:
        gdoc["t_max"] = args.t_max
    try:
        return TimeGrid(float(gdoc.get("t_min", -8.0)), float(gdoc["t_max"]),
                        int(gdoc["n_points"]))
    except KeyError as exc:
        raise ConfigError(f"grid: missing field {exc}") from exc


def cmd_response(args) -> int:
    import numpy as np

    from .errors import ConfigError
    from .lin_sys import build_state_space, is_stable, params_from_json
    from .photon_states import FactorizableState, state_from_json
    from .response import (
        fock_amplitude_table,
        output_covariance,
        output_intensity,
        output_state_active_unfactorizable,
        output_state_factorizable,
        output_state_passive_unfactorizable,
    )
    from .lin_sys import is_passive
    from .tensor_alg import wavepacket_to_file

    config = _resolve(args.config, "config")
    params = params_from_json(_resolve(config["system"], "system"))
    ss = build_state_space(params)
    if not is_stable(ss):
        raise ConfigError("system: unstable systems have no steady state")
    grid = _run_grid(config, args)
    state = state_from_json(_resolve(config["state"], "state"), grid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    extra = {"grid": {"t_min": grid.t_min, "t_max": grid.t_max, "n_points": grid.n_points}}

    if args.quantity == "intensity":
        if not isinstance(state, FactorizableState):
            raise ConfigError("intensity output needs a factorizable state")
        times, vals = output_intensity(ss, state)
        dt = times[1] - times[0]
        write_csv(out / "intensity.csv", ["t"] + [f"n_{j + 1}" for j in range(ss.m)],
                  np.column_stack([times, vals.T]))
        outputs.append("intensity.csv")
        extra["integrals"] = [float(np.trapezoid(vals[j], dx=dt)) for j in range(ss.m)]
    elif args.quantity == "covariance":
        if not isinstance(state, FactorizableState):
            raise ConfigError("covariance output needs a factorizable state")
        cov = output_covariance(ss, state)
        times = cov.grid_left.times
        n = len(times)
        diag = cov.lower_block_diag_equal_times()
        write_csv(out / "covariance_diag.csv",
                  ["t"] + [f"re_n_{j + 1}" for j in range(ss.m)],
                  np.column_stack([times, diag.real.T]))
        mid = n // 2
        slice_rows = []
        for it in range(n):
            block = cov.smooth_at(it, mid)
            slice_rows.append([times[it]] + [x for z in block.ravel()
                                             for x in (z.real, z.imag)])
        two_m = 2 * ss.m
        hdr = ["t"] + [f"{p}_{a}{b}" for a in range(two_m) for b in range(two_m)
                       for p in ("re", "im")]
        write_csv(out / "covariance_slice.csv", hdr, slice_rows)
        structure = {
            "delta_coeff": _complex_table(cov.delta_coeff),
            "rank": cov.rank,
            "stationary": cov.stationary is not None,
            "r_fixed": float(times[mid]),
        }
        with (out / "covariance.json").open("w", encoding="utf-8") as fh:
            json.dump(structure, fh, indent=2, sort_keys=True)
            fh.write("\n")
        outputs += ["covariance_diag.csv", "covariance_slice.csv", "covariance.json"]
    elif args.quantity == "state":
        if isinstance(state, FactorizableState):
            rec = output_state_factorizable(ss, state)
            doc = {
                "schema_version": 1,
                "type": "photon_gaussian",
                "ells": list(rec.ells),
                "norms": list(rec.norms),
                "recomputed_norms": list(rec.recomputed_norms),
                "gaussian_part": "vacuum" if rec.is_vacuum_gaussian else "spectral_density",
            }
            for j in range(rec.m):
                fn = f"eta_minus_ch{j + 1}.csv"
                _eta_csv(out / fn, rec.eta_minus, j)
                outputs.append(fn)
                if np.abs(rec.eta_plus.slabs[j]).max() > 0:
                    fn = f"eta_plus_ch{j + 1}.csv"
                    _eta_csv(out / fn, rec.eta_plus, j)
                    outputs.append(fn)
            if not rec.is_vacuum_gaussian:
                sd = rec.gaussian_part
                rows = [[w] + [x for z in sd.values[i].ravel() for x in (z.real, z.imag)]
                        for i, w in enumerate(sd.omegas)]
                two_m = 2 * ss.m
                hdr = ["omega"] + [f"{p}_{a}{b}" for a in range(two_m)
                                   for b in range(two_m) for p in ("re", "im")]
                write_csv(out / "gaussian_spectral_density.csv", hdr, rows)
                outputs.append("gaussian_spectral_density.csv")
            if rec.is_vacuum_gaussian and ss.n == 0:
                table = _maybe_fock_table(rec, state)
                if table is not None:
                    doc["fock_table"] = table
            with (out / "output_state.json").open("w", encoding="utf-8") as fh:
                json.dump(doc, fh, indent=2, sort_keys=True)
                fh.write("\n")
            outputs.append("output_state.json")
        else:
            if is_passive(params):
                rec = output_state_passive_unfactorizable(ss, state)
                doc = {"schema_version": 1, "type": "multi_photon",
                       "norms": list(rec.norms),
                       "recomputed_norms": list(rec.recomputed_norms)}
                for j, ch in enumerate(rec.channels):
                    fn = f"wavepacket_ch{j + 1}.wpt"
                    wavepacket_to_file(ch, str(out / fn))
                    outputs.append(fn)
            else:
                rec = output_state_active_unfactorizable(ss, state)
                doc = {"schema_version": 1, "type": "photon_gaussian_general",
                       "norms": list(rec.norms), "patterns": {}}
                for j, patterns in enumerate(rec.channels):
                    for f, signed in patterns.items():
                        tag = "".join("p" if x == 1 else "m" for x in f)
                        fn = f"wavepacket_ch{j + 1}_{tag}.wpt"
                        wavepacket_to_file(signed.tensor, str(out / fn))
                        outputs.append(fn)
                        doc["patterns"][f"ch{j + 1}_{tag}"] = {"sign": signed.sign, "file": fn}
            with (out / "output_state.json").open("w", encoding="utf-8") as fh:
                json.dump(doc, fh, indent=2, sort_keys=True)
                fh.write("\n")
            outputs.append("output_state.json")
    else:
        raise ConfigError(f"quantity: unknown value {args.quantity!r}")

    outputs.append(_emit_plot_script(out))
    _write_manifest(out, f"response:{args.quantity}", config, outputs, extra)
    print(json.dumps({"outputs": sorted(outputs)}))
    return 0


def _eta_csv(path: Path, tensor, j: int) -> None:
    import numpy as np

    times = tensor.grid.times
    slab = tensor.slabs[j]
    m, ell = slab.shape[0], slab.shape[1]
    hdr = ["t"] + [f"{p}_{i + 1}_{k + 1}" for i in range(m) for k in range(ell)
                   for p in ("re", "im")]
    rows = np.column_stack(
        [times] + [col for i in range(m) for k in range(ell)
                   for col in (slab[i, k].real, slab[i, k].imag)])
    write_csv(path, hdr, rows)


def _maybe_fock_table(rec, state):
    """Number-state table for static outputs of preset pulse families."""
    import numpy as np

    from .response import fock_amplitude_table
    from .tensor_alg import RaggedPulseMatrix, gram_matrix

    pulses = state.pulses
    stacked = np.concatenate([s for s in pulses.slabs if s.size], axis=0)
    # orthonormalize the distinct pulses; bail out if numerically degenerate
    basis_rows = []
    w = None
    for row in stacked:
        vec = row.copy()
        for b in basis_rows:
            vec = vec - np.trapezoid(b.conj() * vec, dx=pulses.grid.dt) * b
        nrm = np.sqrt(np.trapezoid(np.abs(vec) ** 2, dx=pulses.grid.dt).real)
        if nrm > 1e-6:
            basis_rows.append(vec / nrm)
    basis = RaggedPulseMatrix(
        m=pulses.m, ells=(len(basis_rows),) * pulses.m,
        slabs=[np.stack(basis_rows) for _ in range(pulses.m)], grid=pulses.grid)
    try:
        table = fock_amplitude_table(rec, basis)
    except ValueError:
        return None
    return [
        {"occupation": list(occ), "re": amp.real, "im": amp.imag}
        for occ, amp in sorted(table.items())
        if abs(amp) > 1e-12
    ]


# ---------------------------------------------------------------------------
# worked examples


def cmd_example(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    runner = {1: _example1, 2: _example2, 3: _example3, 4: _example4}[args.example_id]
    report, outputs = runner(args, out)
    outputs.append(_emit_plot_script(out))
    config = {"example": args.example_id, "overrides": report.get("parameters", {})}
    _write_manifest(out, f"example:{args.example_id}", config, outputs,
                    {"report": report})
    print(json.dumps({"example": args.example_id, "pass": report["pass"],
                      "max_abs_error": report["max_abs_error"]}))
    return 0 if report["pass"] else 1


def _example1(args, out: Path):
    import numpy as np

    from . import fock_oracle as fo
    from .lin_sys import TimeGrid, beamsplitter_params, build_state_space
    from .photon_states import gaussian_pulse, make_factorizable
    from .response import fock_amplitude_table, output_state_factorizable
    from .tensor_alg import RaggedPulseMatrix

    eta = args.eta
    tol = args.tol or 1e-9
    oracle = fo.example1(eta, "identical")
    s = np.array([[np.sqrt(eta), np.sqrt(1 - eta)],
                  [-np.sqrt(1 - eta), np.sqrt(eta)]])
    ss = build_state_space(beamsplitter_params(s))
    grid = TimeGrid(-6.0, 6.0, 257)
    pulse = gaussian_pulse(0.0, 1.0)
    pulses = RaggedPulseMatrix.from_functions([[pulse, pulse], [pulse, pulse]], grid)
    rec = output_state_factorizable(ss, make_factorizable(pulses))
    basis = RaggedPulseMatrix.from_functions([[pulse], [pulse]], grid)
    table = fock_amplitude_table(rec, basis)
    rows = []
    max_err = 0.0
    for occ in sorted(table):
        a = table[occ]
        b = oracle.amplitude([((0, 0), occ[0]), ((1, 0), occ[1])])
        max_err = max(max_err, abs(a - b))
        rows.append({"occupation": list(occ), "pipeline_re": a.real, "pipeline_im": a.imag,
                     "oracle_re": b.real, "oracle_im": b.imag})
    reference_err = None
    if abs(eta - 0.5) < 1e-12:
        ref = {(4, 0): np.sqrt(3 / 8), (2, 2): -0.5, (0, 4): np.sqrt(3 / 8)}
        reference_err = 0.0
        for occ in sorted(table):
            expect = ref.get(occ, 0.0)
            reference_err = max(reference_err,
                                abs(table[occ] - expect), abs(
                                    oracle.amplitude([((0, 0), occ[0]), ((1, 0), occ[1])]) - expect))
        max_err = max(max_err, reference_err)
    write_csv(out / "example1_amplitudes.csv",
              ["n1", "n2", "pipeline_re", "pipeline_im", "oracle_re", "oracle_im"],
              [[r["occupation"][0], r["occupation"][1], r["pipeline_re"],
                r["pipeline_im"], r["oracle_re"], r["oracle_im"]] for r in rows])
    report = {
        "parameters": {"eta": eta},
        "max_abs_error": max_err,
        "reference_error": reference_err,
        "tolerance": tol,
        "pass": bool(max_err <= tol),
    }
    return report, ["example1_amplitudes.csv"]


def _example2(args, out: Path):
    from . import fock_oracle as fo

    tol = args.tol or 1e-9
    r = args.reflectivity
    ell = args.ell
    amp = fo.example2(r, ell)
    closed = fo.example2_closed_form(r, ell)
    err = abs(amp - closed)
    write_csv(out / "example2_amplitude.csv", ["R", "ell", "oracle_re", "closed_form"],
              [[r, ell, amp.real, closed]])
    report = {
        "parameters": {"R": r, "ell": ell},
        "amplitude": amp.real,
        "closed_form": closed,
        "max_abs_error": err,
        "tolerance": tol,
        "pass": bool(err <= tol),
    }
    return report, ["example2_amplitude.csv"]


def _example3(args, out: Path):
    import math

    from . import fock_oracle as fo

    tol = args.tol or 1e-10
    r, t, ell, alpha = args.reflectivity, args.transmissivity, args.ell, args.alpha
    n_max = args.n_max or _auto_nmax(alpha)
    coeffs = fo.example3(r, t, ell, alpha, n_max)
    max_err = 0.0
    rows = []
    for n, c in enumerate(coeffs):
        closed = fo.example3_closed_form(r, t, ell, alpha, n)
        max_err = max(max_err, abs(c - closed))
        rows.append([n, c.real, c.imag, closed.real, closed.imag])
    write_csv(out / "example3_coefficients.csv",
              ["n", "oracle_re", "oracle_im", "closed_re", "closed_im"], rows)
    report = {
        "parameters": {"R": r, "T": t, "ell": ell, "alpha": alpha, "n_max": n_max},
        "max_abs_error": max_err,
        "tolerance": tol,
        "pass": bool(max_err <= tol),
    }
    return report, ["example3_coefficients.csv"]


def _auto_nmax(alpha: float) -> int:
    import math

    n = 4
    while True:
        tail = math.exp(-abs(alpha) ** 2) * sum(
            abs(alpha) ** (2 * k) / math.factorial(k) for k in range(n + 1, n + 60))
        if tail <= 1e-12:
            return n
        n += 1


def _example4(args, out: Path):
    import numpy as np

    from .lin_sys import TimeGrid, build_state_space, cavity_params, impulse_response, suggest_grid
    from .photon_states import correlated_gaussian_2d, make_unfactorizable
    from .response import output_state_passive_unfactorizable
    from .tensor_alg import multimode_convolution_direct

    tol = args.tol or 1e-6
    rho, kappa = args.rho, args.kappa
    n_points = args.grid_points or 128
    grid = TimeGrid(-5.0, 7.0, n_points)
    psi = correlated_gaussian_2d((1.0, 1.0), (1.0, 1.0), rho)(grid.times, grid.times)
    state = make_unfactorizable([psi], grid)
    ss = build_state_space(cavity_params(kappa))
    ir = impulse_response(ss, suggest_grid(ss, dt=grid.dt))
    rec = output_state_passive_unfactorizable(ss, state, ir=ir)
    fft_path = rec.channels[0].diagonal_block()
    direct = multimode_convolution_direct(state.channels[0], ir.minus_kernel())
    direct_block = direct.diagonal_block()
    rel = (np.linalg.norm(fft_path - direct_block)
           / max(np.linalg.norm(direct_block), 1e-300))
    og = rec.channels[0].grid
    t_out = og.times
    rows_in = [[grid.times[i], grid.times[j], psi[i, j].real, psi[i, j].imag]
               for i in range(n_points) for j in range(n_points)]
    write_csv(out / "example4_psi_in.csv", ["t1", "t2", "re", "im"], rows_in)
    stride = max(1, len(t_out) // 192)
    rows_out = [[t_out[i], t_out[j], fft_path[i, j].real, fft_path[i, j].imag]
                for i in range(0, len(t_out), stride)
                for j in range(0, len(t_out), stride)]
    write_csv(out / "example4_psi_out.csv", ["t1", "t2", "re", "im"], rows_out)
    report = {
        "parameters": {"rho": rho, "kappa": kappa, "n_points": n_points},
        "relative_l2_fft_vs_quadrature": float(rel),
        "norm_in": state.norms[0],
        "norm_out_recomputed": rec.recomputed_norms[0],
        "max_abs_error": float(rel),
        "tolerance": tol,
        "pass": bool(rel <= tol),
    }
    return report, ["example4_psi_in.csv", "example4_psi_out.csv"]


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="photonflow",
        description="Steady-state response of quantum linear systems to "
                    "multi-photon fields",
    )
    parser.add_argument("--version", action="store_true", help="print version and exit")
    sub = parser.add_subparsers(dest="command")

    p_info = sub.add_parser("system-info", help="validate a system and report its matrices")
    p_info.add_argument("--config", required=True, help="run config or system JSON path")
    p_info.add_argument("--out", default="photonflow-out")

    p_resp = sub.add_parser("response", help="compute an output quantity")
    p_resp.add_argument("quantity", choices=["covariance", "intensity", "state"])
    p_resp.add_argument("--config", required=True, help="run config JSON path")
    p_resp.add_argument("--out", default="photonflow-out")
    p_resp.add_argument("--grid-points", type=int, default=None)
    p_resp.add_argument("--t-max", type=float, default=None)

    p_ex = sub.add_parser("example", help="run a built-in worked example")
    p_ex.add_argument("example_id", type=int, choices=[1, 2, 3, 4])
    p_ex.add_argument("--out", default="photonflow-out")
    p_ex.add_argument("--tol", type=float, default=None)
    p_ex.add_argument("--eta", type=float, default=0.5, help="example 1 transmissivity")
    p_ex.add_argument("--R", dest="reflectivity", type=float, default=0.5)
    p_ex.add_argument("--T", dest="transmissivity", type=float, default=None)
    p_ex.add_argument("--ell", type=int, default=2)
    p_ex.add_argument("--alpha", type=float, default=1.0)
    p_ex.add_argument("--n-max", type=int, default=None)
    p_ex.add_argument("--rho", type=float, default=0.5)
    p_ex.add_argument("--kappa", type=float, default=2.0)
    p_ex.add_argument("--grid-points", type=int, default=None)
    return parser


def main(argv=None) -> int:
    from .errors import CapExceededError, ConfigError

    parser = build_parser()
    args = parser.parse_args(argv)
    if args.version:
        from . import __version__

        print(__version__)
        return 0
    if not args.command:
        parser.print_help()
        return 2
    try:
        if args.command == "system-info":
            return cmd_system_info(args)
        if args.command == "response":
            return cmd_response(args)
        if args.command == "example":
            if args.example_id == 3 and args.transmissivity is None:
                args.transmissivity = 0.8
                args.reflectivity = 0.6 if args.reflectivity == 0.5 else args.reflectivity
            return cmd_example(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CapExceededError as exc:
        print(f"cap exceeded: {exc}", file=sys.stderr)
        return 3
    return 2


if __name__ == "__main__":
    sys.exit(main())
