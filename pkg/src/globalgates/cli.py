"""Command-line entry point.

Subcommands: validate-layout, compile, simulate, verify, universality,
error-scaling.  Exit codes: 0 on success or all checks passing, 1 when a
check fails (the counterexample is printed) or a computation cannot meet
its target, 2 on usage, parse, or I/O errors.

Reports are JSON (one object per file) and sweep tables are CSV with the
header ``N,error,bound``; report files never embed wall-clock times, so
repeated runs with the same seed and inputs are byte-identical no matter
the thread count.  Figures rendered next to CSV outputs are a
convenience and carry no data of their own.
"""

from __future__ import annotations

import json
import sys
import time

import click
import numpy as np

from . import __version__, kernels
from .lattice import Layout, LayoutError, load_layout, validate_layout

MAX_N_DEFAULT = 22


def _fail_usage(message: str) -> "click.ClickException":
    exc = click.ClickException(message)
    exc.exit_code = 2
    return exc


def _load_layout_checked(path, max_n: int) -> Layout:
    try:
        layout = load_layout(path)
    except (OSError, json.JSONDecodeError, LayoutError) as exc:
        raise _fail_usage(f"cannot load layout {path}: {exc}")
    if layout.n > max_n:
        raise _fail_usage(f"layout has {layout.n} sites, over the cap of {max_n} "
                          "(raise with --max-n)")
    return layout


def _write_json(path, doc: dict) -> None:
    doc = {"tool": "globalgates", "version": __version__, **doc}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _write_csv(path, rows, header: str = "N,error,bound") -> None:
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(repr(x) if isinstance(x, float) else str(x)
                              for x in row) + "\n")


@click.group()
@click.version_option(__version__, prog_name="globalgates")
@click.option("--seed", type=int, default=0, show_default=True,
              help="Seed for every randomized check.")
@click.option("--threads", type=int, default=0, show_default=True,
              help="Kernel thread count (0 = library default); results do not "
                   "depend on it.")
@click.option("--max-n", type=int, default=MAX_N_DEFAULT, show_default=True,
              help="Refuse layouts with more sites than this.")
@click.option("-v", "--verbose", is_flag=True, help="Chatty progress output.")
@click.pass_context
def main(ctx, seed, threads, max_n, verbose):
    """Compile, simulate, and verify global-gate programs on qubit lattices."""
    if max_n <= 0:
        raise _fail_usage("--max-n must be positive")
    kernels.set_threads(threads if threads > 0 else None)
    ctx.obj = {"seed": seed, "max_n": max_n, "verbose": verbose}


@main.command("validate-layout")
@click.option("--layout", "layout_path", required=True, type=click.Path())
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Write the constraint report as JSON.")
@click.pass_obj
def validate_layout_cmd(obj, layout_path, out_path):
    """Check the difference-uniqueness constraints of a layout file."""
    layout = _load_layout_checked(layout_path, obj["max_n"])
    report = validate_layout(layout)
    if out_path:
        _write_json(out_path, {"layout": layout_path, **report.to_dict()})
    if report.valid:
        click.echo(f"valid: n={layout.n}, k={layout.k}")
        return
    click.echo("invalid:")
    for cid, witness in report.violations:
        click.echo(f"  constraint {cid}: witness {witness}")
    sys.exit(1)


@main.command("compile")
@click.option("--layout", "layout_path", required=True, type=click.Path())
@click.option("--circuit", "circuit_path", required=True, type=click.Path())
@click.option("--epsilon", type=float, required=True,
              help="Total operator-norm error budget on the code space.")
@click.option("--mode", default="calibrated", show_default=True,
              help="paper | fixed:N1,N2 | calibrated")
@click.option("--calibrate-on", "proxy_path", type=click.Path(), default=None,
              help="Layout file to run calibration probes on (defaults to the "
                   "target layout); the result is still verified on the target.")
@click.option("--sim-tol", type=float, default=1e-9, show_default=True,
              help="Per-instruction simulation tolerance for calibration runs.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_obj
def compile_cmd(obj, layout_path, circuit_path, epsilon, mode, proxy_path,
                sim_tol, out_path):
    """Lower a logical circuit to a global-gate sequence file."""
    from .compiler import (CompileError, CompilationBudget, compile_circuit,
                           load_circuit, paper_bound_N)
    from .lattice import weight_ratio

    layout = _load_layout_checked(layout_path, obj["max_n"])
    try:
        circuit = load_circuit(circuit_path, layout)
    except (OSError, json.JSONDecodeError, CompileError) as exc:
        raise _fail_usage(f"cannot load circuit {circuit_path}: {exc}")

    kwargs = {}
    if mode == "paper":
        budget_mode = "paper_bound"
    elif mode == "calibrated":
        budget_mode = "calibrated"
        if proxy_path:
            kwargs["calibration_layout"] = _load_layout_checked(proxy_path, obj["max_n"])
    elif mode.startswith("fixed:"):
        budget_mode = "fixed"
        try:
            n1, n2 = (int(x) for x in mode.split(":", 1)[1].split(","))
        except ValueError:
            raise _fail_usage("fixed mode syntax is fixed:N1,N2")
        kwargs.update(N1=n1, N2=n2)
    else:
        raise _fail_usage(f"unknown mode {mode!r}")

    try:
        budget = CompilationBudget(eps_total=epsilon, mode=budget_mode,
                                   sim_tol=sim_tol, **kwargs)
        sequence = compile_circuit(layout, circuit, budget)
    except CompileError as exc:
        if mode == "paper":
            w = weight_ratio(layout)
            ell = max(1, len(circuit.gates))
            n1, n2 = paper_bound_N(w, layout.n, epsilon / ell)
            click.echo(f"paper-bound block counts: N1={n1:.6g} N2={n2:.6g} "
                       f"(w={w:.3g}, n={layout.n})")
        click.echo(f"compilation failed: {exc}", err=True)
        sys.exit(1)
    sequence.save(out_path, layout)
    meta = sequence.metadata
    click.echo(f"compiled {len(circuit.gates)} gates -> "
               f"{len(sequence.instructions)} instructions "
               f"(mode={mode}, predicted bound {meta.get('predicted_bound', 0):.3g})")
    if meta.get("measured_error_bound") is not None:
        click.echo(f"measured per-gate error sum: {meta['measured_error_bound']:.4g}")


@main.command("simulate")
@click.option("--layout", "layout_path", required=True, type=click.Path())
@click.option("--sequence", "sequence_path", required=True, type=click.Path())
@click.option("--initial", default=None,
              help="Logical input bits (site order along P); default all zeros.")
@click.option("--amp-min", type=float, default=1e-12, show_default=True,
              help="Drop amplitudes below this from the state dump.")
@click.option("--sim-tol", type=float, default=1e-12, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.pass_obj
def simulate_cmd(obj, layout_path, sequence_path, initial, amp_min, sim_tol, out_path):
    """Run a gate-sequence file from an admissible initial state."""
    from .operators import OperatorError, load_sequence, run_sequence
    from .statevec import PureState, StateError, encode_logical, project_admissible, \
        save_state_dump

    layout = _load_layout_checked(layout_path, obj["max_n"])
    try:
        sequence = load_sequence(sequence_path, layout)
    except (OSError, json.JSONDecodeError, OperatorError, LayoutError) as exc:
        raise _fail_usage(f"cannot load sequence {sequence_path}: {exc}")

    bits = initial if initial is not None else "0" * layout.k
    try:
        index = encode_logical(bits, layout)
    except StateError as exc:
        raise _fail_usage(str(exc))
    amps = np.zeros(1 << layout.n, dtype=np.complex128)
    amps[index] = 1.0
    state = PureState(amps, layout)
    try:
        final = run_sequence(state, sequence, tol=sim_tol)
    except OperatorError as exc:
        click.echo(f"simulation failed: {exc}", err=True)
        sys.exit(1)
    logical, leakage = project_admissible(final)
    doc = save_state_dump(final, out_path, amp_min=amp_min,
                          extra={"initial": bits, "instructions": len(sequence.instructions)})
    click.echo(f"instructions applied: {len(sequence.instructions)}")
    click.echo(f"leakage: {leakage:.6g}")
    for b, amp in enumerate(logical):
        if abs(amp) >= amp_min:
            bstr = format(b, f"0{max(layout.k, 1)}b")[::-1] if layout.k else ""
            click.echo(f"  |{bstr}>  {amp.real:+.12f} {amp.imag:+.12f}i")
    if out_path:
        click.echo(f"state dump written to {out_path}")
    del doc


@main.command("verify")
@click.option("--layout", "layout_path", required=True, type=click.Path())
@click.option("--suite", default="all", show_default=True,
              type=click.Choice(["all", "diagonal", "addressing", "blocks", "scaling"]))
@click.option("--tol", type=float, default=1e-12, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.pass_obj
def verify_cmd(obj, layout_path, suite, tol, out_path):
    """Run the identity-check suites against a layout."""
    from .verify import suite_reports

    layout = _load_layout_checked(layout_path, obj["max_n"])
    start = time.perf_counter()
    reports = suite_reports(layout, suite, tol=tol, seed=obj["seed"])
    elapsed = time.perf_counter() - start
    failures = [r for r in reports if not r.passed]
    for r in reports:
        mark = "PASS" if r.passed else "FAIL"
        click.echo(f"[{mark}] {r.check} ({r.instance}): "
                   f"max deviation {r.max_deviation:.3e} vs tol {r.tolerance:g}")
        if not r.passed and r.witness:
            click.echo(f"       counterexample: {r.witness}")
    if out_path:
        _write_json(out_path, {
            "layout": layout_path, "suite": suite, "seed": obj["seed"],
            "checks": [r.to_dict() for r in reports],
            "all_passed": not failures,
        })
    click.echo(f"{len(reports) - len(failures)}/{len(reports)} checks passed "
               f"in {elapsed:.1f} s")
    if failures:
        sys.exit(1)


@main.command("universality")
@click.option("--n", "n_values", type=int, multiple=True, required=True,
              help="Circle sizes to test; repeatable.")
@click.option("--generator", default="addressing", show_default=True,
              help="Named two-qubit generator for the global gate.")
@click.option("--distance", type=int, default=1, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="CSV table (a PNG is rendered alongside unless --no-plot).")
@click.option("--plot/--no-plot", default=True, show_default=True)
@click.pass_obj
def universality_cmd(obj, n_values, generator, distance, out_path, plot):
    """Lie-closure universality on the shift-invariant sector."""
    from .algebra import AlgebraError, universality_check

    rows = []
    click.echo("  n  sector  closure  u-dim  su-dim  verdict      wall")
    for n in n_values:
        try:
            res = universality_check(n, two_qubit_generator=generator,
                                     distance=distance)
        except AlgebraError as exc:
            raise _fail_usage(str(exc))
        verdict = f"universal({res.which})" if res.universal else "not universal"
        click.echo(f"{n:3d}  {res.eigenspace_dim:6d}  {res.closure_dim:7d}  "
                   f"{res.target_dim_u:5d}  {res.target_dim_su:6d}  {verdict:12s} "
                   f"{res.elapsed:6.1f}s")
        rows.append(res)
    if out_path:
        _write_csv(out_path,
                   [(r.n, r.eigenspace_dim, r.closure_dim, r.target_dim_u,
                     r.target_dim_su, r.which if r.universal else "none")
                    for r in rows],
                   header="n,eigenspace_dim,closure_dim,u_dim,su_dim,verdict")
        if plot:
            from .plots import universality_figure
            universality_figure(rows, str(out_path) + ".png")
    if not all(r.universal for r in rows):
        sys.exit(1)


@main.command("error-scaling")
@click.option("--kind", default="lemma", show_default=True,
              type=click.Choice(["lemma", "compiled"]),
              help="lemma: random Hermitian pairs against the dense oracle; "
                   "compiled: code-space error of a compiled gate vs N2.")
@click.option("--layout", "layout_path", type=click.Path(), default=None,
              help="Layout for --kind compiled.")
@click.option("--n-values", default="16,64,256,1024,4096", show_default=True,
              help="Comma-separated block counts.")
@click.option("--n1", type=int, default=64, show_default=True,
              help="Fixed inner block count for --kind compiled.")
@click.option("--trials", type=int, default=3, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="CSV with header N,error,bound (PNG rendered alongside).")
@click.option("--plot/--no-plot", default=True, show_default=True)
@click.pass_obj
def error_scaling_cmd(obj, kind, layout_path, n_values, n1, trials, out_path, plot):
    """Commutator-approximation error sweeps, as CSV (and a figure)."""
    from .verify import compiled_error_sweep, lemma_error_sweep

    try:
        ns = [int(x) for x in n_values.split(",") if x.strip()]
    except ValueError:
        raise _fail_usage("--n-values must be comma-separated integers")
    if not ns:
        raise _fail_usage("--n-values is empty")

    if kind == "lemma":
        result = lemma_error_sweep(ns, trials=trials, seed=obj["seed"])
    else:
        if not layout_path:
            raise _fail_usage("--kind compiled needs --layout")
        layout = _load_layout_checked(layout_path, obj["max_n"])
        if layout.k < 2:
            raise _fail_usage("compiled sweep needs a layout with at least "
                              "two logical sites")
        from .compiler import LogicalGate
        gate = LogicalGate("imag_rot", 1, 0.3927, layout.P[0], layout.P[1])
        result = compiled_error_sweep(layout, gate, ns, n1=n1)

    _write_csv(out_path, result.to_rows())
    if plot:
        from .plots import scaling_figure
        scaling_figure(result, str(out_path) + ".png",
                       title=f"{kind} commutator error scaling")
    click.echo(f"log-log slope: {result.slope:.4f} (envelope c = {result.fitted_c:.4f})")
    for row in result.rows:
        click.echo(f"  N={row.N:<6d} error={row.error:.6e}  bound={row.bound:.6e}")
    click.echo(f"table written to {out_path}")


if __name__ == "__main__":
    main()
