"""Command-line front end: subcommands, config files, reports, snapshots.

Exit codes: 0 pass, 1 check failure, 2 usage error, 3 I/O error.
Machine-readable reports are deterministic ``key = value`` text (sorted
keys, %.17g floats, no timestamps), so identical config + seed gives
byte-identical output.  Every run report embeds the resolved config and
the geometry fingerprint.  TORUSJETS_THREADS caps the kernel thread
count; TORUSJETS_KERNELS selects the compute backend.
"""

import configparser
import functools
import math
import os
import sys
from fractions import Fraction

import click
import numpy as np

from .builder import (
    BuilderError,
    ToyScales,
    base_pair,
    iterate,
    residual,
    stencil_residual,
)
from .geometry import GammaDomainError, build_gamma_solver, constants
from .jets import (
    PlacementError,
    QuadratureError,
    ResolutionError,
    build_cutoffs,
    build_jet_family,
    verify_jet_identities,
)
from .ledger import (
    LedgerError,
    ParameterLedger,
    check_feasibility,
    derive,
    search,
)
from .noise import (
    NoiseConfig,
    NoiseError,
    ou_convolve,
    sample_wiener,
    stopping_time,
    upsilon_root_bound,
)
from .spectral_core import Grid3, load_snapshot, norm, save_snapshot

__all__ = ["RunConfig", "main", "cli", "write_report", "read_report"]


_CHECK_ERRORS = (BuilderError, GammaDomainError, LedgerError, NoiseError,
                 PlacementError, QuadratureError, ResolutionError, ValueError)


def _guarded(fn):
    """Map exceptions onto the exit-code policy."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except OSError as exc:
            click.echo("i/o error: %s" % exc, err=True)
            sys.exit(3)
        except _CHECK_ERRORS as exc:
            click.echo("check failure: %s" % exc, err=True)
            sys.exit(1)
    return wrapper


# ---------------------------------------------------------------------------
# config and reports
# ---------------------------------------------------------------------------

class RunConfig:
    """Resolved run parameters: defaults < config file < command flags.

    Values live in a flat ``section.key`` mapping of strings; every
    report embeds the full mapping, so reruns are self-describing.
    """

    def __init__(self, command):
        self.command = command
        self.values = {}

    def load_file(self, path):
        parser = configparser.ConfigParser()
        with open(path, "r") as fh:
            parser.read_file(fh)
        for section in parser.sections():
            for key, val in parser.items(section):
                self.values["%s.%s" % (section, key)] = val
        return self

    def set(self, key, value):
        if value is not None:
            self.values[key] = _fmt(value)

    def get(self, key, default=None, cast=str):
        if key in self.values:
            return cast(self.values[key])
        return default

    def items(self):
        return sorted(self.values.items())


def _fmt(value):
    """Deterministic text form of a report value."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (np.floating, float)):
        return "%.17g" % float(value)
    if isinstance(value, (np.integer, int)):
        return "%d" % int(value)
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, (tuple, list)):
        return ",".join(_fmt(v) for v in value)
    return str(value)


def write_report(path, mapping):
    """Atomically write a machine-readable key = value report."""
    lines = ["%s = %s" % (k, _fmt(v)) for k, v in sorted(mapping.items())]
    text = "\n".join(lines) + "\n"
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)
    return text


def read_report(path):
    out = {}
    with open(path, "r") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition(" = ")
            out[key] = val
    return out


def _emit(report, out_path, machine, summary):
    """Write/print one report per the output flags."""
    text = None
    if out_path is not None:
        os.makedirs(os.path.dirname(out_path) or ".", exist_ok=True)
        text = write_report(out_path, report)
    if machine:
        if text is None:
            text = "\n".join("%s = %s" % (k, _fmt(v))
                             for k, v in sorted(report.items())) + "\n"
        click.echo(text, nl=False)
    else:
        for line in summary:
            click.echo(line)


def _fingerprint(direction_set):
    dirs = ";".join(",".join(str(c) for c in d)
                    for d in direction_set.directions)
    return {
        "fingerprint.directions": dirs,
        "fingerprint.n_star": direction_set.n_star,
        "fingerprint.positivity_radius": direction_set.positivity_radius,
    }


def _thread_setup():
    threads = os.environ.get("TORUSJETS_THREADS")
    if threads:
        try:
            from numba import set_num_threads
            set_num_threads(int(threads))
        except ImportError:
            pass


# ---------------------------------------------------------------------------
# command group
# ---------------------------------------------------------------------------

@click.group()
@click.version_option(package_name="artifact", prog_name="torusjets")
def cli():
    """Spectral toolkit for convex-integration constructions on T^3."""
    _thread_setup()


@cli.group()
def geometry():
    """Direction-set and geometric-lemma commands."""


@geometry.command("dump")
@click.option("--out", type=click.Path(), default=None,
              help="Write the machine report to this file.")
@click.option("--machine", is_flag=True, help="Print machine format.")
@_guarded
def geometry_dump(out, machine):
    """Dump the direction set, frames and certified constants."""
    solver = build_gamma_solver()
    ds = solver.direction_set
    c_lambda, m_const, meta = constants(solver)
    rep = dict(_fingerprint(ds))
    rep["C_Lambda"] = c_lambda
    rep["M"] = m_const
    for key, val in meta.items():
        rep["meta.%s" % key] = val
    for i, frame in enumerate(ds.frames):
        rep["frame.%d" % i] = ";".join(
            ",".join(str(c) for c in axis) for axis in frame)
    summary = [
        "directions: %d, n_star = %d" % (len(ds.directions), ds.n_star),
        "positivity radius %.6g, C_Lambda %.6g, M %.6g"
        % (ds.positivity_radius, c_lambda, m_const),
    ]
    _emit(rep, out, machine or out is None, summary)


@cli.group()
def jets():
    """Intermittent-jet commands."""


def _jet_options(fn):
    fn = click.option("--n", default=128, show_default=True,
                      help="Grid resolution.")(fn)
    fn = click.option("--lam", default=16.0, show_default=True,
                      help="Jet frequency lambda.")(fn)
    fn = click.option("--r-perp", default=0.125, show_default=True)(fn)
    fn = click.option("--r-par", default=0.5, show_default=True)(fn)
    fn = click.option("--mu", default=4.0, show_default=True)(fn)
    fn = click.option("--time", "t", default=0.0, show_default=True)(fn)
    return fn


def _build_family(n, lam, r_perp, r_par, mu):
    scales = {"r_perp": r_perp, "r_par": r_par, "lam": lam, "mu": mu}
    solver = build_gamma_solver()
    family = build_jet_family(build_cutoffs(), solver.direction_set,
                              scales, Grid3(n))
    return family, solver


@jets.command("build")
@_jet_options
@click.option("--out", type=click.Path(), default=None)
@click.option("--machine", is_flag=True)
@_guarded
def jets_build(n, lam, r_perp, r_par, mu, t, out, machine):
    """Build a jet family and report placement and renormalization."""
    cfg = RunConfig("jets build")
    for key, val in (("n", n), ("lam", lam), ("r_perp", r_perp),
                     ("r_par", r_par), ("mu", mu), ("time", t)):
        cfg.set("jets.%s" % key, val)
    family, solver = _build_family(n, lam, r_perp, r_par, mu)
    rep = dict(_fingerprint(solver.direction_set))
    rep.update(("config.%s" % k, v) for k, v in cfg.items())
    rep["jets.count"] = len(family)
    rep["jets.arg_rate"] = family.arg_rate
    rep["jets.minimum_resolution"] = family.minimum_resolution()
    for i, (u0, v0) in enumerate(family.shifts):
        rep["shift.%d" % i] = (u0, v0)
        rep["renormalization.%d" % i] = float(family.renormalization(i, t))
    summary = ["built %d jets at n=%d (lambda=%g, r_perp=%g)"
               % (len(family), n, lam, r_perp)]
    _emit(rep, out, machine, summary)


@jets.command("verify")
@_jet_options
@click.option("--out", type=click.Path(), default=None)
@click.option("--machine", is_flag=True)
@_guarded
def jets_verify(n, lam, r_perp, r_par, mu, t, out, machine):
    """Verify the jet identities and exit nonzero on failure."""
    cfg = RunConfig("jets verify")
    for key, val in (("n", n), ("lam", lam), ("r_perp", r_perp),
                     ("r_par", r_par), ("mu", mu), ("time", t)):
        cfg.set("jets.%s" % key, val)
    family, solver = _build_family(n, lam, r_perp, r_par, mu)
    idrep = verify_jet_identities(family, t, solver)
    checks = {
        "divergence": (idrep.residual_div, 1e-10),
        "curlcurl": (idrep.residual_curlcurl, 1e-10),
        "transport": (idrep.residual_transport, 1e-8),
        "geometry": (idrep.residual_geometry, 1e-6),
    }
    rep = dict(_fingerprint(solver.direction_set))
    rep.update(("config.%s" % k, v) for k, v in cfg.items())
    ok = True
    for name, (val, tol) in checks.items():
        passed = val < tol
        ok = ok and passed
        rep["identity.%s" % name] = val
        rep["tolerance.%s" % name] = tol
        rep["pass.%s" % name] = passed
    rep["renormalization"] = idrep.renormalization
    rep["corrector_mismatch"] = idrep.corrector_mismatch
    rep["pass.overall"] = ok
    summary = ["jet identities: " + ("PASS" if ok else "FAIL")]
    summary += ["  %-12s %.3e (tol %.0e)" % (k, v, tol)
                for k, (v, tol) in checks.items()]
    _emit(rep, out, machine, summary)
    if not ok:
        sys.exit(1)


@cli.group()
def ledger():
    """Exact-exponent parameter-ledger commands."""


@ledger.command("check")
@click.option("--config", "config_path", type=click.Path(), required=True,
              help="Config file with a [ledger] section.")
@click.option("--out", type=click.Path(), default=None)
@click.option("--machine", is_flag=True)
@_guarded
def ledger_check(config_path, out, machine):
    """Check every catalogued constraint for a configured ledger."""
    cfg = RunConfig("ledger check").load_file(config_path)
    led = ParameterLedger(
        m=Fraction(cfg.get("ledger.m", "1")),
        k=int(cfg.get("ledger.k", "2")),
        b=int(cfg.get("ledger.b", "16")),
        beta=Fraction(cfg.get("ledger.beta", "1/10000")),
        L=float(cfg.get("ledger.l", cfg.get("ledger.L", "16"))),
        c_R=float(cfg.get("ledger.c_r", cfg.get("ledger.c_R", "1e-9"))),
        q=int(cfg.get("ledger.q", "0")),
        mode=cfg.get("ledger.mode", "additive"),
    )
    report = check_feasibility(led)
    rep = {"config.%s" % k: v for k, v in cfg.items()}
    for verdict in report:
        rep["constraint.%s" % verdict.name] = verdict.passed
        rep["margin.%s" % verdict.name] = verdict.margin
    rep["pass.overall"] = report.passed
    rep["failures"] = ";".join(report.failures)
    summary = ["ledger check: " + ("PASS" if report.passed else "FAIL")]
    summary += ["  failed: %s" % name for name in report.failures]
    _emit(rep, out, machine, summary)
    if not report.passed:
        sys.exit(1)


@ledger.command("search")
@click.option("--m", "m_str", default="1", show_default=True,
              help="Dissipation order as a fraction, e.g. 7/10.")
@click.option("--mode", default="additive", show_default=True,
              type=click.Choice(["additive", "multiplicative"]))
@click.option("--q-max", default=2, show_default=True)
@click.option("--out", type=click.Path(), default=None)
@click.option("--machine", is_flag=True)
@_guarded
def ledger_search(m_str, mode, q_max, out, machine):
    """Search for a feasible ledger and report exact exponents."""
    led = search(Fraction(m_str), mode=mode, q_max=q_max)
    stage = derive(led)
    rep = {
        "config.ledger.m": m_str,
        "config.ledger.mode": mode,
        "config.ledger.q_max": q_max,
        "ledger.k_log2": led.k.bit_length() - 1,
        "ledger.b": led.b,
        "ledger.beta": led.beta,
        "ledger.L": led.L,
        "ledger.c_R": led.c_R,
        "alpha": stage.alpha,
        "p_star": stage.p_star,
        "exponent.lambda_q1": stage.lambda_q1.exponent,
        "exponent.delta_q1": stage.delta_q1.exponent,
        "exponent.l": stage.l.exponent,
        # exponents relative to lambda_{q+1}: the paper's printed values
        "exponent.r_perp": stage.r_perp.exponent
        / stage.lambda_q1.exponent,
        "exponent.r_par": stage.r_par.exponent / stage.lambda_q1.exponent,
        "exponent.mu": stage.mu.exponent / stage.lambda_q1.exponent,
        "pass.overall": True,
    }
    summary = [
        "feasible ledger at m=%s (%s): k = 2^%d, b = %d"
        % (m_str, mode, rep["ledger.k_log2"], led.b),
        "lambda exponents: r_par %s, r_perp %s, mu %s, p* = %s"
        % (rep["exponent.r_par"], rep["exponent.r_perp"],
           rep["exponent.mu"], stage.p_star),
    ]
    _emit(rep, out, machine, summary)


@cli.group()
def stage():
    """Convex-integration stage commands."""


_STAGE_TOLS = {
    "reconstruction": 1e-7,
    "principal-square": 1e-7,
    "corrector-split": 1e-7,
    "principal-divergence": 1e-10,
    "principal-mean": 1e-10,
    "transport": 1e-7,
    "oscillation": 1e-7,
    "w-divergence": 1e-10,
    "w-mean": 1e-10,
}


def _stage_noise(mode, m, seed, t_max, n):
    if seed is None:
        return None
    if mode == "additive":
        ncfg = NoiseConfig(mode="additive", m=m, dt=0.05,
                           T=t_max + 0.2, seed=seed, n=n)
        return ou_convolve(sample_wiener(ncfg))
    ncfg = NoiseConfig(mode="multiplicative", m=m, dt=0.01,
                       T=t_max + 0.2, seed=seed)
    return sample_wiener(ncfg)


@stage.command("run")
@click.option("--mode", required=True,
              type=click.Choice(["additive", "multiplicative"]))
@click.option("--toy/--full", default=True, show_default=True,
              help="Toy scales verify the discrete algebra exactly.")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--n", type=int, default=None, help="Grid size [64].")
@click.option("--big-l", "--L", "big_l", type=float, default=None,
              help="Growth parameter L [2.0].")
@click.option("--m", type=float, default=None,
              help="Dissipation order [1.0].")
@click.option("--seed", type=int, default=None,
              help="Noise seed; omit for the zero/unit noise path.")
@click.option("--times", default=None, help="Report times [0.0,0.04].")
@click.option("--out", type=click.Path(), default=None)
@click.option("--machine", is_flag=True)
@_guarded
def stage_run(mode, toy, config_path, n, big_l, m, seed, times, out,
              machine):
    """Run one full stage step, verify identities, save snapshots."""
    if not toy:
        raise click.UsageError(
            "genuine ledger scales overflow doubles; only --toy runs")
    cfg = RunConfig("stage run")
    if config_path is not None:
        cfg.load_file(config_path)
    for key, val in (("mode", mode), ("toy", toy), ("seed", seed)):
        cfg.set("stage.%s" % key, val)
    # precedence: command flag > config file > default
    n = n if n is not None else cfg.get("grid.n", 64, int)
    big_l = big_l if big_l is not None \
        else cfg.get("stage.l_growth", 2.0, float)
    m = m if m is not None else cfg.get("stage.m", 1.0, float)
    times = times if times is not None \
        else cfg.get("stage.times", "0.0,0.04")
    cfg.set("grid.n", n)
    cfg.set("stage.l_growth", big_l)
    cfg.set("stage.m", m)
    cfg.set("stage.times", times)
    report_times = tuple(float(s) for s in times.split(","))

    if out is None:
        out = "stage-%s" % mode
    os.makedirs(out, exist_ok=True)

    grid = Grid3(n)
    aux = _stage_noise(mode, m, seed, max(report_times), n)
    pair = base_pair(mode, big_l, grid, m, aux=aux)
    solver = build_gamma_solver()
    nxt, srep = iterate(pair, ToyScales(), solver=solver,
                        report_times=report_times)
    res = residual(nxt, times=report_times)

    rep = dict(_fingerprint(solver.direction_set))
    rep.update(("config.%s" % k, v) for k, v in cfg.items())
    ok = True
    for name, tol in _STAGE_TOLS.items():
        val = srep.identity[name]
        passed = val < tol
        ok = ok and passed
        rep["identity.%s" % name] = val
        rep["tolerance.%s" % name] = tol
        rep["pass.%s" % name] = passed
    rep["residual.l2"] = res.l2
    rep["residual.h_minus1"] = res.h_minus1
    rep["residual.relative"] = res.relative
    rep["residual.scale"] = res.scale
    res_ok = res.relative < 1e-6
    ok = ok and res_ok
    rep["pass.residual"] = res_ok
    rep["t0_seed_sensitivity"] = srep.t0_seed_sensitivity
    det_ok = srep.t0_seed_sensitivity < 1e-12
    ok = ok and det_ok
    rep["pass.determinism"] = det_ok
    rep["velocity_increment"] = srep.velocity_increment
    rep["increment_reference"] = srep.increment_reference
    rep["stress_in"] = srep.stress_in
    rep["stress_out"] = srep.stress_out
    rep["note"] = srep.note
    for key, val in srep.parameters.items():
        rep["parameters.%s" % key] = val
    rep["pass.overall"] = ok

    # snapshot stencil for `stage residual`
    t_c = report_times[-1]
    h = nxt.fd_h
    for j in (-2, -1, 0, 1, 2):
        _save_atomic(nxt.v(t_c + j * h),
                     os.path.join(out, "v_%+d.wnf" % j))
    _save_atomic(nxt.R(t_c), os.path.join(out, "R_0.wnf"))
    meta = {"time": t_c, "h": h, "m": m, "mode": mode,
            "upsilon": nxt.upsilon(t_c), "has_z": False}
    if mode == "additive" and not nxt.aux.is_zero:
        _save_atomic(nxt.z(t_c), os.path.join(out, "z_0.wnf"))
        meta["has_z"] = True
    write_report(os.path.join(out, "stencil.meta"), meta)
    write_report(os.path.join(out, "stage.report.txt"), rep)

    summary = ["stage %s (toy, n=%d): %s" % (mode, n,
                                             "PASS" if ok else "FAIL"),
               "  worst identity %.3e, residual rel %.3e, t0 seed %.3e"
               % (max(srep.identity.values()), res.relative,
                  srep.t0_seed_sensitivity),
               "  artifacts in %s" % out]
    _emit(rep, None, machine, summary)
    if not ok:
        sys.exit(1)


def _save_atomic(field, path):
    tmp = path + ".tmp"
    save_snapshot(field, tmp)
    os.replace(tmp, path)


@stage.command("residual")
@click.option("--in", "in_dir", type=click.Path(), required=True,
              help="Directory written by `stage run`.")
@click.option("--tol", default=1e-6, show_default=True)
@click.option("--out", type=click.Path(), default=None)
@click.option("--machine", is_flag=True)
@_guarded
def stage_residual(in_dir, tol, out, machine):
    """Re-evaluate the stage equation from saved snapshots."""
    meta = read_report(os.path.join(in_dir, "stencil.meta"))
    h = float(meta["h"])
    m = float(meta["m"])
    mode = meta["mode"]
    stencil = [load_snapshot(os.path.join(in_dir, "v_%+d.wnf" % j))
               for j in (-2, -1, 0, 1, 2)]
    stress = load_snapshot(os.path.join(in_dir, "R_0.wnf"))
    z = None
    if meta.get("has_z") == "true":
        z = load_snapshot(os.path.join(in_dir, "z_0.wnf"))
    proj = stencil_residual(stencil, stress, None, h, m, mode, z=z,
                            upsilon=float(meta.get("upsilon", "1")))
    from .spectral_core import tensor_divergence, FourierField3
    scale = norm(FourierField3(stress.grid,
                               tensor_divergence(stress).coeffs), "Lp", 2)
    rel = norm(proj, "Lp", 2) / scale if scale > 0 else 0.0
    ok = rel < tol
    rep = {
        "config.in": in_dir, "config.tol": tol,
        "residual.l2": norm(proj, "Lp", 2),
        "residual.relative": rel, "residual.scale": scale,
        "time": float(meta["time"]), "h": h, "mode": mode,
        "pass.overall": ok,
    }
    summary = ["snapshot residual: %s (rel %.3e, tol %.0e)"
               % ("PASS" if ok else "FAIL", rel, tol)]
    _emit(rep, out, machine, summary)
    if not ok:
        sys.exit(1)


@cli.group()
def noise():
    """Noise sampling commands."""


@noise.command("simulate")
@click.option("--mode", required=True,
              type=click.Choice(["additive", "multiplicative"]))
@click.option("--m", default=1.0, show_default=True)
@click.option("--dt", default=0.05, show_default=True)
@click.option("--big-t", "--T", "big_t", default=1.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--n", default=32, show_default=True)
@click.option("--cap", "cap_l", default=None, type=float,
              help="Stopping cap L; defaults to T.")
@click.option("--delta", default=0.05, show_default=True)
@click.option("--out", type=click.Path(), default=None)
@click.option("--machine", is_flag=True)
@_guarded
def noise_simulate(mode, m, dt, big_t, seed, n, cap_l, delta, out, machine):
    """Sample a noise path and report its stopping diagnostics."""
    cap_l = big_t if cap_l is None else cap_l
    ncfg = NoiseConfig(mode=mode, m=m, dt=dt, T=big_t, seed=seed, n=n)
    wiener = sample_wiener(ncfg)
    rep = {
        "config.noise.mode": mode, "config.noise.m": m,
        "config.noise.dt": dt, "config.noise.t": big_t,
        "config.noise.seed": seed, "config.noise.n": n,
        "config.noise.cap": cap_l, "config.noise.delta": delta,
        "steps": len(wiener.times) - 1,
    }
    if mode == "additive":
        z = ou_convolve(wiener)
        tau = stopping_time(z, cap_l, delta)
        zf = z.field(len(z.times) - 1)
        rep["final_l2"] = norm(zf, "Lp", 2)
    else:
        tau = stopping_time(wiener, cap_l, delta)
        rep["final_b"] = float(wiener.values[-1])
        rep["upsilon_root_bound"] = upsilon_root_bound(cap_l)
    rep["stopping_time"] = tau
    rep["pass.overall"] = True
    summary = ["%s noise: %d steps, stopping time %.6g (cap %.6g)"
               % (mode, rep["steps"], tau, cap_l)]
    _emit(rep, out, machine, summary)


@cli.command("report")
@click.option("--dir", "in_dir", type=click.Path(), required=True,
              help="Directory of *.report.txt files to aggregate.")
@click.option("--out", type=click.Path(), default=None)
@_guarded
def aggregate_report(in_dir, out):
    """Aggregate machine reports in a directory into one table."""
    names = sorted(f for f in os.listdir(in_dir)
                   if f.endswith(".report.txt"))
    if not names:
        raise click.UsageError("no *.report.txt files in %s" % in_dir)
    rows = {}
    n_fail = 0
    for name in names:
        stem = name[:-len(".report.txt")]
        data = read_report(os.path.join(in_dir, name))
        for key, val in data.items():
            rows["%s.%s" % (stem, key)] = val
        if data.get("pass.overall") == "false":
            n_fail += 1
    if out is not None:
        write_report(out, rows)
    for key, val in sorted(rows.items()):
        click.echo("%s = %s" % (key, val))
    click.echo("# %d reports, %d failing" % (len(names), n_fail))
    if n_fail:
        sys.exit(1)


def main(argv=None):
    """Console entry point."""
    return cli.main(args=argv)


if __name__ == "__main__":
    main()
