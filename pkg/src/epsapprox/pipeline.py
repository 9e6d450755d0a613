"""Pipeline: build -> decompose -> approximate -> verify -> report.

Stages are pure functions of the config; intermediate products can be cached
(pickle keyed by a hash of the config fields the stage depends on plus the
package version).  Reports are canonical JSON with no timestamps, so a fixed
(config, seed) pair reproduces byte-identical output at any job count.
"""

from __future__ import annotations

import hashlib
import json
import pickle
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .approximator import (
    build_global_approximant,
    find_alpha0,
    verify_approximation,
)
from .carleson import carleson_embedding_check
from .config import RunConfig
from .dyadic import build_cube_system
from .functionals import FunctionalSuite, compare_apertures, compare_levelsets
from .geometry import Window, build_boundary, check_adr, descriptor_from_json
from .harmonic import make_field
from .stopping import (
    eps_scaling_chart,
    generation_cubes,
    initial_chain,
    oscillation_cubes,
    principal_cubes,
    verify_eps_packing,
    verify_principal_packing,
)
from .whitney import build_regions, corona_provider, whitney_decompose


def _key(cfg: RunConfig, stage: str) -> str:
    fields = {
        "grid": ("boundary", "window", "resolution", "k_min", "k_max", "scale"),
        "regions": (
            "boundary",
            "window",
            "resolution",
            "k_min",
            "k_max",
            "scale",
            "region",
            "corona_mode",
            "corona_file",
            "eta",
            "K",
            "ambient",
        ),
    }
    deps = fields.get(stage)
    payload = cfg.to_json()
    if deps is not None:
        payload = {k: payload.get(k) for k in deps}
    blob = json.dumps(
        {"stage": stage, "version": __version__, "cfg": payload}, sort_keys=True
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _cache_path(cache_dir, stage, key) -> Path:
    return Path(cache_dir) / f"{stage}-{key}.pkl"


def load_stage(cache_dir, cfg, stage):
    p = _cache_path(cache_dir, stage, _key(cfg, stage))
    if p.exists():
        with open(p, "rb") as fh:
            return pickle.load(fh)
    stale = list(Path(cache_dir).glob(f"{stage}-*.pkl"))
    if stale:
        raise RuntimeError(
            f"cache/version mismatch for stage {stage!r}: rebuild required "
            f"(found {len(stale)} stale artifact(s))"
        )
    raise RuntimeError(f"stage {stage!r} not built; run the earlier subcommand")


def save_stage(cache_dir, cfg, stage, obj):
    Path(cache_dir).mkdir(parents=True, exist_ok=True)
    with open(_cache_path(cache_dir, stage, _key(cfg, stage)), "wb") as fh:
        pickle.dump(obj, fh)


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


def ambient_window(cfg: RunConfig, E) -> Window:
    amb = getattr(cfg, "ambient", None)
    if amb:
        return Window.from_json(amb)
    lo = list(E.window.lo)
    hi = list(E.window.hi)
    L = 2.0 ** (-cfg.k_min) * cfg.scale
    if E.bounded:
        pad = 1.2 * E.diameter
        return Window(
            (lo[0] - pad, -0.85 * L), (hi[0] + pad, 0.85 * L)
        )
    return Window((lo[0], -0.82 * L), (hi[0], 0.82 * L))


def stage_grid(cfg: RunConfig):
    desc = descriptor_from_json(cfg.boundary)
    window = Window.from_json(cfg.window)
    E = build_boundary(desc, cfg.resolution, window, lip_budget=max(0.5, cfg.eta))
    k_min = cfg.k_min
    if k_min is None:
        span = max(abs(min(window.lo)), abs(max(window.hi)))
        k_min = -int(np.ceil(np.log2(2 * span / cfg.scale + 1e-12)))
        cfg.k_min = k_min
    S = build_cube_system(
        E, k_min, cfg.k_max, scale=cfg.scale, inclusion_budget=cfg.budgets.inclusion
    )
    adr = check_adr(E, cfg.budgets.adr)
    return {"E": E, "S": S, "adr": adr}


def stage_regions(cfg: RunConfig, grid):
    E, S = grid["E"], grid["S"]
    amb = ambient_window(cfg, E)
    W = whitney_decompose(E, amb, min_side=cfg.region.c_w * 2.0 ** (-cfg.k_max) * cfg.scale)
    corona = corona_provider(
        E, S, cfg.corona_mode, eta=cfg.eta, K=cfg.K, path=cfg.corona_file
    )
    RC = build_regions(S, W, corona, cfg.region)
    return {"W": W, "RC": RC}


def certified_mask(cfg: RunConfig, E) -> np.ndarray:
    if E.bounded:
        return np.ones(E.n_samples, dtype=bool)
    lo = np.asarray(E.window.lo)
    hi = np.asarray(E.window.hi)
    m = cfg.margin if cfg.margin is not None else E.window.span / 8.0
    return np.all((E.points >= lo + m) & (E.points <= hi - m), axis=1)


def stage_approximate(cfg: RunConfig, grid, regions):
    RC = regions["RC"]
    u = make_field(cfg.field_desc, grid["E"])
    far = 2.0 if grid["E"].bounded else None
    FS = FunctionalSuite(RC, u, sample_frac=cfg.sample_frac, far_ball_factor=far)
    # warm the shared caches before any parallel consumption
    FS.box_extrema()
    FS.grad_integrals()
    FS.owners()
    numbers, m_point = FS.cube_numbers(None)
    for a in cfg.alpha_grid:
        FS.cube_numbers(a)
    state = {"FS": FS, "numbers": numbers, "m_point": m_point, "per_eps": {}}
    for eps in cfg.eps_grid:
        labels = oscillation_cubes(FS, eps, numbers)
        gf = generation_cubes(RC, eps, numbers, u)
        A = build_global_approximant(FS, gf, labels, eps, gamma0=cfg.gamma0)
        state["per_eps"][eps] = {"labels": labels, "gf": gf, "A": A}
    return state


def stage_verify(cfg: RunConfig, grid, regions, approx):
    E, S = grid["E"], grid["S"]
    RC = regions["RC"]
    FS = approx["FS"]
    numbers = approx["numbers"]
    cert = certified_mask(cfg, E)
    cfg_echo = cfg.to_json()
    for exec_only in ("jobs", "out_dir"):
        cfg_echo.pop(exec_only, None)
    report: dict = {
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg_echo,
        "adr": grid["adr"].to_json(),
        "grid": {
            "n_samples": E.n_samples,
            "n_cubes": len(S.relevant_ids()),
            "c1": S.c1,
            "C1": S.C1,
            "k_min": cfg.k_min,
            "k_max": cfg.k_max,
        },
        "corona": RC.corona.to_json(),
        "regions": {
            k: v for k, v in RC.stats.items() if k != "demoted"
        }
        | {"n_demoted": len(RC.stats["demoted"])},
    }
    chain = initial_chain(S)
    fam = principal_cubes(S, numbers, chain)
    report["principal"] = verify_principal_packing(
        S, fam, numbers, budget_factor=cfg.budgets.principal_packing_factor
    )
    # discrete embedding self-check: f = N_* u against the principal family
    lhs, rhs, holds = carleson_embedding_check(
        S, FS.n_star(None), sorted(fam.cubes), S.roots[0]
    )
    report["embedding"] = {"lhs": lhs, "rhs": rhs, "holds": bool(holds)}

    def verify_one(eps):
        st = approx["per_eps"][eps]
        labels, gf, A = st["labels"], st["gf"], st["A"]
        alpha0 = find_alpha0(FS, gf)
        rub = verify_eps_packing(
            S, labels.cubes | RC.corona.bad, eps, budget=cfg.budgets.eps_packing
        )
        rg = verify_eps_packing(
            S, gf.all_cubes, eps, budget=cfg.budgets.eps_packing
        )
        ver = verify_approximation(
            FS,
            A,
            eps,
            alpha0,
            cert,
            p_grid=cfg.p_grid,
            c1_budget=cfg.budgets.pointwise_c1,
        )
        ids = np.nonzero(cert)[0][:: max(1, int(cert.sum()) // 256)]
        cball = FS.carleson_ball(A.tv_box, ids)
        cdy = FS.carleson_dyadic(A.tv_box)[ids]
        lev = compare_levelsets(
            cball,
            cdy,
            E.weights[ids],
            p_grid=cfg.p_grid,
            a1_budget=cfg.budgets.levelset_a1,
            a2_budget=cfg.budgets.levelset_a2,
        )
        return eps, {
            "alpha0": alpha0,
            "packing_R_union_B": rub,
            "packing_Gstar": rg,
            "verify": ver,
            "levelsets": lev,
        }

    jobs = max(1, int(cfg.jobs))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(verify_one, cfg.eps_grid))
    else:
        results = [verify_one(e) for e in cfg.eps_grid]
    report["eps"] = {f"{eps}": out for eps, out in results}

    report["eps_scaling"] = {
        "R_union_B": eps_scaling_chart(
            [report["eps"][f"{e}"]["packing_R_union_B"] for e in cfg.eps_grid]
        ),
        "Gstar": eps_scaling_chart(
            [report["eps"][f"{e}"]["packing_Gstar"] for e in cfg.eps_grid]
        ),
    }
    report["apertures"] = {
        f"{a}": {
            f"{p}": compare_apertures(FS, a, p, certified=cert)
            for p in cfg.p_grid
        }
        for a in cfg.alpha_grid
    }

    hard = [
        ("adr", grid["adr"].passed),
        ("corona_packing", RC.corona.packing_measured <= 16.0),
        ("principal_packing", report["principal"]["pass"]),
        ("embedding", bool(holds)),
    ]
    c2s = []
    for e in cfg.eps_grid:
        d = report["eps"][f"{e}"]
        hard.append((f"packing_R_union_B_{e}", d["packing_R_union_B"]["pass"]))
        hard.append((f"packing_Gstar_{e}", d["packing_Gstar"]["pass"]))
        hard.append((f"pointwise_C1_{e}", d["verify"]["C1_pass"]))
        hard.append((f"levelsets_{e}", d["levelsets"]["pass"]))
        if d["verify"]["C2"] > 0:
            c2s.append((e, d["verify"]["C2"]))
    if len(c2s) >= 2:
        # growth-direction stability: no super-eps^{-2} growth of the lhs.
        # (the smallest passing C2 may honestly DECAY when the eps^{-2}
        # packing law is not saturated; only growth falsifies the bound)
        growth = max(
            cb / ca
            for (eb, cb) in c2s
            for (ea, ca) in c2s
            if eb < ea
        )
        report["C2_growth"] = growth
        hard.append(
            ("C2_growth", growth <= cfg.budgets.carleson_c2_stability)
        )
    for a in cfg.alpha_grid:
        for p in cfg.p_grid:
            r = report["apertures"][f"{a}"][f"{p}"]
            hard.append((f"aperture_{a}_p{p}", 1.0 <= r <= cfg.budgets.aperture_k4))
    report["hard_checks"] = [[name, bool(ok)] for name, ok in hard]
    report["pass"] = all(ok for _, ok in hard)
    return report


# ---------------------------------------------------------------------------
# outputs
# ---------------------------------------------------------------------------


def canonical_json(obj) -> str:
    def default(x):
        if isinstance(x, (np.floating,)):
            return float(x)
        if isinstance(x, (np.integer,)):
            return int(x)
        if isinstance(x, np.ndarray):
            return x.tolist()
        raise TypeError(f"not JSON-serializable: {type(x)}")

    return json.dumps(obj, sort_keys=True, indent=1, default=default)


def write_outputs(cfg: RunConfig, grid, regions, approx, report, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(canonical_json(report))

    rows = ["eps,family,Lambda,bound,pass"]
    for e in cfg.eps_grid:
        d = report["eps"][f"{e}"]
        for fam in ("packing_R_union_B", "packing_Gstar"):
            r = d[fam]
            rows.append(
                f"{e!r},{fam.split('packing_')[1]},{r['Lambda']!r},{r['bound']!r},{int(r['pass'])}"
            )
    rows.append(f"0,principal,{report['principal']['Lambda']!r},,"
                f"{int(report['principal']['pass'])}")
    (out / "packing.csv").write_text("\n".join(rows) + "\n")

    FS = approx["FS"]
    E = grid["E"]
    first_eps = cfg.eps_grid[0]
    A0 = approx["per_eps"][first_eps]["A"]
    ns = FS.n_star(None)
    nsa = {a: FS.n_star(a) for a in cfg.alpha_grid}
    sq = FS.square_function()
    cd = FS.carleson_dyadic(A0.tv_box)
    header = (
        ["sample", "x0", "x1", "n_star"]
        + [f"n_star_a{a}" for a in cfg.alpha_grid]
        + ["square", f"cd_tv_eps{first_eps}"]
    )
    rows = [",".join(header)]
    for i in range(E.n_samples):
        vals = (
            [i, E.points[i, 0], E.points[i, 1], ns[i]]
            + [nsa[a][i] for a in cfg.alpha_grid]
            + [sq[i], cd[i]]
        )
        rows.append(",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in vals))
    (out / "functionals.csv").write_text("\n".join(rows) + "\n")

    rows = ["eps,box_a,box_b,axis,area,jump_mass"]
    for e in cfg.eps_grid:
        A = approx["per_eps"][e]["A"]
        for a, b, axis, area, mass in A.jump_facets:
            rows.append(f"{e!r},{a},{b},{axis},{area!r},{mass!r}")
    (out / "tv.csv").write_text("\n".join(rows) + "\n")

    summary = {
        "pass": report["pass"],
        "hard_checks": report["hard_checks"],
        "first_failure": next(
            (name for name, ok in report["hard_checks"] if not ok), None
        ),
    }
    (out / "acceptance.json").write_text(canonical_json(summary))
    return summary


def run(cfg: RunConfig, out_dir=None, cache_dir=None):
    """Full pipeline; returns (report, summary)."""
    if cache_dir:
        try:
            grid = load_stage(cache_dir, cfg, "grid")
        except RuntimeError:
            grid = stage_grid(cfg)
            save_stage(cache_dir, cfg, "grid", grid)
        try:
            regions = load_stage(cache_dir, cfg, "regions")
        except RuntimeError:
            regions = stage_regions(cfg, grid)
            save_stage(cache_dir, cfg, "regions", regions)
    else:
        grid = stage_grid(cfg)
        regions = stage_regions(cfg, grid)
    approx = stage_approximate(cfg, grid, regions)
    report = stage_verify(cfg, grid, regions, approx)
    summary = write_outputs(
        cfg, grid, regions, approx, report, out_dir or cfg.out_dir
    )
    return report, summary
