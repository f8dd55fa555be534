"""Plain-text summary of a run manifest."""
from __future__ import annotations

from pathlib import Path

from . import io


class MissingArtifact(FileNotFoundError):
    pass


def _load(manifest: str | Path) -> tuple[Path, dict]:
    p = Path(manifest)
    if p.is_dir():
        p = p / "manifest.json"
    if not p.exists():
        raise MissingArtifact(f"no manifest at {p}")
    data = io.read_json(p)
    for name in data.get("files", []):
        if not (p.parent / name).exists():
            raise MissingArtifact(f"manifest lists {name} but it is missing")
    return p, data


def _g(x, digits: int = 6) -> str:
    if x is None:
        return "-"
    if isinstance(x, str):
        return x
    return f"{x:.{digits}g}"


def report(manifest: str | Path) -> tuple[str, int]:
    """Markdown summary and exit code (1 iff any suite failed)."""
    path, data = _load(manifest)
    lines = [f"# {data['name']}", "", f"config hash: `{data['config_hash'][:16]}`  ",
             f"tool version: {data.get('tool_version', '?')}", ""]
    suites = data.get("suites", [])
    if suites:
        lines += ["## Suites", "", "| suite | result | worst dip | first failing radius |",
                  "|---|---|---|---|"]
        for s in suites:
            res = "PASS" if s["passed"] else "FAIL"
            where = s.get("radius")
            if not s["passed"] and where is None and s.get("beta") is not None:
                where = f"beta={s['beta']:g}"
            lines.append(f"| {s['name']} | {res} | {_g(s.get('worst'))} | {_g(where)} |")
        lines.append("")
        for s in suites:
            if not s["passed"]:
                where = s.get("radius")
                lines.append(f"FAIL {s['name']}" + (f" at r = {where:g}" if isinstance(where, float) else ""))
        lines.append("")

    if data.get("kind") == "experiment":
        fits = io.read_json(path.parent / "fits.json")["fits"] if (path.parent / "fits.json").exists() else {}
        if fits:
            lines += ["## Fitted growth exponents", "", "| field, center | nu | fit residual |", "|---|---|---|"]
            for key in sorted(fits):
                f = fits[key]
                lines.append(f"| {key} | {_g(f.get('nu'))} | {_g(f.get('residual'), 3)} |")
            lines.append("")
        sweep = path.parent / "sweep.csv"
        if sweep.exists():
            t = io.read_csv(sweep)
            lines += ["## Beta sweep", "", "| beta | overlap | weighted mass | Holder seminorm |",
                      "|---|---|---|---|"]
            for row in zip(t["beta"], t["overlap"], t["weighted_mass"], t["holder_seminorm_at_alpha"]):
                lines.append("| " + " | ".join(_g(x) for x in row) + " |")
            lines.append("")

    if data.get("kind") == "spectral":
        t = io.read_csv(path.parent / "spectral.csv")
        s = data["summary"]
        lines += ["## Cap eigenvalues", "", "| theta | lambda1 | gamma | phi |", "|---|---|---|---|"]
        imin = int(t["phi"].argmin())
        for j, row in enumerate(zip(t["theta"], t["lambda1"], t["gamma"], t["phi"])):
            cells = [_g(x) for x in row]
            if j == imin:
                cells = [f"**{c}**" for c in cells]
            lines.append("| " + " | ".join(cells) + " |")
        lines += ["", f"min phi = {_g(s['min_phi'])} at theta = {_g(s['argmin_theta'])}",
                  f"nu_ACF estimate = {_g(s['nu_acf_estimate'])} ({s['nu_caveat']})",
                  f"lambda1(full) = {_g(s['lambda1_full'])}",
                  f"lambda1(empty) = {_g(s['lambda1_empty'])}; Rayleigh quotient of y gives "
                  f"{_g(s['lambda1_empty_rayleigh_of_y'])}, the stated value is {_g(s['lambda1_empty_stated'])}",
                  ""]

    failed = any(not s["passed"] for s in suites)
    lines.append("overall: " + ("FAIL" if failed else "PASS"))
    return "\n".join(lines) + "\n", int(failed)
