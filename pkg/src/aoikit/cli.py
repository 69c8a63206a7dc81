"""Command line for the inspection toolkit.

Subcommands cover the full workflow: learn a golden profile, generate a
sample corpus, batch-inspect a corpus against its ground truth (writing
delimited summaries and figures side by side), simulate the conveyor
line, print KPI tables, and serve the HTTP API.

Errors print one machine-parsable ``ERROR: <message>`` line on stderr
and exit nonzero.
"""

from __future__ import annotations

import json
import sys
from fractions import Fraction
from pathlib import Path

import click

from .boardspec import DefectType
from .config import DEFAULT_CONFIG
from .demos import DEMO_DESIGNS, resolve_design
from .goldenlearn import assign_refdes, learn_golden, load_profile, save_profile
from .imageio import load_png
from .inspector import BoardMeta, InspectionEngine
from .lineio import LineBoard, LineMode, cycle_time_s, run_line
from .metrics import (
    MetricsWindow,
    RoiInputs,
    availability_pct,
    confusion_rates,
    format_cents,
    mtbf_hours,
    replay_month,
    roi_report,
)
from .records import RecordStore
from .report import fig_cycle_curve, render_report
from .synthgen import STANDARD_NUISANCE, gen_corpus, load_manifest, render_board


def _fail(message: str) -> None:
    click.echo(f"ERROR: {message}", err=True)
    sys.exit(1)


@click.group()
@click.version_option(version="0.1.0", prog_name="aoikit")
def main() -> None:
    """Optical inspection toolkit: learn, inspect, simulate, serve."""


@main.command()
@click.option("--image", "image_path", required=True,
              type=click.Path(exists=True), help="Golden board photo (PNG).")
@click.option("--design", "design_ref", required=True,
              help="Builtin design name or path to a design document.")
@click.option("--width-in", type=float, default=None,
              help="Board width in inches (default: from the design).")
@click.option("--height-in", type=float, default=None,
              help="Board height in inches (default: from the design).")
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Directory for the learned profile.")
def setup(image_path: str, design_ref: str, width_in, height_in,
          out_dir: str) -> None:
    """Learn a digital profile from one golden board image."""
    try:
        design = resolve_design(design_ref)
        image = load_png(image_path)
        w = width_in if width_in is not None else design.width_in
        h = height_in if height_in is not None else design.height_in
        profile = learn_golden(image, w, h, design.design_id, DEFAULT_CONFIG)
        profile = assign_refdes(profile, design)
        save_profile(profile, image, out_dir)
    except Exception as exc:
        _fail(str(exc))
    click.echo(f"learned {len(profile.profiles)} components "
               f"in {profile.learn_ms:.0f} ms")
    click.echo(f"profile saved to {out_dir}")


@main.command("gen-corpus")
@click.option("--design", "design_ref", required=True,
              help="Builtin design name or path to a design document.")
@click.option("--boards", type=int, default=20, show_default=True)
@click.option("--rate", type=float, default=0.05, show_default=True,
              help="Per-component defect probability.")
@click.option("--seed", type=int, default=1, show_default=True)
@click.option("--ppi", type=float, default=50.0, show_default=True,
              help="Render resolution, pixels per inch.")
@click.option("--out", "out_dir", required=True, type=click.Path())
def gen_corpus_cmd(design_ref: str, boards: int, rate: float, seed: int,
                   ppi: float, out_dir: str) -> None:
    """Render a synthetic corpus with its ground-truth manifest."""
    try:
        design = resolve_design(design_ref)
        manifest = gen_corpus(design, boards, rate, seed, ppi, out_dir)
    except Exception as exc:
        _fail(str(exc))
    defects = sum(len(p.entries) for p in manifest.plans())
    click.echo(f"wrote {boards} boards ({defects} injected defects) "
               f"to {out_dir}")


@main.command()
@click.option("--profile", "profile_dir", required=True,
              type=click.Path(exists=True), help="Learned profile directory.")
@click.option("--corpus", "corpus_dir", required=True,
              type=click.Path(exists=True),
              help="Corpus directory with boards/ and manifest.json.")
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Report directory (CSV plus figures).")
@click.option("--store", "store_dir", type=click.Path(), default=None,
              help="Optional record store to append results to.")
def inspect(profile_dir: str, corpus_dir: str, out_dir: str,
            store_dir) -> None:
    """Batch-inspect a corpus and score it against its manifest."""
    try:
        profile, golden = load_profile(profile_dir)
        manifest = load_manifest(Path(corpus_dir) / "manifest.json")
    except Exception as exc:
        _fail(str(exc))
    engine = InspectionEngine(profile, golden, DEFAULT_CONFIG)
    store = RecordStore(store_dir) if store_dir else None
    records, plans = [], {}
    for plan in manifest.plans():
        path = Path(corpus_dir) / "boards" / f"{plan.serial}.png"
        if not path.exists():
            _fail(f"missing board image {path}")
        record = engine.inspect_board(load_png(path),
                                      BoardMeta(serial=plan.serial),
                                      image_ref=str(path))
        records.append(record)
        plans[plan.serial] = plan
        if store is not None:
            store.put_record(record)
    try:
        confusion = confusion_rates(records, plans)
    except Exception as exc:
        _fail(str(exc))
    area = None
    if profile.pixels_per_inch > 0:
        area = (golden.shape[1] / profile.pixels_per_inch
                * golden.shape[0] / profile.pixels_per_inch)
    paths = render_report(out_dir, records, confusion, board_area_in2=area)
    click.echo(f"boards          {len(records)}")
    click.echo(f"components      {confusion.total_components}")
    click.echo(f"accuracy        {float(confusion.accuracy) * 100:.2f}%")
    click.echo(f"overkill        {float(confusion.overkill_rate) * 100:.2f}%")
    click.echo(f"escape          {float(confusion.escape_rate) * 100:.2f}%")
    for p in paths:
        click.echo(f"wrote {p}")


@main.command("simulate-line")
@click.option("--profile", "profile_dir", required=True,
              type=click.Path(exists=True))
@click.option("--design", "design_ref", required=True)
@click.option("--boards", type=int, default=10, show_default=True)
@click.option("--rate", type=float, default=0.1, show_default=True)
@click.option("--seed", type=int, default=1, show_default=True)
@click.option("--mode", type=click.Choice([m.value for m in LineMode]),
              default=LineMode.INLINE.value, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Optional directory for the signal log and cycle figure.")
def simulate_line(profile_dir: str, design_ref: str, boards: int,
                  rate: float, seed: int, mode: str, out_dir) -> None:
    """Run boards through the simulated conveyor station."""
    try:
        design = resolve_design(design_ref)
        profile, golden = load_profile(profile_dir)
    except Exception as exc:
        _fail(str(exc))
    engine = InspectionEngine(profile, golden, DEFAULT_CONFIG)
    ppi = profile.pixels_per_inch
    from .synthgen import inject_defects  # local: only this command renders

    line_boards = []
    for i in range(boards):
        serial = f"SIM-{seed}-{i:04d}"
        plan = inject_defects(design, rate, seed * 1000 + i, serial)
        img = render_board(design, plan, ppi, seed=seed * 2000 + i,
                           nuisance=STANDARD_NUISANCE).image
        line_boards.append(LineBoard(serial=serial, image=img))
    report = run_line(engine, line_boards, design.width_in, design.height_in,
                      mode=LineMode(mode))
    s = report.summary()
    click.echo(f"mode            {s['mode']}")
    click.echo(f"boards          {s['boards']}")
    click.echo(f"defective       {s['defective_boards']}")
    click.echo(f"needs review    {s['needs_review']}")
    click.echo(f"cycle per board {cycle_time_s(design.width_in, design.height_in, LineMode(mode)):.1f} s")
    click.echo(f"simulated time  {s['sim_duration_s']:.1f} s")
    click.echo(f"throughput      {s['boards_per_hour']:.1f} boards/h")
    click.echo(f"final state     {s['final_state']}")
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "signals.log").write_text("\n".join(report.signal_log) + "\n")
        fig_cycle_curve(out / "cycle_curve.png",
                        design.width_in * design.height_in)
        click.echo(f"wrote {out / 'signals.log'}")
        click.echo(f"wrote {out / 'cycle_curve.png'}")


@main.command()
@click.option("--uptime-min", type=int, default=None,
              help="Window length in minutes.")
@click.option("--downtime-min", type=int, default=0, show_default=True)
@click.option("--breakdowns", type=int, default=0, show_default=True)
@click.option("--roi-json", type=click.Path(exists=True), default=None,
              help="JSON file with ROI inputs (cents and counts).")
def metrics(uptime_min, downtime_min: int, breakdowns: int, roi_json) -> None:
    """Print KPI and ROI tables."""
    if uptime_min is not None:
        try:
            window = MetricsWindow(uptime_min=uptime_min,
                                   downtime_min=downtime_min,
                                   breakdown_count=breakdowns)
        except ValueError as exc:
            _fail(str(exc))
        avail = availability_pct(window)
        click.echo(f"availability    {float(avail):.3f}%")
        mtbf = mtbf_hours(Fraction(uptime_min, 60), breakdowns)
        click.echo("mtbf            "
                   + ("n/a (no breakdowns)" if mtbf is None
                      else f"{float(mtbf):.1f} h"))
    if roi_json is not None:
        try:
            doc = json.loads(Path(roi_json).read_text())
            inputs = RoiInputs(
                first_pieces_per_day=int(doc["first_pieces_per_day"]),
                minutes_per_inspection=Fraction(
                    str(doc["minutes_per_inspection"])),
                labor_rate_cents_per_hour=int(doc["labor_rate_cents_per_hour"]),
                working_days_per_year=int(doc["working_days_per_year"]),
                cost_avoidance_cents_per_month=int(
                    doc["cost_avoidance_cents_per_month"]),
            )
        except (KeyError, ValueError) as exc:
            _fail(f"bad ROI inputs: {exc}")
        rep = roi_report(inputs)
        click.echo(f"labor savings   {format_cents(rep.labor_savings_cents_per_year)}/yr")
        click.echo(f"cost avoidance  {format_cents(rep.cost_avoidance_cents_per_year)}/yr")
        click.echo(f"total           {format_cents(rep.total_cents_per_year)}/yr")
    replay = replay_month()
    click.echo(f"month replay    {replay.total_boards} boards, "
               f"{replay.total_defective} defective, "
               f"{replay.total_components} components, "
               f"avg {float(replay.avg_boards_per_complete_day):.0f}/day")


@main.command()
@click.option("--data-dir", required=True, type=click.Path())
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8430, show_default=True)
def serve(data_dir: str, host: str, port: int) -> None:
    """Serve the HTTP API."""
    import uvicorn

    from .api import create_app

    uvicorn.run(create_app(data_dir), host=host, port=port, log_level="warning")


@main.command()
def designs() -> None:
    """List the builtin demo designs."""
    for name in sorted(DEMO_DESIGNS):
        d = DEMO_DESIGNS[name]()
        click.echo(f"{name}: {d.width_in:.0f}x{d.height_in:.0f} in, "
                   f"{len(d.components)} components")


if __name__ == "__main__":
    main()
