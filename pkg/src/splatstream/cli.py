"""Command-line entry points: serve, run, evaluate, and helpers."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import click

from . import server as server_mod
from .abr import default_ladder, ladder_from_config
from .harness import (ServerUnreachable, export_session_report,
                      load_bandwidth_trace, load_movement_trace, run_session)
from .metrics import evaluate_session_dir
from .model import ModelRegistry, UnknownModel


@click.group()
@click.option("--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool) -> None:
    """Remote-rendering adaptive streaming for Gaussian splat scenes."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--model-root", type=click.Path(path_type=Path), required=True,
              help="Directory of <model_id>/point_cloud.ply scenes.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8443, show_default=True, type=int)
@click.option("--cert", "cert_path", type=click.Path(path_type=Path), default=None)
@click.option("--key", "key_path", type=click.Path(path_type=Path), default=None)
@click.option("--eviction-timeout", default=300.0, show_default=True, type=float)
@click.option("--eviction-period", default=30.0, show_default=True, type=float)
@click.option("--inflight-cap", default=None, type=int,
              help="Max concurrent renders (default 4x logical cores).")
@click.option("--static-dir", type=click.Path(path_type=Path), default=None)
@click.option("--transport", type=click.Choice(["h3", "h1"]), default="h3",
              show_default=True)
@click.option("--h1-fallback", is_flag=True,
              help="Enable the HTTP/1.1 fallback listener.")
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None,
              help="JSON config file; flags override its values.")
def serve(model_root, host, port, cert_path, key_path, eviction_timeout,
          eviction_period, inflight_cap, static_dir, transport, h1_fallback,
          config_path) -> None:
    """Start the render backend."""
    kwargs = dict(model_root=model_root, host=host, port=port,
                  cert_path=cert_path, key_path=key_path,
                  eviction_timeout=eviction_timeout,
                  eviction_period=eviction_period,
                  h1_fallback=h1_fallback)
    if inflight_cap is not None:
        kwargs["inflight_cap"] = inflight_cap
    if static_dir is not None:
        kwargs["static_dir"] = static_dir
    if config_path is not None:
        config = server_mod.ServerConfig.from_file(config_path, **kwargs)
    else:
        config = server_mod.ServerConfig(**kwargs)
    try:
        server_mod.serve(config, transport=transport)
    except server_mod.TransportUnavailable as exc:
        raise click.ClickException(str(exc)) from exc


@main.command()
@click.option("--endpoint", required=True, help="Backend base URL.")
@click.option("--model", "model_id", required=True)
@click.option("--trace", type=click.Path(path_type=Path, exists=True), required=True,
              help="Movement trace CSV (t_ms,azimuth_deg,elevation_deg,tx,ty,tz).")
@click.option("--bandwidth", type=click.Path(path_type=Path, exists=True), default=None,
              help="Bandwidth trace CSV (t_ms,rate_kbps); enables shaping.")
@click.option("--ladder", "ladder_path", type=click.Path(path_type=Path, exists=True),
              default=None, help="JSON list of ladder rungs.")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None,
              help="Output directory for frames.csv, summary.json, samples.")
@click.option("--sample-stride", default=10, show_default=True, type=int)
@click.option("--virtual-time", is_flag=True,
              help="Force virtual-clock execution even without a bandwidth trace.")
def run(endpoint, model_id, trace, bandwidth, ladder_path, out_dir,
        sample_stride, virtual_time) -> None:
    """Replay a movement trace as one streaming session."""
    movement = load_movement_trace(trace)
    bw = load_bandwidth_trace(bandwidth) if bandwidth else None
    ladder = (ladder_from_config(json.loads(Path(ladder_path).read_text()))
              if ladder_path else default_ladder())
    try:
        log = run_session(endpoint, model_id, movement, bandwidth=bw, ladder=ladder,
                          sample_stride=sample_stride, out_dir=out_dir,
                          virtual_time=True if virtual_time else None)
    except ServerUnreachable as exc:
        raise click.ClickException(f"server unreachable: {exc}") from exc
    if out_dir is not None:
        summary = export_session_report(log, out_dir)
    else:
        import tempfile
        with tempfile.TemporaryDirectory() as tmp:
            summary = export_session_report(log, Path(tmp))
    click.echo(json.dumps(summary, indent=2))


@main.command()
@click.option("--model", "model_id", required=True)
@click.option("--model-root", type=click.Path(path_type=Path, exists=True), required=True)
@click.option("--session", "session_dir", type=click.Path(path_type=Path, exists=True),
              required=True, help="Harness output directory with samples.json.")
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
def evaluate(model_id, model_root, session_dir, out_path) -> None:
    """Score a recorded session against deterministic ground-truth renders."""
    registry = ModelRegistry.from_directory(model_root)
    try:
        with registry.lease(model_id) as prims:
            report = evaluate_session_dir(prims, session_dir)
    except UnknownModel as exc:
        raise click.ClickException(str(exc)) from exc
    Path(out_path).write_text(json.dumps(report, indent=2))
    click.echo(json.dumps(report, indent=2))


@main.command("synth-scene")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True,
              help="Model directory to create (point_cloud.ply inside).")
@click.option("--splats", default=1000, show_default=True, type=int)
@click.option("--seed", default=7, show_default=True, type=int)
def synth_scene(out_dir, splats, seed) -> None:
    """Generate a random demo scene."""
    from .synth import write_demo_model
    path = write_demo_model(out_dir, count=splats, seed=seed)
    click.echo(f"wrote {path}")


@main.command("abr-golden")
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
def abr_golden(out_path) -> None:
    """Regenerate the ABR conformance fixture used by the browser client."""
    from .conformance import write_fixture
    click.echo(f"wrote {write_fixture(out_path)}")


if __name__ == "__main__":
    main()
