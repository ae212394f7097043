"""Command-line interface.

    fmea-panel run    --config session.yaml [--until-round N] [--export out.csv] [--data-dir DIR]
    fmea-panel serve  --config session.yaml --port 8080 [--data-dir DIR] [--static-dir DIR]
    fmea-panel export --session <id> --format csv|json [--data-dir DIR] [--out PATH]

Exit codes: 0 success, 2 configuration error, 3 backend unavailable.
Structured JSON logs go to stderr; command results print to stdout.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from fmea_panel.config import ConfigError, load_config_file
from fmea_panel.engine import BackendError, NotFoundError, Session

EXIT_CONFIG = 2
EXIT_BACKEND = 3


class JsonLogFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        payload = {"level": record.levelname.lower(), "logger": record.name, "msg": record.getMessage()}
        if record.exc_info:
            payload["exc"] = self.formatException(record.exc_info)
        return json.dumps(payload, ensure_ascii=False)


def _setup_logging(verbose: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonLogFormatter())
    root = logging.getLogger()
    root.handlers = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)


def _fail(code: int, error: str, **fields) -> None:
    click.echo(json.dumps({"error": error, **fields}, ensure_ascii=False))
    sys.exit(code)


@click.group()
@click.option("--verbose", is_flag=True, default=False, help="Debug-level logs.")
def main(verbose: bool):
    """Multi-persona FMEA generation."""
    _setup_logging(verbose)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(), help="Session config YAML.")
@click.option("--until-round", type=click.IntRange(1, 4), default=None, help="Stop after this round.")
@click.option("--export", "export_path", type=click.Path(), default=None, help="Write the CSV export here.")
@click.option("--data-dir", type=click.Path(), default=None, help="Override the config's data_dir.")
def run(config_path: str, until_round: int | None, export_path: str | None, data_dir: str | None):
    """Run a session headlessly to finalization (or through --until-round)."""
    try:
        config = load_config_file(config_path)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, "invalid configuration", fields=[{"field": p, "message": m} for p, m in exc.errors])
        return
    try:
        session = Session.create(config, data_dir=data_dir)
    except Exception as exc:
        _fail(EXIT_CONFIG, f"session creation failed: {exc}")
        return

    logging.getLogger("fmea_panel.cli").info("session %s created under %s", session.session_id, session.session_dir)
    try:
        reports = session.run_to_completion(until_round=until_round)
    except BackendError as exc:
        _fail(EXIT_BACKEND, str(exc), session_id=session.session_id)
        return

    if export_path:
        Path(export_path).parent.mkdir(parents=True, exist_ok=True)
        Path(export_path).write_bytes(session.export("csv"))
    elif not session.finalized:
        # Finalization writes the snapshot itself; partial runs export on request only.
        pass
    click.echo(
        json.dumps(
            {
                "session_id": session.session_id,
                "session_dir": str(session.session_dir),
                "finalized": session.finalized,
                "rounds": [r.to_payload() for r in reports],
                "export": export_path or (str(session.session_dir / "fmea.csv") if session.finalized else None),
            },
            ensure_ascii=False,
        )
    )


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(), help="Server config YAML (data_dir, defaults).")
@click.option("--port", type=int, default=8080, show_default=True)
@click.option("--host", type=str, default="127.0.0.1", show_default=True)
@click.option("--data-dir", type=click.Path(), default=None, help="Override the config's data_dir.")
@click.option("--static-dir", type=click.Path(), default=None, help="Serve a built UI from this directory at /ui.")
def serve(config_path: str, port: int, host: str, data_dir: str | None, static_dir: str | None):
    """Serve the REST API for the review UI."""
    import uvicorn

    from fmea_panel.service import create_app

    try:
        config = load_config_file(config_path)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, "invalid configuration", fields=[{"field": p, "message": m} for p, m in exc.errors])
        return
    resolved_data = Path(data_dir) if data_dir else config.resolve(config.data_dir)
    app = create_app(data_dir=resolved_data, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")


@main.command()
@click.option("--session", "session_id", required=True, help="Session id to export.")
@click.option("--format", "export_format", type=click.Choice(["csv", "json"]), default="csv", show_default=True)
@click.option("--data-dir", type=click.Path(), default="./data", show_default=True)
@click.option("--out", type=click.Path(), default=None, help="Output path (stdout when omitted).")
def export(session_id: str, export_format: str, data_dir: str, out: str | None):
    """Export a session's FMEA table (draft rows included on unfinalized sessions)."""
    try:
        session = Session.open(Path(data_dir) / session_id)
    except NotFoundError as exc:
        _fail(EXIT_CONFIG, str(exc))
        return
    payload = session.export(export_format)
    if out:
        Path(out).write_bytes(payload)
        click.echo(json.dumps({"session_id": session_id, "written": out}, ensure_ascii=False))
    else:
        sys.stdout.buffer.write(payload)


if __name__ == "__main__":
    main()
