"""
openaudit/cli.py — Command-line interface for OpenAudit.

Commands:
    init --config FILE RUN_DIR       create a run directory
    run RUN_DIR [--strict]           drive the run to a verified end
    verify RUN_DIR                   replay-verify the event log
    status RUN_DIR [--json]          projected state and run metrics
    report RUN_DIR [--output DIR]    re-render the final report from the log
    unblock RUN_DIR TASK --reason    operator unblock of a blocked task
    export-script RUN_DIR OUT        recorded outputs as a scripted-agent script

Exit codes: 0 success, 1 usage or operator error, 2 verification failure or
report mismatch, 3 aborted run (or blocked tasks under --strict).
Errors print one line; no framework traceback reaches the terminal.
"""

import sys

import click
from rich.console import Console
from rich.table import Table

from openaudit.canonical import canonical_dumps
from openaudit.config import load_config
from openaudit.errors import OpenAuditError, RunAborted
from openaudit.logs import configure_logging
from openaudit.orchestrator import (
    cmd_export_script,
    cmd_init,
    cmd_report,
    cmd_run,
    cmd_status,
    cmd_unblock,
    cmd_verify,
)
from openaudit.types import RunStatus

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFICATION = 2
EXIT_ABORTED = 3

LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR"]


def _print_error(message: str) -> None:
    Console(stderr=True, soft_wrap=True).print(f"[bold red]Error:[/bold red] {message}", highlight=False)


class AuditGroup(click.Group):
    """Click group that maps every failure to the documented exit codes."""

    def main(self, *args, **kwargs):
        kwargs["standalone_mode"] = False
        try:
            rv = super().main(*args, **kwargs)
        except click.ClickException as e:
            _print_error(e.format_message())
            sys.exit(EXIT_USAGE)
        except click.Abort:
            _print_error("aborted")
            sys.exit(EXIT_USAGE)
        except RunAborted as e:
            _print_error(str(e))
            sys.exit(EXIT_VERIFICATION)
        except OpenAuditError as e:
            _print_error(str(e))
            sys.exit(EXIT_USAGE)
        sys.exit(rv if isinstance(rv, int) else EXIT_OK)


@click.group(cls=AuditGroup)
@click.option("--log-level", type=click.Choice(LOG_LEVELS, case_sensitive=False), default="WARNING")
@click.option("--log-json", is_flag=True, default=False, help="Emit structured logs as JSON lines")
def main(log_level, log_json):
    """OpenAudit — fail-closed, event-sourced security audits."""
    configure_logging(log_level.upper(), json_output=log_json)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.argument("run_dir", type=click.Path(file_okay=False))
def init(config_path, run_dir):
    """Create RUN_DIR and record run_initialized."""
    config = load_config(config_path)
    event = cmd_init(config, run_dir)
    click.echo(f"Initialized {event.payload['run_id']} in {run_dir}")


@main.command()
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--strict", is_flag=True, default=False, help="Exit 3 when the run ends with blocked tasks")
def run(run_dir, strict):
    """Run the audit until every task is done or blocked."""
    outcome = cmd_run(run_dir)
    console = Console()
    table = Table(title="Run outcome")
    table.add_column("Field", style="cyan")
    table.add_column("Value")
    table.add_row("status", outcome.status.value)
    table.add_row("tasks done", str(outcome.tasks_done))
    table.add_row("tasks blocked", str(outcome.tasks_blocked))
    table.add_row("rejections", str(outcome.rejections))
    table.add_row("events appended", str(outcome.appended))
    table.add_row("state hash", outcome.state_hash or "-")
    console.print(table)

    if outcome.status == RunStatus.ABORTED:
        _print_error(f"run aborted: {outcome.reason}")
        sys.exit(EXIT_ABORTED)
    if strict and outcome.status == RunStatus.COMPLETE_WITH_BLOCKED:
        _print_error(f"{outcome.tasks_blocked} task(s) blocked")
        sys.exit(EXIT_ABORTED)


@main.command()
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
def verify(run_dir):
    """Replay-verify the event log of RUN_DIR."""
    result = cmd_verify(run_dir)
    if not result.chain.valid:
        _print_error(
            f"chain invalid at sequence {result.chain.first_bad_sequence}: {result.chain.detail}"
        )
        sys.exit(EXIT_VERIFICATION)
    if result.error is not None:
        _print_error(f"log cannot be projected: {result.error}")
        sys.exit(EXIT_VERIFICATION)
    if result.matches_recorded is False:
        _print_error(
            f"state hash {result.state_hash} differs from recorded {result.recorded_hash}"
        )
        sys.exit(EXIT_VERIFICATION)
    recorded = "matches recorded verification" if result.matches_recorded else "no verification recorded yet"
    click.echo(f"OK {result.chain.events_checked} events, state {result.state_hash} ({recorded})")


@main.command()
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--json", "as_json", is_flag=True, default=False, help="Print machine-readable JSON")
def status(run_dir, as_json):
    """Show projected task status and run metrics."""
    report = cmd_status(run_dir)
    if as_json:
        click.echo(canonical_dumps(report))
    else:
        console = Console()
        if report.chain_valid:
            console.print(
                f"[bold]{report.run_id}[/bold] phase {report.current_phase}, "
                f"last event {report.last_sequence}, "
                f"{'verified' if report.verified else 'not verified'}",
                highlight=False,
            )
            table = Table(title="Tasks")
            table.add_column("Task", style="cyan")
            table.add_column("Phase")
            table.add_column("Kind")
            table.add_column("Status")
            table.add_column("Owner")
            table.add_column("Reason")
            for task in report.tasks:
                table.add_row(
                    task.task_id,
                    str(task.phase),
                    task.kind,
                    task.status.value,
                    task.owner or "",
                    task.block_reason or "",
                )
            console.print(table)
            console.print(
                f"Checks evaluated {report.checks_evaluated}/{report.checks_total}, "
                f"findings {report.findings}, artifacts {report.artifacts}",
                highlight=False,
            )
        if report.rejections:
            console.print(
                "Rejections: " + ", ".join(f"{code} {n}" for code, n in report.rejections.items()),
                highlight=False,
            )
    if not report.chain_valid:
        _print_error(report.error or "chain invalid")
        sys.exit(EXIT_VERIFICATION)


@main.command()
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--output", "output_dir", type=click.Path(file_okay=False), default=None,
              help="Directory to write the re-rendered report into")
def report(run_dir, output_dir):
    """Re-render the final report and compare it with the recorded digests."""
    check = cmd_report(run_dir, output_dir)
    for f in check.files:
        verdict = {True: "match", False: "MISMATCH", None: "not recorded"}[f.matches]
        click.echo(f"{f.path}: {verdict} ({f.rendered_sha256})")
    if check.partial:
        click.echo(f"Partial report rendered from event {check.source_sequence}")
    if not check.matches:
        _print_error("re-rendered report differs from the recorded artifact")
        sys.exit(EXIT_VERIFICATION)


@main.command()
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("task_id")
@click.option("--reason", required=True, help="Why the operator returns the task to todo")
def unblock(run_dir, task_id, reason):
    """Return a blocked task of the current phase to todo (operator only)."""
    event = cmd_unblock(run_dir, task_id, reason)
    click.echo(f"Unblocked {task_id} (event {event.sequence})")


@main.command("export-script")
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("output", type=click.Path(dir_okay=False))
@click.option("--actor", default=None, help="Only export dispatches to this agent")
def export_script(run_dir, output, actor):
    """Write recorded agent outputs as a replayable script."""
    count = cmd_export_script(run_dir, output, actor=actor)
    click.echo(f"Wrote {count} entries to {output}")


if __name__ == "__main__":
    main()
