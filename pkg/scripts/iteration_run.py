"""Iterate either the synthetic bump state or a strip extension.

The strip run uses the strict driver, so it reports where the inductive
bounds first fail; the bump run is non-strict and shows the defect decay.
"""
import json

import click

from isoext.demos import bump_state
from isoext.extension import extension_sweep, strip_data
from isoext.iteration import EscalationExhausted, Schedule, run


@click.command()
@click.option("--source", type=click.Choice(["bump", "strip"]), default="bump", show_default=True)
@click.option("--a", "a", default=0.4, show_default=True)
@click.option("--A", "A", default=16.0, show_default=True)
@click.option("--q-max", default=4, show_default=True)
@click.option("--out", default="iteration.csv", show_default=True)
def main(source, a, A, q_max, out):
    if source == "bump":
        state, strict = bump_state(), False
    else:
        state, strict = extension_sweep(strip_data(), [16.0, 32.0, 64.0, 128.0], 1.0).state, True
    sched = Schedule.for_state(state, a=a, A=A)
    try:
        result = run(state, sched, Q_max=q_max, tol=0.0, strict=strict)
    except EscalationExhausted as err:
        click.echo(f"stopped: {err}")
        click.echo(json.dumps(err.report.failures, indent=2))
        return
    result.report.write_csv(out)
    summary = result.report.summary()
    click.echo(f"defects {['%.3e' % d for d in result.report.defects()]}")
    click.echo(f"rate {summary['defect_rate']} (expected {summary['expected_defect_rate']:.3f})")
    click.echo(f"stop reason: {summary['stop_reason']}")


if __name__ == "__main__":
    main()
