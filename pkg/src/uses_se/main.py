"""CLI entry point for uses-se."""

import sys
import traceback

import click

from uses_se import __version__
from uses_se.commands.enhance import enhance
from uses_se.commands.evaluate import evaluate
from uses_se.commands.params import params
from uses_se.commands.separate import separate
from uses_se.commands.simulate import simulate
from uses_se.commands.train import train
from uses_se.exceptions import UsesError
from uses_se.output import get_formatter, setup_logging


class ExceptionHandlingGroup(click.Group):
    """Click group that handles UsesError exceptions globally."""

    def invoke(self, ctx: click.Context) -> None:
        """Invoke the command with exception handling."""
        try:
            super().invoke(ctx)
        except UsesError as e:
            debug = ctx.obj.get("debug", False) if ctx.obj else False
            no_color = ctx.obj.get("no_color", False) if ctx.obj else False
            formatter = get_formatter(no_color=no_color)

            if debug:
                formatter.output_error(f"{e.message}\n")
                traceback.print_exc(file=sys.stderr)
            else:
                formatter.output_error(e.message)

            sys.exit(e.exit_code)


@click.group(cls=ExceptionHandlingGroup, invoke_without_command=True)
@click.option(
    "--format",
    "output_format",
    type=click.Choice(["json", "table"], case_sensitive=False),
    default=None,
    envvar="USES_CLI_FORMAT",
    help="Output format (default: json)",
)
@click.option(
    "--no-color",
    is_flag=True,
    default=False,
    help="Disable colored output",
)
@click.option(
    "--debug",
    is_flag=True,
    default=False,
    envvar="USES_CLI_DEBUG",
    help="Show debug logs and full stack traces on errors",
)
@click.option(
    "--verbose",
    "-v",
    is_flag=True,
    default=False,
    help="Show progress logs on stderr",
)
@click.version_option(version=__version__, prog_name="uses-se")
@click.pass_context
def cli(
    ctx: click.Context, output_format: str | None, no_color: bool, debug: bool, verbose: bool
) -> None:
    """uses-se - Speech enhancement and separation for any microphone count,
    sampling rate and signal length."""
    ctx.ensure_object(dict)
    ctx.obj["output_format"] = output_format or "json"
    ctx.obj["no_color"] = no_color
    ctx.obj["debug"] = debug
    ctx.obj["verbose"] = verbose
    setup_logging(verbose=verbose, debug=debug, no_color=no_color)
    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())


# Register commands
cli.add_command(simulate)
cli.add_command(train)
cli.add_command(enhance)
cli.add_command(separate)
cli.add_command(evaluate)
cli.add_command(params)


if __name__ == "__main__":
    cli()
