"""Simulate, estimate and verify nonstationary RCA(1) processes."""

from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from rca.exceptions import UsageError
from rca.services.dispatch_service import EXIT_OK, EXIT_USAGE, SUBCOMMANDS, CliInvocation, dispatch


class Command(BaseCommand):
    help = (
        "Run one RCA(1) subcommand against a plain-text config. Outputs go to --out: "
        "simulate -> trajectory.csv; estimate, profile-y -> estimates.csv; limit-f -> limit_f.csv; "
        "mc, surface, growth -> records.csv, summary.csv, verdict.txt, metrics.prom; "
        "report -> summary.csv, verdict.txt recomputed from records.csv. "
        "Every run also writes effective_config. "
        "Exit codes: 0 ok, 1 acceptance check failed, 2 usage/config error, 3 numerical failure."
    )

    def add_arguments(self, parser):
        parser.add_argument("subcommand", choices=SUBCOMMANDS)
        parser.add_argument(
            "--config", type=Path, help="Experiment config file (report defaults to OUT/effective_config)"
        )
        parser.add_argument("--out", type=Path, help="Output directory (default: RCA_OUTPUT_DIR)")
        parser.add_argument("--seed", type=int, help="Override experiment.seed")
        parser.add_argument("--threads", type=int, help="Worker threads for replications (default: RCA_THREADS)")
        parser.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="Override one config key; may be repeated",
        )

    def handle(self, *args, **options):
        try:
            inv = CliInvocation(
                subcommand=options["subcommand"],
                config_path=options["config"],
                overrides=tuple(options["overrides"]),
                out_dir=options["out"],
                seed=options["seed"],
                threads=options["threads"],
            )
        except UsageError as e:
            raise CommandError(str(e), returncode=EXIT_USAGE)

        code = dispatch(inv)
        if code != EXIT_OK:
            raise CommandError(f"{inv.subcommand} exited with status {code}", returncode=code)
        self.stdout.write(f"{inv.subcommand}: OK")
