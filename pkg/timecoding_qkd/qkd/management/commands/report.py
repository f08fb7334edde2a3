"""
Management command to collect every artifact of a run into report.md.
"""

from timecoding_qkd.qkd.management.base import QKDCommand
from timecoding_qkd.qkd.services import get_report_service


class Command(QKDCommand):
    help = "Produce missing artifacts and render a markdown report against the reference values"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            "--rerun",
            action="store_true",
            help="Recompute every artifact instead of reusing the ones on disk",
        )

    def run(self, context, **options):
        return [get_report_service(context).write(rerun=options.get("rerun", False))]
