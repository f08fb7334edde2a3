"""
Management command to simulate a full transmission and measure the QBER.
Writes qber.json and the detection records.
"""

from timecoding_qkd.qkd.management.base import QKDCommand
from timecoding_qkd.qkd.services import get_simulation_service


class Command(QKDCommand):
    help = "Simulate the key arm over all sequences, realign Bob's clock and measure the QBER"

    def run(self, context, **options):
        service = get_simulation_service(context)
        result = service.run_transmission()
        for line in result.diagnostics:
            self.stdout.write(self.style.WARNING(line))
        if result.Q is not None:
            self.stdout.write(f"QBER {result.Q:.4%} ({result.counts['errors']} errors / {result.counts['unambiguous']} validated)")
        return service.write(context.store, result)
