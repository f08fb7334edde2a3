"""
Management command for the security analysis: I_AE curves, q_max and advantage tables, secure range.
"""

from timecoding_qkd.qkd.management.base import QKDCommand
from timecoding_qkd.qkd.services import get_security_service
from timecoding_qkd.qkd.services import get_simulation_service
from timecoding_qkd.qkd.services import inputs_from_reports


class Command(QKDCommand):
    help = "Compute security curves, tables or the secure range"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            "--mode",
            choices=("curves", "tables", "range"),
            default="curves",
            help="What to compute",
        )
        parser.add_argument(
            "--delta",
            type=float,
            nargs="+",
            help="Coherence losses (default security.deltas)",
        )
        parser.add_argument(
            "--qber",
            type=float,
            nargs="+",
            help="QBER values of the advantage columns, or the measured QBER in range mode",
        )
        parser.add_argument(
            "--from-reports",
            action="store_true",
            help="Take Q and delta from qber.json and coherence.json in the artifact directory",
        )
        parser.add_argument(
            "--q-max",
            type=float,
            help="Maximum tolerable QBER for range mode (default: computed from security.range_attack)",
        )
        parser.add_argument(
            "--monte-carlo",
            action="store_true",
            help="Cross-check the range model with simulated transmissions",
        )

    def run(self, context, **options):
        config = context.config
        service = get_security_service(context)
        deltas = options.get("delta") or list(config.get("security.deltas"))
        qbers = options.get("qber") or list(config.get("security.qbers"))
        if options.get("from_reports"):
            qbers, deltas = inputs_from_reports(context.store)
            self.stdout.write(f"From reports: Q = {qbers[0]:.4f}, deltas = {', '.join(f'{d:g}' for d in deltas)}")

        mode = options.get("mode") or "curves"
        if mode == "curves":
            entangling = service.entangling_curves(deltas)
            curves = service.curves(deltas, entangling)
            for curve in curves:
                q_max = "none" if curve.q_max is None else f"{curve.q_max:.4f}"
                self.stdout.write(f"{curve.attack.label}, delta {curve.delta:g}: q_max {q_max}")
            return service.write_curves(context.store, curves) + service.write_entangling(context.store, entangling)

        if mode == "tables":
            rows = service.tables(deltas, qbers)
            for row in rows:
                self.stdout.write(f"{row.attack.label}, delta {row.delta:g}: q_max {row.q_max:.4f}")
            return service.write_tables(context.store, rows, qbers)

        q_measured = qbers[0] if options.get("qber") or options.get("from_reports") else config.get("security.measured_qber")
        qber_at = None
        if options.get("monte_carlo"):
            qber_at = get_simulation_service(context).qber_at_transmission
        data = service.range(q_measured, options.get("q_max"), qber_at)
        self.stdout.write(
            f"Allowed attenuation {data['allowed_attenuation']:.2f} ({data['allowed_attenuation_db']:.2f} dB), "
            f"range {data['range_km']:.2f} km",
        )
        return service.write_range(context.store, data)
