"""
Management command to simulate Bob's interferometer and estimate the pulse coherence.
"""

from timecoding_qkd.qkd.management.base import QKDCommand
from timecoding_qkd.qkd.services import get_coherence_service


class Command(QKDCommand):
    help = "Simulate per-sequence interferometer contrasts and estimate gamma_0, sigma_T and the coherence loss"

    def run(self, context, **options):
        service = get_coherence_service(context)
        run = service.run()
        estimate = run.estimate
        self.stdout.write(
            f"gamma_0 = {estimate.gamma_0:.4f}, sigma_T = {estimate.sigma_T:.2e}, "
            f"gamma_{estimate.k:g}sigma = {estimate.gamma_floor:.4f}",
        )
        if estimate.delta is not None:
            self.stdout.write(f"delta = {estimate.delta:.3f} (at gamma_0: {estimate.delta_at_gamma_0:.3f})")
        if estimate.noise_dominated:
            self.stdout.write(self.style.WARNING("contrast variance below shot noise, gamma_0 clamped to 0"))
        return service.write(context.store, run)
