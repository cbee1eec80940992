from core.decorators import reports_tract_errors
from core.errors import EmptyMaskError, GeometryMismatchError
from core.geometry import load_mask, load_peaks, load_tom, prune_peaks
from core.management.base import TractCommand
from core.streamlines import write_tck
from core.tracking import TrackingContext, orientation_field, track_bundle


class Command(TractCommand):
    help = (
        "Tracking bundle-específico na TOM (ou num campo derivado dela) com "
        "filtragem por máscara do trato e regiões de início/fim."
    )

    parameters = (
        "step_size_vox", "gaussian_std", "min_length_mm", "target_count", "max_steps",
        "max_attempt_factor", "peak_eps", "master_seed", "mode", "flavor",
        "prune_threshold", "prior_weight", "smooth", "threads",
    )

    def add_paths(self, parser):
        parser.add_argument("--tom", required=True, help="TOM .nii.gz (3 canais)")
        parser.add_argument("--tract-mask", required=True, help="máscara do trato")
        parser.add_argument("--start-mask", required=True, help="máscara da região de início")
        parser.add_argument("--end-mask", required=True, help="máscara da região de fim")
        parser.add_argument("--peaks", help="peak image original (9 canais) para best_orig/fused_prior/original")
        parser.add_argument("--output", required=True, help="tractograma .tck de saída")

    @reports_tract_errors
    def handle(self, *args, **options):
        config = self.resolve_config(options)
        cfg = config.tracker_config()

        # ---- 1. entradas no mesmo grid
        tom = load_tom(options["tom"])
        masks = {}
        for key in ("tract_mask", "start_mask", "end_mask"):
            path = options[key]
            masks[key] = load_mask(path)
            if not masks[key].geometry.same_as(tom.geometry):
                raise GeometryMismatchError(f"{key} fora do grid da TOM", path=path)
            if not masks[key].count:
                raise EmptyMaskError(f"{key} vazia: {path}", path=path)

        peaks = None
        if options.get("peaks"):
            peaks = load_peaks(options["peaks"])
            if not peaks.geometry.same_as(tom.geometry):
                raise GeometryMismatchError("peak image fora do grid da TOM", path=options["peaks"])

        # ---- 2. campo de orientação
        tom = prune_peaks(tom, config["prune_threshold"])
        field = orientation_field(config["flavor"], tom, peaks, config["prior_weight"])
        ctx = TrackingContext(field, masks["tract_mask"], masks["start_mask"], masks["end_mask"])

        # ---- 3. tracking
        report = track_bundle(ctx, cfg, threads=config["threads"], progress=self.show_progress)
        if report.budget_exhausted:
            self.stderr.write(self.style.WARNING(
                f"⚠ orçamento esgotado: {report.accepted} de {cfg.target_count} streamlines "
                f"em {report.attempts} tentativas"
            ))

        # ---- 4. saída
        inputs = {k: options.get(k) for k in ("tom", "tract_mask", "start_mask", "end_mask", "peaks")}
        counts = {
            "attempts": report.attempts,
            "accepted": report.accepted,
            "budget_exhausted": report.budget_exhausted,
            **{f"rejected.{reason}": n for reason, n in report.rejections.items()},
        }
        self.write_output(write_tck, report.tractogram, options["output"], inputs, config, counts)
        self.stdout.write(f"✔ {report.accepted} de {cfg.target_count} streamlines aceitas em {report.attempts} tentativas")
