from pathlib import Path

import numpy as np

from core.decorators import reports_tract_errors
from core.geometry import save_mask, save_peaks, save_tom
from core.management.base import TractCommand
from core.phantom import default_geometry, generate_phantom, perturb_peaks, synthesize_peaks
from core.streamlines import write_tck

# streams derivadas da semente do phantom (0 fica com as streamlines)
PERTURB_STREAM = 1
PEAKS_STREAM = 2


class Command(TractCommand):
    help = "Gera um phantom analítico (reto, arco ou U) com todos os alvos de referência."

    parameters = (
        "kind", "length_mm", "arc_radius_mm", "sweep_deg", "tube_radius_mm",
        "n_streamlines", "jitter_mm", "noise_angle_deg", "dropout", "dims", "spacing", "seed",
    )

    def add_paths(self, parser):
        parser.add_argument("--out-dir", required=True, help="diretório de saída")

    @reports_tract_errors
    def handle(self, *args, **options):
        config = self.resolve_config(options)
        spec = config.bundle_spec()
        geometry = default_geometry(config["dims"], config["spacing"])
        seed = config["seed"]

        # ---- 1. bundle e alvos exatos
        phantom = generate_phantom(spec, geometry, seed=seed)

        # ---- 2. "predição" perturbada e peak image original
        tom = perturb_peaks(
            phantom.tom_gt, spec.noise_angle_deg, spec.dropout,
            np.random.default_rng([seed, PERTURB_STREAM]),
        )
        peaks = synthesize_peaks(tom, np.random.default_rng([seed, PEAKS_STREAM]))

        # ---- 3. escrita
        out_dir = Path(options["out_dir"])
        counts = {"streamlines": len(phantom.tractogram), "tract_voxels": phantom.tract_mask_gt.count}
        outputs = (
            (write_tck, phantom.tractogram, "tractogram.tck"),
            (save_tom, phantom.tom_gt, "tom_gt.nii.gz"),
            (save_tom, tom, "tom.nii.gz"),
            (save_peaks, peaks, "peaks.nii.gz"),
            (save_mask, phantom.tract_mask_gt, "tract_mask.nii.gz"),
            (save_mask, phantom.endpoints_gt.start, "start_mask.nii.gz"),
            (save_mask, phantom.endpoints_gt.end, "end_mask.nii.gz"),
        )
        for save, obj, name in outputs:
            self.write_output(save, obj, out_dir / name, {}, config, counts)
