from core.decorators import reports_tract_errors
from core.geometry import save_tom
from core.management.base import TractCommand
from core.reference_prep import extract_tom


class Command(TractCommand):
    help = "Calcula o mapa de orientação do trato (TOM) de referência a partir de um TCK."

    parameters = ("meanshift_bandwidth", "meanshift_tol", "meanshift_merge_radius")

    def add_paths(self, parser):
        parser.add_argument("--input", required=True, help="tractograma .tck")
        parser.add_argument("--reference", help="NIfTI com o grid (obrigatório se o TCK não traz o grid)")
        parser.add_argument("--output", required=True, help="TOM .nii.gz (3 canais)")

    @reports_tract_errors
    def handle(self, *args, **options):
        config = self.resolve_config(options)
        tractogram = self.read_tractogram(options["input"], options.get("reference"))
        tom = extract_tom(tractogram, config.cluster_params(tractogram.geometry), progress=self.show_progress)
        self.write_output(
            save_tom, tom, options["output"],
            {"input": options["input"], "reference": options.get("reference")},
            config, {"streamlines": len(tractogram), "voxels": tom.support().count},
        )
