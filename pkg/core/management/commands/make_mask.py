from core.decorators import reports_tract_errors
from core.geometry import save_mask
from core.management.base import TractCommand
from core.streamlines import voxelize


class Command(TractCommand):
    help = "Voxeliza um tractograma (TCK) numa máscara binária do trato."

    def add_paths(self, parser):
        parser.add_argument("--input", required=True, help="tractograma .tck")
        parser.add_argument("--reference", help="NIfTI com o grid (obrigatório se o TCK não traz o grid)")
        parser.add_argument("--output", required=True, help="máscara .nii.gz")

    @reports_tract_errors
    def handle(self, *args, **options):
        config = self.resolve_config(options)
        tractogram = self.read_tractogram(options["input"], options.get("reference"))
        mask = voxelize(tractogram)
        self.write_output(
            save_mask, mask, options["output"],
            {"input": options["input"], "reference": options.get("reference")},
            config, {"streamlines": len(tractogram), "voxels": mask.count},
        )
