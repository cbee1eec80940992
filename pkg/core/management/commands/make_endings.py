from core.decorators import reports_tract_errors
from core.geometry import save_mask
from core.management.base import TractCommand
from core.reference_prep import extract_endpoint_regions


class Command(TractCommand):
    help = "Extrai as máscaras das regiões de início e fim a partir das pontas das streamlines."

    parameters = ("dbscan_eps_factor", "dbscan_min_pts", "subset_size", "close_iters", "dilate_iters")

    def add_paths(self, parser):
        parser.add_argument("--input", required=True, help="tractograma .tck")
        parser.add_argument("--reference", help="NIfTI com o grid (obrigatório se o TCK não traz o grid)")
        parser.add_argument("--output-start", required=True, help="máscara da região de início")
        parser.add_argument("--output-end", required=True, help="máscara da região de fim")

    @reports_tract_errors
    def handle(self, *args, **options):
        config = self.resolve_config(options)
        tractogram = self.read_tractogram(options["input"], options.get("reference"))
        regions = extract_endpoint_regions(
            tractogram, config.cluster_params(tractogram.geometry),
            close_iters=config["close_iters"], dilate_iters=config["dilate_iters"],
        )
        inputs = {"input": options["input"], "reference": options.get("reference")}
        counts = {"start_voxels": regions.start.count, "end_voxels": regions.end.count}
        self.write_output(save_mask, regions.start, options["output_start"], inputs, config, counts)
        self.write_output(save_mask, regions.end, options["output_end"], inputs, config, counts)
