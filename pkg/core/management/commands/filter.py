from core.decorators import reports_tract_errors
from core.errors import GeometryMismatchError
from core.geometry import OrientationMap, load_mask
from core.management.base import TractCommand
from core.streamlines import write_tck
from core.tracking import TrackingContext, filter_streamlines


class Command(TractCommand):
    help = "Mantém só as streamlines longas o bastante, dentro do trato e com pontas nas regiões."

    parameters = ("min_length_mm",)

    def add_paths(self, parser):
        parser.add_argument("--input", required=True, help="tractograma .tck")
        parser.add_argument("--tract-mask", required=True, help="máscara do trato")
        parser.add_argument("--start-mask", required=True, help="máscara da região de início")
        parser.add_argument("--end-mask", required=True, help="máscara da região de fim")
        parser.add_argument("--output", required=True, help="tractograma .tck filtrado")

    @reports_tract_errors
    def handle(self, *args, **options):
        config = self.resolve_config(options)
        masks = [load_mask(options[key]) for key in ("tract_mask", "start_mask", "end_mask")]
        geometry = masks[0].geometry
        for key, mask in zip(("start_mask", "end_mask"), masks[1:]):
            if not mask.geometry.same_as(geometry):
                raise GeometryMismatchError(f"{key} fora do grid da máscara do trato", path=options[key])

        # o grid das máscaras manda; o do header do TCK é ignorado
        tractogram = self.read_tractogram(options["input"], geometry=geometry)
        ctx = TrackingContext(OrientationMap.zeros(geometry), *masks)
        kept = filter_streamlines(tractogram, ctx, config["min_length_mm"])

        inputs = {k: options[k] for k in ("input", "tract_mask", "start_mask", "end_mask")}
        counts = {"input": len(tractogram), "kept": len(kept)}
        self.write_output(write_tck, kept, options["output"], inputs, config, counts)
