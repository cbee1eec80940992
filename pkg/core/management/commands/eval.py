from pathlib import Path

from core.decorators import reports_tract_errors
from core.errors import BundleNameMismatchError, MissingInputError
from core.geometry import load_mask, load_tom
from core.helpers import atomic_output, write_manifest
from core.management.base import TractCommand
from core.metrics import evaluate

MASK_SUFFIX = "_mask.nii.gz"
TOM_SUFFIX = "_tom.nii.gz"


def discover_bundles(directory):
    """Nomes de bundle com par <nome>_mask.nii.gz + <nome>_tom.nii.gz."""
    directory = Path(directory)
    if not directory.is_dir():
        raise MissingInputError(f"diretório não encontrado: {directory}", path=directory)
    masks = {p.name[:-len(MASK_SUFFIX)] for p in directory.glob(f"*{MASK_SUFFIX}")}
    toms = {p.name[:-len(TOM_SUFFIX)] for p in directory.glob(f"*{TOM_SUFFIX}")}
    if masks != toms:
        unpaired = ", ".join(sorted(masks ^ toms))
        raise BundleNameMismatchError(f"bundles sem par máscara/TOM: {unpaired}", path=directory)
    return sorted(masks)


class Command(TractCommand):
    help = "Compara predições com referências: Dice das máscaras e erro angular médio das TOMs."

    def add_paths(self, parser):
        parser.add_argument("--pred-dir", required=True, help="diretório com <bundle>_mask/_tom preditos")
        parser.add_argument("--ref-dir", required=True, help="diretório com <bundle>_mask/_tom de referência")
        parser.add_argument("--output", required=True, help="relatório em texto")
        parser.add_argument("--records", help="relatório key=value (padrão: <output>.records.txt)")

    @reports_tract_errors
    def handle(self, *args, **options):
        config = self.resolve_config(options)
        pred_dir, ref_dir = Path(options["pred_dir"]), Path(options["ref_dir"])

        # ---- 1. bundles dos dois lados precisam bater
        pred_names = discover_bundles(pred_dir)
        ref_names = discover_bundles(ref_dir)
        if pred_names != ref_names:
            missing = ", ".join(sorted(set(pred_names) ^ set(ref_names)))
            raise BundleNameMismatchError(f"bundles diferentes entre predição e referência: {missing}")
        if not ref_names:
            raise MissingInputError(f"nenhum bundle em {ref_dir}", path=ref_dir)

        # ---- 2. métricas
        report = evaluate(
            pred_masks={n: load_mask(pred_dir / f"{n}{MASK_SUFFIX}") for n in pred_names},
            ref_masks={n: load_mask(ref_dir / f"{n}{MASK_SUFFIX}") for n in ref_names},
            pred_toms={n: load_tom(pred_dir / f"{n}{TOM_SUFFIX}") for n in pred_names},
            ref_toms={n: load_tom(ref_dir / f"{n}{TOM_SUFFIX}") for n in ref_names},
        )

        # ---- 3. relatórios
        output = Path(options["output"])
        records = Path(options.get("records") or f"{output}.records.txt")
        inputs = {"pred_dir": pred_dir, "ref_dir": ref_dir}
        counts = {"bundles": len(report.per_bundle)}
        for path, text in ((output, report.to_text()), (records, report.to_records())):
            with atomic_output(path) as tmp:
                tmp.write_text(text, encoding="utf-8")
            write_manifest(path, self.command_name, inputs, config.manifest_items(), counts)
            self.stdout.write(f"✔ {path}")
        self.stdout.write(report.to_text())
